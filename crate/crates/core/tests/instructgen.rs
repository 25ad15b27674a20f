mod common;

use common::*;
use medqa_eval::inference::{Completer, Completion, EndpointError, GenerationParams};
use medqa_eval::instructgen::{
    build_generation_prompt, chunk_article, generate, parse_pairs, Article, PairCollector, GENERATION_TEMPLATE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn canned_reply_yields_fifteen_pairs() {
    let parsed = parse_pairs(&canned_generation_reply(), "dvt#0");
    assert_eq!(parsed.pairs.len(), 15);
    assert!(parsed.rejections.is_empty());
    assert_eq!(parsed.pairs[6].instruction, "What is Virchow's triad?");
    assert_eq!(parsed.pairs[0].output, "Anticoagulation, usually with a direct oral anticoagulant or heparin.");
    assert!(parsed.pairs.iter().all(|p| p.source_ref == "dvt#0"));
}

#[test]
fn malformed_lines_are_rejected_with_reasons() {
    let mut reply = canned_generation_reply();
    reply.push_str("{'instruction': 'orphan question'}\n");
    reply.push_str("{'instruction': '', 'output': 'x'}\n");
    reply.push_str("{'instruction': 'a', 'output': 'b', 'output': 'c'}\n");
    reply.push_str("{'instruction': 'unterminated\n");
    reply.push_str("Sure! Here you go.\n");
    reply.push_str(canned_generation_reply().lines().next().unwrap());
    let parsed = parse_pairs(&reply, "r");
    assert_eq!(parsed.pairs.len(), 15);
    let reasons: Vec<&str> = parsed.rejections.iter().map(|r| r.reason.as_str()).collect();
    assert_eq!(reasons[..3], ["missing field output", "empty field instruction", "duplicate field output"]);
    assert_eq!(reasons.len(), 4);
    assert_eq!(parsed.rejections[0].line, 16);
    let c = parsed.counts;
    assert_eq!((c.lines_seen, c.emitted, c.rejected, c.deduped, c.skipped), (20, 15, 4, 1, 1));
    assert!(c.conserved());
}

#[test]
fn conservation_holds_on_fuzzed_replies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut collector = PairCollector::new();
    for i in 0..300 {
        let reply = fuzzed_generation_reply(&mut rng);
        let parsed = collector.parse(&reply, &format!("f#{i}"));
        assert!(parsed.counts.conserved(), "{reply:?} -> {:?}", parsed.counts);
        assert_eq!(parsed.pairs.len(), parsed.counts.emitted);
        assert_eq!(parsed.rejections.len(), parsed.counts.rejected);
    }
}

#[test]
fn chunks_reassemble_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let text = random_article(&mut rng);
        let max = 1 + (text.len() % 97);
        let chunks = chunk_article(&text, max);
        assert_eq!(chunks.concat(), text);
        assert!(chunks.iter().all(|c| !c.is_empty() && c.chars().count() <= max));
    }
}

#[test]
fn prompt_embeds_chunk() {
    let p = build_generation_prompt("Heparin is an anticoagulant.", 1500).unwrap();
    assert!(p.starts_with("### Instructions:\n"));
    assert!(p.ends_with("### Input:\nHeparin is an anticoagulant."));
    assert!(p.contains("15 pairs"));
    assert_eq!(p, GENERATION_TEMPLATE.replace("{input_text}", "Heparin is an anticoagulant."));
    assert!(build_generation_prompt("", 1500).is_err());
    assert!(build_generation_prompt("abcd", 3).is_err());
}

struct Canned;

impl Completer for Canned {
    fn model_name(&self) -> &str {
        "canned"
    }

    fn complete(&self, _: &str, _: &GenerationParams) -> Result<Completion, EndpointError> {
        Ok(Completion {
            text: canned_generation_reply(),
            attempts: 1,
            latency_ms: 0,
        })
    }
}

#[test]
fn generation_dedups_across_chunks_and_reports() {
    let articles = [
        Article {
            id: "dvt".into(),
            text: "First paragraph about thrombosis.\n\nSecond paragraph about anticoagulants.".into(),
        },
        Article {
            id: "pe".into(),
            text: "Short.".into(),
        },
    ];
    let (pairs, report) = generate(&articles, GENERATION_TEMPLATE, 40, &Canned, &GenerationParams::default(), 2).unwrap();
    assert_eq!(report.chunks.len(), 3);
    let refs: Vec<&str> = report.chunks.iter().map(|c| c.source_ref.as_str()).collect();
    assert_eq!(refs, ["dvt#0", "dvt#1", "pe#0"]);
    assert_eq!(pairs.len(), 15);
    assert!(pairs.iter().all(|p| p.source_ref == "dvt#0"));
    assert_eq!(report.totals.lines_seen, 45);
    assert_eq!(report.totals.deduped, 30);
    assert!(report.totals.conserved());
    assert_eq!(report.requests, 3);
    assert_eq!(report.pairs_requested_per_call, 15);
    assert_eq!(report.model, "canned");
}
