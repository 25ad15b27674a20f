//! Shared test support: brute-force reference implementations, a scripted
//! HTTP server and small datasets.
#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

// ---------------------------------------------------------------------------
// Oracles

/// Matched length by the anchoring recursion, written the slow way: every
/// (i, j) start is extended independently and the first longest run found
/// scanning i then j wins.
pub fn oracle_matches(a: &[char], b: &[char]) -> usize {
    let mut best = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best.2 {
                best = (i, j, k);
            }
        }
    }
    let (i, j, k) = best;
    if k == 0 {
        return 0;
    }
    k + oracle_matches(&a[..i], &b[..j]) + oracle_matches(&a[i + k..], &b[j + k..])
}

/// Longest common subsequence by memoised recursion.
pub fn oracle_lcs(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// (2M, |a|+|b|) for the anchoring variant.
pub fn oracle_gestalt(a: &str, b: &str) -> (usize, usize) {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    (2 * oracle_matches(&a, &b), a.len() + b.len())
}

pub fn oracle_lcs_ratio(a: &str, b: &str) -> (usize, usize) {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    (2 * oracle_lcs(&a, &b), a.len() + b.len())
}

pub fn oracle_value((m2, total): (usize, usize)) -> f64 {
    if total == 0 {
        1.0
    } else {
        m2 as f64 / total as f64
    }
}

/// All words over `alphabet` of length 0..=max_len, shortest first.
pub fn all_words(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for w in &layer {
            for &c in alphabet {
                let mut s = w.clone();
                s.push(c);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

// ---------------------------------------------------------------------------
// Datasets

pub const IGAKU_116A1: &str = r#"{"problem_id": "116A1", "problem_text": "Which of the following is incorrect regarding hypertension caused by obstructive sleep apnea?", "choices": {"a":"It often leads to nocturnal hypertension.", "b":"Weight reduction is recommended for obese patients.", "c":"Alpha-blockers are the first-line choice of medication.", "d":"Morning hypertension is frequently observed in home blood pressure measurements.", "e":"Continuous positive airway pressure (CPAP) therapy is expected to lower blood pressure."}, "text_only": true, "answer": ["c"]}"#;

pub const JJSIM_HBV: &str = r#"{"problem_text": "Which of the following is incorrect about recent cases of hepatitis B in Japan? Choose one.", "choices":{"a":"The HBs antigen positivity rate has significantly decreased due to the initiation of mother-to-child infection prevention programs.", "b":"HBV (hepatitis B virus) genotype Ae can become a carrier through horizontal transmission in adults.", "c":"In Japan, routine HBV vaccination began in October 2016.", "d":"HBV genotype C is more prevalent in the Tohoku and Miyako-Yaeyama regions.", "e":"Horizontal transmission of HBV during childhood is thought to be partly attributed to father-to-child transmission and communal living."}, "text_only": true, "answer": ["d"]}"#;

/// Five small questions in JSON Lines form, ids q1..q5.
pub fn toy_dataset() -> String {
    let rows = [
        ("q1", "Drug of choice for anaphylaxis?", ["adrenaline", "atropine", "insulin"], "a"),
        ("q2", "Vitamin deficient in scurvy?", ["vitamin A", "vitamin C", "vitamin D"], "b"),
        ("q3", "Organ producing insulin?", ["liver", "kidney", "pancreas"], "c"),
        ("q4", "Vector of malaria?", ["Anopheles mosquito", "tsetse fly", "sand fly"], "a"),
        ("q5", "Normal adult resting heart rate?", ["20-40 bpm", "60-100 bpm", "150-200 bpm"], "b"),
    ];
    rows.iter()
        .map(|(id, stem, ch, ans)| {
            json!({
                "problem_id": id,
                "problem_text": stem,
                "choices": {"a": ch[0], "b": ch[1], "c": ch[2]},
                "text_only": true,
                "answer": [ans],
            })
            .to_string()
                + "\n"
        })
        .collect()
}

/// Deterministic reply for a rendered prompt: the text of the last listed
/// choice whose line starts with "b: ", else "no idea".
pub fn toy_reply(prompt: &str) -> String {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("b: "))
        .map(|s| format!("I think {s}"))
        .unwrap_or_else(|| "no idea".into())
}

// ---------------------------------------------------------------------------
// Scripted HTTP server

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn chat(text: &str) -> Self {
        Self::status(
            200,
            json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string(),
        )
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

type Handler = dyn Fn(usize, &Value) -> Reply + Send + Sync;

/// Minimal HTTP/1.1 server on a loopback port. The handler receives the
/// zero-based request number and the parsed JSON body.
pub struct MockServer {
    pub addr: String,
    pub requests: Arc<AtomicUsize>,
    pub max_in_flight: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<Value>>>,
    pub auth_headers: Arc<Mutex<Vec<Option<String>>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &Value) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let handler: Arc<Handler> = Arc::new(handler);
        let requests = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let max_in_flight = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let auth_headers = Arc::new(Mutex::new(Vec::new()));
        {
            let (requests, max_in_flight, bodies, auth_headers) =
                (requests.clone(), max_in_flight.clone(), bodies.clone(), auth_headers.clone());
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { break };
                    let handler = handler.clone();
                    let requests = requests.clone();
                    let in_flight = in_flight.clone();
                    let max_in_flight = max_in_flight.clone();
                    let bodies = bodies.clone();
                    let auth_headers = auth_headers.clone();
                    thread::spawn(move || {
                        let _ = serve(stream, |body, auth| {
                            let n = requests.fetch_add(1, Ordering::SeqCst);
                            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                            max_in_flight.fetch_max(now, Ordering::SeqCst);
                            bodies.lock().unwrap().push(body.clone());
                            auth_headers.lock().unwrap().push(auth);
                            let reply = handler(n, body);
                            thread::sleep(reply.delay);
                            in_flight.fetch_sub(1, Ordering::SeqCst);
                            reply
                        });
                    });
                }
            });
        }
        Self {
            addr,
            requests,
            max_in_flight,
            bodies,
            auth_headers,
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Endpoint config text pointing at this server with fast retries.
    pub fn endpoint_toml(&self, max_concurrency: usize) -> String {
        format!(
            "base_url = \"{}\"\nmodel = \"mock-model\"\ntimeout_secs = 10\nmax_concurrency = {max_concurrency}\n\
             [retry]\nmax_retries = 3\nbase_backoff_ms = 5\nmax_backoff_ms = 20\n",
            self.addr
        )
    }
}

fn serve(stream: TcpStream, mut respond: impl FnMut(&Value, Option<String>) -> Reply) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut stream = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(());
        }
        let mut content_length = 0;
        let mut auth = None;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                match k.trim().to_ascii_lowercase().as_str() {
                    "content-length" => content_length = v.trim().parse().unwrap_or(0),
                    "authorization" => auth = Some(v.trim().to_owned()),
                    _ => {}
                }
            }
        }
        let mut body = vec![0; content_length];
        reader.read_exact(&mut body)?;
        let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let reply = respond(&body, auth);
        let head = format!(
            "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            reply.status,
            reply.body.len()
        );
        stream.write_all(head.as_bytes())?;
        stream.write_all(reply.body.as_bytes())?;
        stream.flush()?;
    }
}

/// Prompt text from a chat or completion request body.
pub fn prompt_of(body: &Value) -> String {
    body.pointer("/messages/0/content")
        .or_else(|| body.get("prompt"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned()
}

// ---------------------------------------------------------------------------
// Instruction generation

/// A reply in the requested one-pair-per-line format, single-quoted.
pub fn canned_generation_reply() -> String {
    let pairs = [
        ("What is the first-line treatment for deep vein thrombosis?", "Anticoagulation, usually with a direct oral anticoagulant or heparin."),
        ("Which test is used to rule out DVT in low-risk patients?", "A negative D-dimer test."),
        ("What imaging confirms a suspected DVT?", "Compression ultrasonography of the leg veins."),
        ("How long is anticoagulation continued after a provoked DVT?", "Usually three months."),
        ("What is a major complication of DVT?", "Pulmonary embolism."),
        ("Name a risk factor for venous thrombosis.", "Prolonged immobilisation, such as after surgery."),
        ("What is Virchow's triad?", "Stasis, endothelial injury and hypercoagulability."),
        ("When are thrombolytic agents considered for DVT?", "In extensive iliofemoral thrombosis with limb threat."),
        ("What does an IVC filter do?", "It traps emboli travelling from the legs to the lungs."),
        ("Who should receive an IVC filter?", "Patients with DVT who cannot be anticoagulated."),
        ("What is post-thrombotic syndrome?", "Chronic leg pain and swelling after a DVT."),
        ("Which score estimates the pre-test probability of DVT?", "The Wells score."),
        ("Is heparin safe in pregnancy?", "Low-molecular-weight heparin is preferred in pregnancy."),
        ("What laboratory value is monitored with unfractionated heparin?", "The activated partial thromboplastin time."),
        ("What reverses the effect of warfarin?", "Vitamin K, with prothrombin complex concentrate if bleeding is severe."),
    ];
    pairs
        .iter()
        .map(|(i, o)| format!("{{'instruction': '{i}', 'output': '{o}'}}\n"))
        .collect()
}

/// A reply made of well-formed, duplicated, broken and chatter lines.
pub fn fuzzed_generation_reply(rng: &mut impl rand::Rng) -> String {
    const PIECES: [&str; 10] = ["abc", "x y", "'", "\"", ",", ":", "{", "}", "å", "instruction"];
    let mut out = String::new();
    let n = rng.gen_range(0..25);
    for _ in 0..n {
        let k = rng.gen_range(0..6);
        let line = match k {
            0 => format!("{{'instruction': 'q{}', 'output': 'a{}'}}", rng.gen_range(0..5), rng.gen_range(0..3)),
            1 => format!("{{\"instruction\": \"q{}\", \"output\": \"a\"}}", rng.gen_range(0..5)),
            2 => "Here are the pairs:".to_owned(),
            3 => String::new(),
            _ => {
                let m = rng.gen_range(0..8);
                (0..m).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect::<Vec<_>>().join("")
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Random text mixing words, sentence ends, blank lines and wide characters.
pub fn random_article(rng: &mut impl rand::Rng) -> String {
    const PIECES: [&str; 12] = ["word", " ", "。", ". ", "\n", "\n\n", "患者", "!", "?", "  ", "é", "🙂"];
    let n = rng.gen_range(0..400);
    (0..n).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect()
}
