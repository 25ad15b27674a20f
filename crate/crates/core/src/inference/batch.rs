use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;

use super::client::{Completer, EndpointError};
use super::{prompt_hash, GenerationParams, ResponseRecord};
use crate::corpus::QuestionRef;
use crate::metrics::ShotSetting;

#[derive(Debug, Clone)]
pub struct BatchItem {
    pub question_ref: QuestionRef,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchStats {
    /// Prompts that received a response.
    pub completed: usize,
    /// HTTP requests issued, retries included.
    pub attempts: u32,
    /// Highest number of prompts in flight at once.
    pub max_in_flight: usize,
}

/// Sends every prompt once, at most `max_concurrency` at a time, and returns
/// the records in input order. The first failure stops new work from being
/// started and is returned with the id of the question it belongs to.
pub fn run_batch(
    items: &[BatchItem],
    completer: &dyn Completer,
    params: &GenerationParams,
    shot: ShotSetting,
    max_concurrency: usize,
) -> Result<(Vec<ResponseRecord>, BatchStats), (QuestionRef, EndpointError)> {
    let workers = max_concurrency.max(1).min(items.len());
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let in_flight = AtomicUsize::new(0);
    let max_in_flight = AtomicUsize::new(0);
    let attempts = AtomicU32::new(0);
    let slots: Mutex<Vec<Option<Result<ResponseRecord, EndpointError>>>> =
        Mutex::new(vec![None; items.len()]);

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                max_in_flight.fetch_max(now, Ordering::SeqCst);
                let outcome = completer.complete(&item.prompt, params);
                in_flight.fetch_sub(1, Ordering::SeqCst);
                let outcome = outcome.map(|c| {
                    attempts.fetch_add(c.attempts, Ordering::SeqCst);
                    ResponseRecord {
                        question_ref: item.question_ref.clone(),
                        shot_setting: shot,
                        prompt_hash: prompt_hash(&item.prompt),
                        response_text: c.text,
                        model_name: completer.model_name().to_owned(),
                        latency_ms: Some(c.latency_ms),
                    }
                });
                if outcome.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                slots.lock().expect("result slots poisoned")[i] = Some(outcome);
            });
        }
    });

    let slots = slots.into_inner().expect("result slots poisoned");
    let mut records = Vec::with_capacity(items.len());
    for (item, slot) in items.iter().zip(slots) {
        match slot {
            Some(Ok(r)) => records.push(r),
            Some(Err(e)) => return Err((item.question_ref.clone(), e)),
            // Not started because an earlier item failed; that failure is
            // reported when reached.
            None => continue,
        }
    }
    let stats = BatchStats {
        completed: records.len(),
        attempts: attempts.load(Ordering::SeqCst),
        max_in_flight: max_in_flight.load(Ordering::SeqCst),
    };
    Ok((records, stats))
}
