//! Multi-threaded stress recording: each worker runs a seeded schedule of
//! pushes and pops against a shared stack, the recorder logs every event,
//! and the joined logs materialize into a complete history.
//!
//! Schedules are deterministic per (seed, thread); interleavings are not.

use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::{History, OpId};

use super::hsy::{HsyConfig, HsyStack};
use super::recorder::{materialize, value_id, Recorder, ThreadLog};
use super::treiber::TreiberStack;
use super::ts::TsStack;
use super::InstrumentedStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplKind {
    Treiber,
    Hsy,
    Ts,
}

impl ImplKind {
    pub fn name(&self) -> &'static str {
        match self {
            ImplKind::Treiber => "treiber",
            ImplKind::Hsy => "hsy",
            ImplKind::Ts => "ts",
        }
    }
}

impl std::str::FromStr for ImplKind {
    type Err = String;

    fn from_str(s: &str) -> Result<ImplKind, String> {
        match s {
            "treiber" => Ok(ImplKind::Treiber),
            "hsy" => Ok(ImplKind::Hsy),
            "ts" => Ok(ImplKind::Ts),
            other => Err(format!("unknown implementation {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StressConfig {
    pub impl_kind: ImplKind,
    pub threads: usize,
    pub ops_per_thread: usize,
    pub pop_ratio: f64,
    pub seed: u64,
    pub timeout: Duration,
}

impl StressConfig {
    pub fn new(impl_kind: ImplKind, threads: usize, ops_per_thread: usize, seed: u64) -> Self {
        StressConfig {
            impl_kind,
            threads,
            ops_per_thread,
            pop_ratio: 0.5,
            seed,
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("worker {thread} failed to quiesce within {timeout:?}")]
    Timeout { thread: usize, timeout: Duration },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// A recorded run: the complete history plus per-push timestamp intervals
/// (timestamped stack only) for law assertions.
#[derive(Debug)]
pub struct StressRun {
    pub history: History,
    pub warnings: Vec<String>,
    pub push_timestamps: HashMap<OpId, (u64, u64)>,
}

fn thread_rng_for(seed: u64, thread: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (thread as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn build_stack(cfg: &StressConfig) -> Arc<dyn InstrumentedStack + Send + Sync> {
    match cfg.impl_kind {
        ImplKind::Treiber => Arc::new(TreiberStack::new(cfg.threads, cfg.ops_per_thread)),
        ImplKind::Hsy => Arc::new(HsyStack::new(
            cfg.threads,
            cfg.ops_per_thread,
            HsyConfig::default(),
        )),
        ImplKind::Ts => Arc::new(TsStack::new(cfg.threads, cfg.ops_per_thread)),
    }
}

/// Run the schedules and materialize the history. All workers are joined
/// before anything is read, so the emitted history is complete.
pub fn record_stress(cfg: &StressConfig) -> Result<StressRun, HarnessError> {
    if cfg.threads == 0 || cfg.ops_per_thread == 0 {
        return Err(HarnessError::BadConfig(
            "threads and ops must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.pop_ratio) {
        return Err(HarnessError::BadConfig("pop ratio must be in [0, 1]".into()));
    }
    let stack = build_stack(cfg);
    let recorder = Arc::new(Recorder::new());
    let barrier = Arc::new(std::sync::Barrier::new(cfg.threads));
    let (tx, rx) = mpsc::channel::<(usize, ThreadLog)>();

    let mut handles = Vec::new();
    for thread in 0..cfg.threads {
        let stack = Arc::clone(&stack);
        let recorder = Arc::clone(&recorder);
        let barrier = Arc::clone(&barrier);
        let tx = tx.clone();
        let cfg = cfg.clone();
        handles.push(std::thread::spawn(move || {
            let mut rng = thread_rng_for(cfg.seed, thread);
            let mut log = ThreadLog::new(thread);
            let mut counter = 0u32;
            // All workers start together; without this, short schedules
            // serialize behind thread startup and never contend.
            barrier.wait();
            // Yielding between an operation's events is what makes intervals
            // overlap at all when there are fewer cores than workers.
            let maybe_yield = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.5) {
                    std::thread::yield_now();
                }
            };
            for _ in 0..cfg.ops_per_thread {
                if rng.gen_bool(cfg.pop_ratio) {
                    let op = log.inv_pop(&recorder);
                    maybe_yield(&mut rng);
                    let out = stack.pop(thread);
                    maybe_yield(&mut rng);
                    log.ret_pop(&recorder, op, out.value);
                    log.tag(op, out.tag);
                } else {
                    let value = value_id(thread, counter);
                    counter += 1;
                    let op = log.inv_push(&recorder, value);
                    maybe_yield(&mut rng);
                    let info = stack.push(thread, value);
                    maybe_yield(&mut rng);
                    log.ret_push(&recorder, op);
                    if let Some(ts) = info.timestamp {
                        log.push_timestamp(op, ts);
                    }
                }
            }
            let _ = tx.send((thread, log));
        }));
    }
    drop(tx);

    let mut logs: Vec<Option<ThreadLog>> = (0..cfg.threads).map(|_| None).collect();
    for _ in 0..cfg.threads {
        match rx.recv_timeout(cfg.timeout) {
            Ok((thread, log)) => logs[thread] = Some(log),
            Err(_) => {
                let thread = logs.iter().position(|l| l.is_none()).unwrap_or(0);
                return Err(HarnessError::Timeout {
                    thread,
                    timeout: cfg.timeout,
                });
            }
        }
    }
    for handle in handles {
        let _ = handle.join();
    }

    let out = materialize(logs.into_iter().map(|l| l.expect("all received")).collect());
    Ok(StressRun {
        history: out.history,
        warnings: out.warnings,
        push_timestamps: out.push_timestamps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::OpKind;

    #[test]
    fn single_thread_run_is_sequential() {
        let cfg = StressConfig::new(ImplKind::Treiber, 1, 4, 7);
        let run = record_stress(&cfg).unwrap();
        assert_eq!(run.history.op_count(), 4);
        assert!(run.warnings.is_empty());
        // One thread: operations are totally ordered.
        let ops = run.history.ops();
        for w in ops.windows(2) {
            assert!(w[0].ret_seq < w[1].inv_seq);
        }
    }

    fn schedule_of(run: &StressRun) -> Vec<Vec<(bool, Option<String>)>> {
        let mut per_thread: HashMap<String, Vec<(u64, bool, Option<String>)>> = HashMap::new();
        for op in run.history.ops() {
            let (is_pop, value) = match &op.kind {
                OpKind::Push { value } => (false, Some(value.clone())),
                OpKind::Pop { .. } => (true, None),
            };
            per_thread
                .entry(op.thread.clone())
                .or_default()
                .push((op.inv_seq, is_pop, value));
        }
        let mut threads: Vec<String> = per_thread.keys().cloned().collect();
        threads.sort();
        threads
            .into_iter()
            .map(|t| {
                let mut ops = per_thread.remove(&t).unwrap();
                ops.sort();
                ops.into_iter().map(|(_, p, v)| (p, v)).collect()
            })
            .collect()
    }

    #[test]
    fn same_seed_same_schedules() {
        let cfg = StressConfig::new(ImplKind::Ts, 3, 16, 99);
        let a = record_stress(&cfg).unwrap();
        let b = record_stress(&cfg).unwrap();
        assert_eq!(schedule_of(&a), schedule_of(&b));
    }

    #[test]
    fn concurrent_run_produces_complete_history() {
        for kind in [ImplKind::Treiber, ImplKind::Hsy, ImplKind::Ts] {
            let cfg = StressConfig::new(kind, 4, 25, 3);
            let run = record_stress(&cfg).unwrap();
            assert_eq!(run.history.op_count(), 100, "{}", kind.name());
            assert!(run.warnings.is_empty());
        }
    }
}
