//! Random and exhaustive history generation, mutation, and the
//! checker-versus-oracle equivalence campaign.
//!
//! Synthetic histories draw operation intervals on an integer timeline and
//! assign pop returns either by replaying a valid stack under one random
//! interleaving (linearizable by construction) or randomly (a mix of legal
//! and broken). Recorded trials run tiny real stress schedules. Every trial
//! compares the full pipeline verdict, under searched pop orders, against
//! the brute-force oracle; disagreements are persisted for inspection, never
//! swallowed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checker::Verdict;
use crate::elimination::{find_elimination_pairs, strip};
use crate::history::{emit_history, Event, EventPayload, History, OpId, PopResult};
use crate::matching::{derive_match, validate_match};
use crate::oracle::oracle_check;
use crate::pipeline::{decide, PipelineOptions, PopOrderMode};
use crate::stacks::{record_stress, ImplKind, StressConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Pop returns assigned by replaying a stack under one random
    /// interleaving of the drawn intervals.
    Legal,
    /// Pop returns chosen randomly: pushed values (possibly twice), empty,
    /// or rarely a value nobody pushed.
    Mixed,
}

/// One operation being assembled: method, value, and its two event slots.
struct OpDraft {
    is_pop: bool,
    value: Option<String>,
    pop_result: Option<PopResult>,
    inv: u64,
    ret: u64,
}

fn assign_threads(drafts: &[OpDraft]) -> Vec<String> {
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    order.sort_by_key(|&i| drafts[i].inv);
    let mut last_ret: Vec<u64> = Vec::new();
    let mut names = vec![String::new(); drafts.len()];
    for i in order {
        let inv = drafts[i].inv;
        match last_ret.iter().position(|&r| r < inv) {
            Some(t) => {
                last_ret[t] = drafts[i].ret;
                names[i] = format!("t{t}");
            }
            None => {
                names[i] = format!("t{}", last_ret.len());
                last_ret.push(drafts[i].ret);
            }
        }
    }
    names
}

fn build_history(drafts: &[OpDraft]) -> History {
    let threads = assign_threads(drafts);
    let mut events = Vec::with_capacity(drafts.len() * 2);
    for (i, draft) in drafts.iter().enumerate() {
        let op = OpId(i as u64 + 1);
        let (inv_payload, ret_payload) = if draft.is_pop {
            (
                EventPayload::InvPop,
                EventPayload::RetPop {
                    result: draft.pop_result.clone().expect("pop result assigned"),
                },
            )
        } else {
            (
                EventPayload::InvPush {
                    value: draft.value.clone().expect("push value assigned"),
                },
                EventPayload::RetPush,
            )
        };
        events.push(Event {
            seq: draft.inv,
            op,
            thread: threads[i].clone(),
            payload: inv_payload,
        });
        events.push(Event {
            seq: draft.ret,
            op,
            thread: threads[i].clone(),
            payload: ret_payload,
        });
    }
    let (h, warnings) = History::assemble(events, BTreeMap::new(), Default::default());
    debug_assert!(warnings.is_empty());
    h
}

/// Draw a random history with up to `max_ops` operations.
pub fn generate(rng: &mut ChaCha8Rng, max_ops: usize, pop_ratio: f64, mode: GenMode) -> History {
    let n = rng.gen_range(1..=max_ops);
    // Interval layout: each op id twice, shuffled; first occurrence is the
    // invocation.
    let mut slots: Vec<usize> = (0..n).flat_map(|i| [i, i]).collect();
    for i in (1..slots.len()).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    let mut drafts: Vec<OpDraft> = (0..n)
        .map(|_| OpDraft {
            is_pop: rng.gen_bool(pop_ratio),
            value: None,
            pop_result: None,
            inv: u64::MAX,
            ret: 0,
        })
        .collect();
    for (pos, &op) in slots.iter().enumerate() {
        let d = &mut drafts[op];
        if d.inv == u64::MAX {
            d.inv = pos as u64;
        } else {
            d.ret = pos as u64;
        }
    }
    let mut push_values = Vec::new();
    for (i, d) in drafts.iter_mut().enumerate() {
        if !d.is_pop {
            let v = format!("v{i}");
            push_values.push(v.clone());
            d.value = Some(v);
        }
    }
    match mode {
        GenMode::Legal => {
            // Pick one linearization point inside each interval, replay the
            // stack in that order, and use what it answers.
            let mut points: Vec<(f64, usize)> = drafts
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let p = rng.gen_range(0.0..1.0);
                    (d.inv as f64 + p * (d.ret as f64 - d.inv as f64), i)
                })
                .collect();
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
            let mut stack: Vec<String> = Vec::new();
            for (_, i) in points {
                if drafts[i].is_pop {
                    drafts[i].pop_result = Some(match stack.pop() {
                        Some(v) => PopResult::Value(v),
                        None => PopResult::Empty,
                    });
                } else {
                    stack.push(drafts[i].value.clone().unwrap());
                }
            }
        }
        GenMode::Mixed => {
            for i in 0..drafts.len() {
                if !drafts[i].is_pop {
                    continue;
                }
                let roll = rng.gen_range(0..100);
                drafts[i].pop_result = Some(if roll < 20 || push_values.is_empty() {
                    PopResult::Empty
                } else if roll < 25 {
                    PopResult::Value(format!("q{i}"))
                } else {
                    PopResult::Value(push_values[rng.gen_range(0..push_values.len())].clone())
                });
            }
        }
    }
    build_history(&drafts)
}

/// Visit every history with at most `max_ops` operations: all interval
/// layouts, all push/pop splits, and for each pop every pushed value or
/// empty. Enumeration order is deterministic.
pub fn for_each_small_history(max_ops: usize, mut f: impl FnMut(&History)) {
    for k in 1..=max_ops {
        let mut layout: Vec<usize> = Vec::with_capacity(2 * k);
        let mut state = vec![0u8; k];
        enumerate_layouts(k, &mut layout, &mut state, &mut |layout| {
            for mask in 0..(1u32 << k) {
                visit_assignments(k, layout, mask, &mut f);
            }
        });
    }
}

fn enumerate_layouts(
    k: usize,
    layout: &mut Vec<usize>,
    state: &mut Vec<u8>,
    f: &mut impl FnMut(&[usize]),
) {
    if layout.len() == 2 * k {
        f(layout);
        return;
    }
    for op in 0..k {
        if state[op] < 2 {
            // Emitting the second occurrence of `op` is its response.
            state[op] += 1;
            layout.push(op);
            enumerate_layouts(k, layout, state, f);
            layout.pop();
            state[op] -= 1;
        }
    }
}

fn visit_assignments(k: usize, layout: &[usize], mask: u32, f: &mut impl FnMut(&History)) {
    let pushes: Vec<usize> = (0..k).filter(|i| mask & (1 << i) == 0).collect();
    let pops: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
    let mut choice = vec![0usize; pops.len()];
    loop {
        let mut drafts: Vec<OpDraft> = (0..k)
            .map(|i| OpDraft {
                is_pop: mask & (1 << i) != 0,
                value: (mask & (1 << i) == 0).then(|| format!("v{i}")),
                pop_result: None,
                inv: u64::MAX,
                ret: 0,
            })
            .collect();
        for (pos, &op) in layout.iter().enumerate() {
            let d = &mut drafts[op];
            if d.inv == u64::MAX {
                d.inv = pos as u64;
            } else {
                d.ret = pos as u64;
            }
        }
        for (pi, &op) in pops.iter().enumerate() {
            drafts[op].pop_result = Some(if choice[pi] == 0 {
                PopResult::Empty
            } else {
                PopResult::Value(format!("v{}", pushes[choice[pi] - 1]))
            });
        }
        f(&build_history(&drafts));

        // Next assignment in mixed radix (pushes + 1 per pop).
        let mut carry = true;
        for c in choice.iter_mut() {
            if !carry {
                break;
            }
            *c += 1;
            if *c > pushes.len() {
                *c = 0;
            } else {
                carry = false;
            }
        }
        if carry {
            break;
        }
    }
}

/// Swap the returned values of two value pops.
pub fn mutate_value_swap(h: &History, rng: &mut ChaCha8Rng) -> Option<History> {
    let value_pops: Vec<OpId> = h
        .pops()
        .filter(|o| o.value().is_some())
        .map(|o| o.id)
        .collect();
    if value_pops.len() < 2 {
        return None;
    }
    let a = value_pops[rng.gen_range(0..value_pops.len())];
    let b = loop {
        let b = value_pops[rng.gen_range(0..value_pops.len())];
        if b != a {
            break b;
        }
    };
    let va = h.op(a).value().unwrap().to_string();
    let vb = h.op(b).value().unwrap().to_string();
    let events = h
        .events()
        .iter()
        .map(|ev| {
            let mut ev = ev.clone();
            if let EventPayload::RetPop { result } = &mut ev.payload {
                if ev.op == a {
                    *result = PopResult::Value(vb.clone());
                } else if ev.op == b {
                    *result = PopResult::Value(va.clone());
                }
            }
            ev
        })
        .collect();
    let (mutant, _) = History::assemble(events, h.removal_order().clone(), h.elim_marks().clone());
    Some(mutant)
}

/// Randomly permute the removal ranks (guaranteed not the identity).
pub fn mutate_rank_shuffle(h: &History, rng: &mut ChaCha8Rng) -> Option<History> {
    let entries: Vec<(OpId, u64)> = h.removal_order().iter().map(|(o, r)| (*o, *r)).collect();
    if entries.len() < 2 {
        return None;
    }
    let mut ranks: Vec<u64> = entries.iter().map(|(_, r)| *r).collect();
    loop {
        for i in (1..ranks.len()).rev() {
            let j = rng.gen_range(0..=i);
            ranks.swap(i, j);
        }
        if ranks.iter().zip(&entries).any(|(r, (_, orig))| r != orig) {
            break;
        }
    }
    let removal: BTreeMap<OpId, u64> = entries
        .iter()
        .zip(&ranks)
        .map(|((op, _), r)| (*op, *r))
        .collect();
    let (mutant, _) = History::assemble(h.events().to_vec(), removal, h.elim_marks().clone());
    Some(mutant)
}

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub trials: u64,
    pub max_ops: usize,
    pub seed: u64,
    pub mutate: bool,
    pub pop_ratio: f64,
    pub oracle_max_ops: usize,
    pub workers: usize,
}

impl Default for FuzzConfig {
    fn default() -> FuzzConfig {
        FuzzConfig {
            trials: 1000,
            max_ops: 8,
            seed: 0,
            mutate: false,
            pop_ratio: 0.5,
            oracle_max_ops: crate::oracle::DEFAULT_ORACLE_MAX_OPS,
            workers: std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1),
        }
    }
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("invalid fuzz configuration: {0}")]
    BadConfig(String),
    #[error("cannot persist disagreement: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default, Clone, serde::Serialize)]
pub struct FuzzReport {
    pub trials: u64,
    pub agreements: u64,
    pub disagreements: u64,
    pub disagreement_files: Vec<PathBuf>,
    pub violations_by_label: BTreeMap<String, u64>,
    pub mutants_tested: u64,
    pub mutants_oracle_rejected: u64,
    pub mutants_killed: u64,
    /// Cases where the stripped history was linearizable but the original
    /// was not; recorded for study, expected to stay zero.
    pub strip_soundness_violations: u64,
}

impl FuzzReport {
    fn absorb(&mut self, other: FuzzReport) {
        self.trials += other.trials;
        self.agreements += other.agreements;
        self.disagreements += other.disagreements;
        self.disagreement_files.extend(other.disagreement_files);
        for (label, n) in other.violations_by_label {
            *self.violations_by_label.entry(label).or_insert(0) += n;
        }
        self.mutants_tested += other.mutants_tested;
        self.mutants_oracle_rejected += other.mutants_oracle_rejected;
        self.mutants_killed += other.mutants_killed;
        self.strip_soundness_violations += other.strip_soundness_violations;
    }
}

/// Pipeline verdict under searched pop orders: the complete decision
/// procedure the campaign holds against the oracle.
pub fn pipeline_verdict(h: &History) -> Verdict {
    let opts = PipelineOptions {
        pop_order: PopOrderMode::Search,
        ..Default::default()
    };
    decide(h, &opts)
        .expect("search pipeline cannot fail within fuzz bounds")
        .verdict
}

/// Compare pipeline and oracle on one history; `Ok(agree)` unless the oracle
/// bound is exceeded.
pub fn verdicts_agree(h: &History, oracle_max_ops: usize) -> (Verdict, Verdict, bool) {
    let pipeline = pipeline_verdict(h);
    let oracle = oracle_check(h, oracle_max_ops).expect("within oracle bound");
    let agree = pipeline.is_linearizable() == oracle.is_linearizable();
    (pipeline, oracle, agree)
}

fn persist(dir: &Path, name: &str, h: &History) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, emit_history(h))?;
    Ok(path)
}

fn run_trial(cfg: &FuzzConfig, trial: u64, out_dir: &Path, report: &mut FuzzReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ trial.wrapping_mul(0x51_7c_c1_b7_27_22_0a_95));
    let history = if trial % 5 == 4 {
        // Tiny real concurrent run.
        let threads = 2;
        let per_thread = 1 + (trial / 5 % (cfg.max_ops as u64 / 2).max(1)) as usize;
        let per_thread = per_thread.min(cfg.max_ops / 2).max(1);
        let stress = StressConfig {
            pop_ratio: cfg.pop_ratio,
            ..StressConfig::new(
                match trial % 3 {
                    0 => ImplKind::Treiber,
                    1 => ImplKind::Hsy,
                    _ => ImplKind::Ts,
                },
                threads,
                per_thread,
                cfg.seed ^ trial,
            )
        };
        record_stress(&stress).expect("mini stress run").history
    } else {
        let mode = if trial % 2 == 0 { GenMode::Legal } else { GenMode::Mixed };
        generate(&mut rng, cfg.max_ops, cfg.pop_ratio, mode)
    };

    report.trials += 1;
    let (pipeline, oracle, agree) = verdicts_agree(&history, cfg.oracle_max_ops);
    if agree {
        report.agreements += 1;
    } else {
        report.disagreements += 1;
        if let Ok(path) = persist(out_dir, &format!("disagreement-{trial}.hist"), &history) {
            report.disagreement_files.push(path);
        }
    }
    if let Some(v) = pipeline.violation() {
        *report
            .violations_by_label
            .entry(v.label().to_string())
            .or_insert(0) += 1;
    }

    // Reduction soundness: a linearizable remainder must mean a
    // linearizable original. Only meaningful when a safe mapping exists;
    // histories where two pops claim one push are rejected upstream.
    if let Ok(m) = derive_match(&history) {
        if validate_match(&history, &m).is_ok() {
            let stripped = strip(&history, &find_elimination_pairs(&history, &m));
            let stripped_lin = oracle_check(&stripped, cfg.oracle_max_ops)
                .expect("stripping shrinks")
                .is_linearizable();
            let original_lin = oracle.is_linearizable();
            if stripped_lin && !original_lin {
                report.strip_soundness_violations += 1;
                if let Ok(path) =
                    persist(out_dir, &format!("strip-unsound-{trial}.hist"), &history)
                {
                    report.disagreement_files.push(path);
                }
            }
        }
    }

    if cfg.mutate {
        let mutant = if trial % 2 == 0 {
            mutate_value_swap(&history, &mut rng)
        } else {
            mutate_rank_shuffle(&history, &mut rng)
        };
        if let Some(mutant) = mutant {
            report.mutants_tested += 1;
            let oracle_rejects = !oracle_check(&mutant, cfg.oracle_max_ops)
                .expect("within bound")
                .is_linearizable();
            if oracle_rejects {
                report.mutants_oracle_rejected += 1;
                let searched_rejects = !pipeline_verdict(&mutant).is_linearizable();
                let recorded_rejects = if mutant
                    .pops()
                    .all(|p| mutant.removal_rank(p.id).is_some())
                {
                    let opts = PipelineOptions {
                        pop_order: PopOrderMode::Recorded,
                        ..Default::default()
                    };
                    match decide(&mutant, &opts) {
                        Ok(out) => !out.verdict.is_linearizable(),
                        // Corrupted rank metadata is a rejection too.
                        Err(_) => true,
                    }
                } else {
                    true
                };
                if searched_rejects && recorded_rejects {
                    report.mutants_killed += 1;
                } else if let Ok(path) =
                    persist(out_dir, &format!("mutant-escape-{trial}.hist"), &mutant)
                {
                    report.disagreement_files.push(path);
                }
            }
        }
    }
}

/// Run the campaign. Trials are independent and deterministic given the
/// seed; workers only change scheduling, never results.
pub fn fuzz(cfg: &FuzzConfig, out_dir: Option<&Path>) -> Result<FuzzReport, FuzzError> {
    if cfg.max_ops == 0 {
        return Err(FuzzError::BadConfig("max_ops must be positive".into()));
    }
    if cfg.max_ops > cfg.oracle_max_ops {
        return Err(FuzzError::BadConfig(format!(
            "max_ops {} exceeds the oracle bound {}",
            cfg.max_ops, cfg.oracle_max_ops
        )));
    }
    let default_dir = std::env::temp_dir().join(format!("stacklin-fuzz-{}", std::process::id()));
    let out_dir = out_dir.map(Path::to_path_buf).unwrap_or(default_dir);

    let workers = cfg.workers.max(1).min(cfg.trials.max(1) as usize);
    let next = std::sync::atomic::AtomicU64::new(0);
    let merged = Mutex::new(FuzzReport::default());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut local = FuzzReport::default();
                loop {
                    let trial = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if trial >= cfg.trials {
                        break;
                    }
                    run_trial(cfg, trial, &out_dir, &mut local);
                }
                merged.lock().unwrap().absorb(local);
            });
        }
    });
    let mut report = merged.into_inner().unwrap();
    report.disagreement_files.sort();
    Ok(report)
}
