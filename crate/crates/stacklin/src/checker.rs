//! Decides linearizability of a stripped history against a linear order of
//! its pops.
//!
//! Two rules are checked at each position i of the pop order, writing
//! `consumed(i)` for the pushes matched to earlier pops:
//!
//! * value pop: among pushes that precede the pop and are not consumed, the
//!   pop's own push must be present and no such push may be newer than it
//!   (the pop removes the latest value in the stack);
//! * empty pop: every push preceding the pop must be consumed, and no
//!   unconsumed push interleaving the pop may precede a consumed push.
//!
//! Passing every position certifies the history linearizable and the witness
//! builder then produces an explicit legal sequence. The searching variant
//! enumerates pop orders (backtracking over minimal elements) and turns the
//! rule pair into a complete decision procedure for stripped histories.

use std::collections::HashSet;

use thiserror::Error;

use crate::history::{History, OpId, Operation};
use crate::matching::{MatchMap, MatchViolation};
use crate::order::{happened_before, is_linear_extension};
use crate::witness::{linearize, WitnessError};

/// A linear extension of happened-before restricted to the pops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopOrder(pub Vec<OpId>);

pub const DEFAULT_MAX_SEARCH_POPS: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("pop {op} has no removal rank")]
    MissingRemovalRank { op: OpId },
    #[error("removal ranks do not form a linear extension of happened-before")]
    NotALinearExtension,
    #[error("history has {pops} pops, search bound is {bound}")]
    SearchBoundExceeded { pops: usize, bound: usize },
}

/// Why a history (or one pop order for it) is not linearizable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A pop returned a value that no push inserted.
    UnmatchedPopValue { pop: OpId, value: String },
    /// The pop-to-push mapping violates a safety clause.
    Match(MatchViolation),
    /// A value pop did not remove the newest available value: either its push
    /// does not precede it, or a newer unconsumed push precedes it.
    PopNotNewest {
        pop_index: usize,
        pop: OpId,
        push: OpId,
        newer_push: Option<OpId>,
    },
    /// An empty pop is preceded by a push whose value was never consumed.
    EmptyPopShadowed {
        pop_index: usize,
        pop: OpId,
        push: OpId,
    },
    /// An unconsumed push interleaving an empty pop precedes a push consumed
    /// by an earlier pop.
    EmptyPopOrder {
        pop_index: usize,
        pop: OpId,
        push: OpId,
        earlier_pop: OpId,
    },
    /// Exhaustive search found no legal linearization (oracle verdict).
    NoLinearization,
}

impl Violation {
    pub fn label(&self) -> &'static str {
        match self {
            Violation::UnmatchedPopValue { .. } => "unmatched-pop-value",
            Violation::Match(m) => m.label(),
            Violation::PopNotNewest { .. } => "pop-not-newest",
            Violation::EmptyPopShadowed { .. } => "empty-pop-shadowed",
            Violation::EmptyPopOrder { .. } => "empty-pop-order",
            Violation::NoLinearization => "no-linearization",
        }
    }

    /// 1-based position in the pop order, where applicable.
    pub fn pop_index(&self) -> Option<usize> {
        match self {
            Violation::PopNotNewest { pop_index, .. }
            | Violation::EmptyPopShadowed { pop_index, .. }
            | Violation::EmptyPopOrder { pop_index, .. } => Some(*pop_index),
            _ => None,
        }
    }

    /// Operations involved, most significant first.
    pub fn ops(&self) -> Vec<OpId> {
        match self {
            Violation::UnmatchedPopValue { pop, .. } => vec![*pop],
            Violation::Match(MatchViolation::ValueMismatch { pop, push }) => vec![*pop, *push],
            Violation::Match(MatchViolation::EmptyMismatch { pop }) => vec![*pop],
            Violation::Match(MatchViolation::DuplicateTarget { pop, other, push }) => {
                vec![*pop, *other, *push]
            }
            Violation::PopNotNewest { pop, push, newer_push, .. } => {
                let mut v = vec![*pop, *push];
                v.extend(newer_push);
                v
            }
            Violation::EmptyPopShadowed { pop, push, .. } => vec![*pop, *push],
            Violation::EmptyPopOrder { pop, push, earlier_pop, .. } => {
                vec![*pop, *push, *earlier_pop]
            }
            Violation::NoLinearization => vec![],
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::UnmatchedPopValue { pop, value } => {
                write!(f, "pop {pop} returned {value:?}, which no push inserted")
            }
            Violation::Match(MatchViolation::ValueMismatch { pop, push }) => {
                write!(f, "pop {pop} mapped to push {push} with a different value")
            }
            Violation::Match(MatchViolation::EmptyMismatch { pop }) => {
                write!(f, "pop {pop} disagrees with its mapping about emptiness")
            }
            Violation::Match(MatchViolation::DuplicateTarget { pop, other, push }) => {
                write!(f, "pops {pop} and {other} both removed push {push}")
            }
            Violation::PopNotNewest { pop_index, pop, push, newer_push } => match newer_push {
                Some(newer) => write!(
                    f,
                    "pop {pop} (position {pop_index}) removed push {push} while newer push {newer} was available"
                ),
                None => write!(
                    f,
                    "pop {pop} (position {pop_index}) removed push {push}, which does not precede it"
                ),
            },
            Violation::EmptyPopShadowed { pop_index, pop, push } => write!(
                f,
                "pop {pop} (position {pop_index}) returned empty but push {push} preceded it unconsumed"
            ),
            Violation::EmptyPopOrder { pop_index, pop, push, earlier_pop } => write!(
                f,
                "pop {pop} (position {pop_index}) returned empty but interleaving push {push} precedes the push consumed by pop {earlier_pop}"
            ),
            Violation::NoLinearization => write!(f, "no legal linearization exists"),
        }
    }
}

/// Outcome of a check: linearizable with an explicit witness, or a violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Linearizable { witness: Vec<OpId> },
    Violation(Violation),
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable { .. })
    }

    pub fn witness(&self) -> Option<&[OpId]> {
        match self {
            Verdict::Linearizable { witness } => Some(witness),
            Verdict::Violation(_) => None,
        }
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Verdict::Violation(v) => Some(v),
            Verdict::Linearizable { .. } => None,
        }
    }
}

/// Pop order from recorder metadata: pops sorted by removal rank. Removal
/// actions happen inside operation intervals, so a rank order contradicting
/// happened-before signals corrupted metadata.
pub fn pop_order_from_removals(h: &History) -> Result<PopOrder, CheckError> {
    let mut ranked: Vec<(u64, OpId)> = Vec::new();
    for pop in h.pops() {
        match h.removal_rank(pop.id) {
            Some(rank) => ranked.push((rank, pop.id)),
            None => return Err(CheckError::MissingRemovalRank { op: pop.id }),
        }
    }
    ranked.sort();
    let order: Vec<OpId> = ranked.into_iter().map(|(_, op)| op).collect();
    if !is_linear_extension(&order, &happened_before(h)) {
        return Err(CheckError::NotALinearExtension);
    }
    Ok(PopOrder(order))
}

/// Incremental state shared by the per-position rules: which pushes earlier
/// pops consumed, and the latest-starting consumed push for the empty-pop
/// ordering rule.
struct RuleState {
    consumed: HashSet<OpId>,
    // (inv_seq of consumed push, push, consuming pop), max by inv_seq
    max_consumed_inv: Option<(u64, OpId, OpId)>,
}

impl RuleState {
    fn new() -> RuleState {
        RuleState {
            consumed: HashSet::new(),
            max_consumed_inv: None,
        }
    }

    fn consume(&mut self, h: &History, pop: OpId, target: Option<OpId>) {
        if let Some(push) = target {
            self.consumed.insert(push);
            let inv = h.op(push).inv_seq;
            if self.max_consumed_inv.map(|(m, _, _)| inv > m).unwrap_or(true) {
                self.max_consumed_inv = Some((inv, push, pop));
            }
        }
    }
}

fn value_pop_rule(
    h: &History,
    pushes: &[&Operation],
    state: &RuleState,
    pop_index: usize,
    pop: &Operation,
    target: OpId,
) -> Result<(), Violation> {
    let target_op = h.op(target);
    if target_op.ret_seq >= pop.inv_seq {
        // The matched push does not precede the pop.
        return Err(Violation::PopNotNewest {
            pop_index,
            pop: pop.id,
            push: target,
            newer_push: None,
        });
    }
    for p in pushes {
        if p.id == target || state.consumed.contains(&p.id) {
            continue;
        }
        if p.ret_seq < pop.inv_seq && target_op.ret_seq < p.inv_seq {
            // p is available to this pop and strictly newer than its target.
            return Err(Violation::PopNotNewest {
                pop_index,
                pop: pop.id,
                push: target,
                newer_push: Some(p.id),
            });
        }
    }
    Ok(())
}

fn empty_pop_rule(
    pushes: &[&Operation],
    state: &RuleState,
    pop_index: usize,
    pop: &Operation,
) -> Result<(), Violation> {
    for p in pushes {
        if p.ret_seq < pop.inv_seq && !state.consumed.contains(&p.id) {
            return Err(Violation::EmptyPopShadowed {
                pop_index,
                pop: pop.id,
                push: p.id,
            });
        }
    }
    if let Some((max_inv, _, pop_x)) = state.max_consumed_inv {
        for p in pushes {
            if state.consumed.contains(&p.id) {
                continue;
            }
            let interleaved = p.ret_seq >= pop.inv_seq && pop.ret_seq >= p.inv_seq;
            if interleaved && p.ret_seq < max_inv {
                // p precedes a consumed push; name the latest-starting one.
                return Err(Violation::EmptyPopOrder {
                    pop_index,
                    pop: pop.id,
                    push: p.id,
                    earlier_pop: pop_x,
                });
            }
        }
    }
    Ok(())
}

/// Check the value-pop rule at position `idx` (0-based) of the order.
/// The pop at that position must be matched to a push.
pub fn check_value_pop(
    h: &History,
    m: &MatchMap,
    order: &PopOrder,
    idx: usize,
) -> Result<(), Violation> {
    let (pushes, state) = rule_state_at(h, m, order, idx);
    let pop = h.op(order.0[idx]);
    let target = m.target(pop.id).expect("value pop has a push target");
    value_pop_rule(h, &pushes, &state, idx + 1, pop, target)
}

/// Check the empty-pop rule at position `idx` (0-based) of the order.
pub fn check_empty_pop(
    h: &History,
    m: &MatchMap,
    order: &PopOrder,
    idx: usize,
) -> Result<(), Violation> {
    let (pushes, state) = rule_state_at(h, m, order, idx);
    let pop = h.op(order.0[idx]);
    debug_assert!(m.target(pop.id).is_none(), "empty pop has no target");
    empty_pop_rule(&pushes, &state, idx + 1, pop)
}

fn rule_state_at<'h>(
    h: &'h History,
    m: &MatchMap,
    order: &PopOrder,
    idx: usize,
) -> (Vec<&'h Operation>, RuleState) {
    let pushes: Vec<&Operation> = h.pushes().collect();
    let mut state = RuleState::new();
    for pop in &order.0[..idx] {
        state.consume(h, *pop, m.target(*pop));
    }
    (pushes, state)
}

/// Check every position of the given pop order; on success build the witness
/// linearization. The first violated position is reported.
pub fn check_with_order(
    h: &History,
    m: &MatchMap,
    order: &PopOrder,
) -> Result<Verdict, WitnessError> {
    debug_assert_eq!(order.0.len(), h.pops().count());
    debug_assert!(is_linear_extension(&order.0, &happened_before(h)));
    let pushes: Vec<&Operation> = h.pushes().collect();
    let mut state = RuleState::new();
    for (idx, pop_id) in order.0.iter().enumerate() {
        let pop = h.op(*pop_id);
        let outcome = match m.target(*pop_id) {
            Some(target) => value_pop_rule(h, &pushes, &state, idx + 1, pop, target),
            None => empty_pop_rule(&pushes, &state, idx + 1, pop),
        };
        if let Err(violation) = outcome {
            return Ok(Verdict::Violation(violation));
        }
        state.consume(h, *pop_id, m.target(*pop_id));
    }
    let witness = linearize(h, m, order)?;
    Ok(Verdict::Linearizable { witness: witness.0 })
}

/// Decide linearizability of a stripped history by searching over pop
/// orders: backtracking over happened-before-minimal pops, pruning any
/// prefix that already violates a rule. Enumeration is lowest-invocation
/// first, so verdicts are reproducible.
pub fn check_searching(
    h: &History,
    m: &MatchMap,
    max_pops: usize,
) -> Result<Result<Verdict, WitnessError>, CheckError> {
    let pops: Vec<&Operation> = h.pops().collect();
    if pops.len() > max_pops {
        return Err(CheckError::SearchBoundExceeded {
            pops: pops.len(),
            bound: max_pops,
        });
    }
    let pushes: Vec<&Operation> = h.pushes().collect();
    let mut chosen: Vec<OpId> = Vec::with_capacity(pops.len());
    let mut used = vec![false; pops.len()];
    let mut state = RuleState::new();
    if search_orders(h, m, &pushes, &pops, &mut used, &mut chosen, &mut state) {
        let order = PopOrder(chosen);
        return Ok(check_with_order(h, m, &order));
    }
    // No order passes. Report the violation along the canonical (greedy
    // minimal, ascending invocation) order for determinism.
    let canonical = canonical_pop_order(&pops);
    match check_with_order(h, m, &canonical) {
        Ok(Verdict::Violation(v)) => Ok(Ok(Verdict::Violation(v))),
        Ok(Verdict::Linearizable { .. }) => {
            unreachable!("search exhausted but canonical order passes")
        }
        Err(e) => Ok(Err(e)),
    }
}

fn canonical_pop_order(pops: &[&Operation]) -> PopOrder {
    let mut remaining: Vec<&Operation> = pops.to_vec();
    let mut out = Vec::with_capacity(pops.len());
    while !remaining.is_empty() {
        let idx = remaining
            .iter()
            .enumerate()
            .filter(|(i, p)| {
                remaining
                    .iter()
                    .enumerate()
                    .all(|(j, q)| *i == j || q.ret_seq >= p.inv_seq)
            })
            .min_by_key(|(_, p)| p.inv_seq)
            .map(|(i, _)| i)
            .expect("interval order always has a minimal element");
        out.push(remaining.remove(idx).id);
    }
    PopOrder(out)
}

fn search_orders(
    h: &History,
    m: &MatchMap,
    pushes: &[&Operation],
    pops: &[&Operation],
    used: &mut Vec<bool>,
    chosen: &mut Vec<OpId>,
    state: &mut RuleState,
) -> bool {
    if chosen.len() == pops.len() {
        return true;
    }
    let mut candidates: Vec<usize> = (0..pops.len())
        .filter(|&i| {
            !used[i]
                && pops.iter().enumerate().all(|(j, q)| {
                    i == j || used[j] || q.ret_seq >= pops[i].inv_seq
                })
        })
        .collect();
    candidates.sort_by_key(|&i| pops[i].inv_seq);
    for i in candidates {
        let pop = pops[i];
        let idx = chosen.len();
        let ok = match m.target(pop.id) {
            Some(target) => value_pop_rule(h, pushes, state, idx + 1, pop, target).is_ok(),
            None => empty_pop_rule(pushes, state, idx + 1, pop).is_ok(),
        };
        if !ok {
            continue;
        }
        let saved_max = state.max_consumed_inv;
        let target = m.target(pop.id);
        state.consume(h, pop.id, target);
        used[i] = true;
        chosen.push(pop.id);
        if search_orders(h, m, pushes, pops, used, chosen, state) {
            return true;
        }
        chosen.pop();
        used[i] = false;
        if let Some(push) = target {
            state.consumed.remove(&push);
        }
        state.max_consumed_inv = saved_max;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::derive_match;
    use crate::oracle::{oracle_check, DEFAULT_ORACLE_MAX_OPS};
    use crate::testutil::{fig1_history_pop_returns, fig7_history, history_from_spans};

    fn fig7_setup() -> (History, MatchMap, PopOrder) {
        let h = fig7_history();
        let m = derive_match(&h).unwrap();
        let order = pop_order_from_removals(&h).unwrap();
        (h, m, order)
    }

    #[test]
    fn figure_7_recorded_order() {
        let (_, _, order) = fig7_setup();
        assert_eq!(order.0, vec![OpId(5), OpId(2), OpId(6)]);
    }

    #[test]
    fn single_pop_order_is_singleton() {
        let h = history_from_spans(&[("pop", None, 0, 1)]);
        let h = {
            // attach a rank to the lone pop
            let text = crate::history::emit_history(&h) + "rm 1 1\n";
            crate::history::parse_history(&text).unwrap().history
        };
        let order = pop_order_from_removals(&h).unwrap();
        assert_eq!(order.0, vec![OpId(1)]);
    }

    #[test]
    fn contradictory_ranks_are_rejected() {
        // Two sequential pops ranked against their real-time order.
        let text = concat!(
            "stacklin-history v1\n",
            "inv 1 t0 push a\n",
            "ret 1 t0\n",
            "inv 2 t0 push b\n",
            "ret 2 t0\n",
            "inv 3 t0 pop\n",
            "ret 3 t0 b\n",
            "inv 4 t0 pop\n",
            "ret 4 t0 a\n",
            "rm 3 2\n",
            "rm 4 1\n",
        );
        let h = crate::history::parse_history(text).unwrap().history;
        assert_eq!(
            pop_order_from_removals(&h).unwrap_err(),
            CheckError::NotALinearExtension
        );
    }

    #[test]
    fn missing_rank_is_reported() {
        let h = history_from_spans(&[("pop", None, 0, 1)]);
        assert_eq!(
            pop_order_from_removals(&h).unwrap_err(),
            CheckError::MissingRemovalRank { op: OpId(1) }
        );
    }

    #[test]
    fn figure_7_value_rule_passes_everywhere() {
        let (h, m, order) = fig7_setup();
        for idx in 0..3 {
            assert!(check_value_pop(&h, &m, &order, idx).is_ok(), "position {idx}");
        }
    }

    #[test]
    fn stale_pop_fails_value_rule() {
        // push(a) then push(b) then pop(a): b is newer and available.
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        let m = derive_match(&h).unwrap();
        let order = PopOrder(vec![OpId(3)]);
        let err = check_value_pop(&h, &m, &order, 0).unwrap_err();
        assert_eq!(
            err,
            Violation::PopNotNewest {
                pop_index: 1,
                pop: OpId(3),
                push: OpId(1),
                newer_push: Some(OpId(2)),
            }
        );
    }

    #[test]
    fn exactly_consumed_prefix_passes() {
        // Second pop's view: only its own push remains.
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("b"), 4, 5),
            ("pop", Some("a"), 6, 7),
        ]);
        let m = derive_match(&h).unwrap();
        let order = PopOrder(vec![OpId(3), OpId(4)]);
        assert!(check_value_pop(&h, &m, &order, 1).is_ok());
    }

    #[test]
    fn drained_stack_allows_empty_pop() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("pop", Some("a"), 2, 3),
            ("pop", None, 4, 5),
        ]);
        let m = derive_match(&h).unwrap();
        let order = PopOrder(vec![OpId(2), OpId(3)]);
        assert!(check_empty_pop(&h, &m, &order, 1).is_ok());
    }

    #[test]
    fn unconsumed_preceding_push_shadows_empty_pop() {
        let h = history_from_spans(&[("push", Some("a"), 0, 1), ("pop", None, 2, 3)]);
        let m = derive_match(&h).unwrap();
        let order = PopOrder(vec![OpId(2)]);
        let err = check_empty_pop(&h, &m, &order, 0).unwrap_err();
        assert_eq!(
            err,
            Violation::EmptyPopShadowed {
                pop_index: 1,
                pop: OpId(2),
                push: OpId(1),
            }
        );
    }

    // Layout: pop1 returns a before push(b) completes; push(b) precedes
    // push(a); pop2 overlaps everything and returns empty. The only pop
    // order is [pop1, pop2]; at position 2 the empty-pop ordering rule
    // rejects push(b) against consumed push(a). The oracle agrees the
    // history is not linearizable (frozen expectation).
    fn empty_pop_order_violation_history() -> History {
        history_from_spans(&[
            ("push", Some("b"), 0, 4), // op 1
            ("pop", Some("a"), 1, 2),  // op 2
            ("pop", None, 3, 7),       // op 3
            ("push", Some("a"), 5, 6), // op 4
        ])
    }

    #[test]
    fn interleaving_push_breaks_empty_pop_order() {
        let h = empty_pop_order_violation_history();
        let m = derive_match(&h).unwrap();
        let order = PopOrder(vec![OpId(2), OpId(3)]);
        let err = check_empty_pop(&h, &m, &order, 1).unwrap_err();
        assert_eq!(
            err,
            Violation::EmptyPopOrder {
                pop_index: 2,
                pop: OpId(3),
                push: OpId(1),
                earlier_pop: OpId(2),
            }
        );
        let oracle = oracle_check(&h, DEFAULT_ORACLE_MAX_OPS).unwrap();
        assert!(!oracle.is_linearizable());
        // The full check rejects too (at the first failing position).
        let verdict = check_searching(&h, &m, DEFAULT_MAX_SEARCH_POPS)
            .unwrap()
            .unwrap();
        assert!(!verdict.is_linearizable());
    }

    #[test]
    fn figure_7_check_builds_the_published_witness() {
        let (h, m, order) = fig7_setup();
        let verdict = check_with_order(&h, &m, &order).unwrap();
        assert_eq!(
            verdict.witness().unwrap(),
            &[OpId(1), OpId(2), OpId(3), OpId(4), OpId(5), OpId(6)]
        );
    }

    #[test]
    fn empty_history_is_linearizable() {
        let h = history_from_spans(&[]);
        let m = derive_match(&h).unwrap();
        let verdict = check_with_order(&h, &m, &PopOrder(vec![])).unwrap();
        assert_eq!(verdict, Verdict::Linearizable { witness: vec![] });
    }

    #[test]
    fn fifo_counterexample_fails_every_order() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        let m = derive_match(&h).unwrap();
        let verdict = check_searching(&h, &m, DEFAULT_MAX_SEARCH_POPS)
            .unwrap()
            .unwrap();
        assert!(matches!(
            verdict.violation().unwrap(),
            Violation::PopNotNewest { .. }
        ));
    }

    #[test]
    fn figure_1_x_variant_without_stripping_is_linearizable() {
        let h = fig1_history_pop_returns("x");
        let m = derive_match(&h).unwrap();
        let verdict = check_searching(&h, &m, DEFAULT_MAX_SEARCH_POPS)
            .unwrap()
            .unwrap();
        assert!(verdict.is_linearizable());
    }

    #[test]
    fn search_bound_is_enforced() {
        let rows: Vec<(&str, Option<&str>, u64, u64)> = (0..11)
            .map(|i| ("pop", None, 2 * i as u64, 2 * i as u64 + 1))
            .collect();
        let h = history_from_spans(&rows);
        let m = derive_match(&h).unwrap();
        let err = check_searching(&h, &m, DEFAULT_MAX_SEARCH_POPS).unwrap_err();
        assert_eq!(err, CheckError::SearchBoundExceeded { pops: 11, bound: 10 });
    }
}
