//! Ground-truth linearizability decision by exhaustive search.
//!
//! Enumerates linear extensions of happened-before with incremental
//! LIFO-state pruning: a partial extension is abandoned as soon as a chosen
//! pop contradicts the replayed stack. Intended for desk-scale histories;
//! bounded by operation count.

use thiserror::Error;

use crate::checker::{Verdict, Violation};
use crate::history::{History, OpId, OpKind, Operation, PopResult};
use crate::order::{happened_before, is_linear_extension};

/// The sequential stack: push appends, pop removes the newest value or
/// reports empty.
#[derive(Debug, Clone, Default)]
pub struct SeqStackState {
    contents: Vec<String>,
}

impl SeqStackState {
    pub fn new() -> SeqStackState {
        SeqStackState::default()
    }

    pub fn push(&mut self, value: &str) {
        self.contents.push(value.to_string());
    }

    pub fn pop(&mut self) -> Option<String> {
        self.contents.pop()
    }

    pub fn contents(&self) -> &[String] {
        &self.contents
    }

    /// Replay one operation; false if its outcome contradicts the state.
    fn apply(&mut self, op: &Operation) -> bool {
        match &op.kind {
            OpKind::Push { value } => {
                self.push(value);
                true
            }
            OpKind::Pop { result } => match (self.pop(), result) {
                (Some(top), PopResult::Value(v)) => top == *v,
                (None, PopResult::Empty) => true,
                _ => false,
            },
        }
    }
}

/// Replay a sequence of operations against an initially empty stack.
pub fn is_legal_sequential(h: &History, seq: &[OpId]) -> bool {
    let mut state = SeqStackState::new();
    seq.iter().all(|id| state.apply(h.op(*id)))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("history has {ops} operations, oracle bound is {bound}")]
    SearchBoundExceeded { ops: usize, bound: usize },
}

pub const DEFAULT_ORACLE_MAX_OPS: usize = 12;

/// Decide linearizability by backtracking over linear extensions, pruning on
/// stack-state contradictions. Returns the first witness found; exploration
/// order is deterministic (available ops in ascending invocation order).
pub fn oracle_check(h: &History, max_ops: usize) -> Result<Verdict, OracleError> {
    if h.op_count() > max_ops {
        return Err(OracleError::SearchBoundExceeded {
            ops: h.op_count(),
            bound: max_ops,
        });
    }
    let ops = h.ops();
    let n = ops.len();
    let mut placed = vec![false; n];
    let mut prefix: Vec<usize> = Vec::with_capacity(n);
    if search(h, &mut placed, &mut prefix, &SeqStackState::new()) {
        let witness: Vec<OpId> = prefix.iter().map(|&i| ops[i].id).collect();
        debug_assert!(is_legal_sequential(h, &witness));
        debug_assert!(is_linear_extension(&witness, &happened_before(h)));
        Ok(Verdict::Linearizable { witness })
    } else {
        Ok(Verdict::Violation(Violation::NoLinearization))
    }
}

fn search(
    h: &History,
    placed: &mut Vec<bool>,
    prefix: &mut Vec<usize>,
    state: &SeqStackState,
) -> bool {
    let ops = h.ops();
    if prefix.len() == ops.len() {
        return true;
    }
    'next: for i in 0..ops.len() {
        if placed[i] {
            continue;
        }
        // Available iff no unplaced op happens-before it.
        for j in 0..ops.len() {
            if j != i && !placed[j] && ops[j].ret_seq < ops[i].inv_seq {
                continue 'next;
            }
        }
        let mut next = state.clone();
        if !next.apply(&ops[i]) {
            continue;
        }
        placed[i] = true;
        prefix.push(i);
        if search(h, placed, prefix, &next) {
            return true;
        }
        prefix.pop();
        placed[i] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{fig1_history_pop_returns, fig7_history, history_from_spans};

    #[test]
    fn lifo_sequence_is_legal() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("b"), 4, 5),
            ("pop", Some("a"), 6, 7),
        ]);
        let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
        assert!(is_legal_sequential(&h, &ids));
    }

    #[test]
    fn fifo_sequence_is_illegal() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
        assert!(!is_legal_sequential(&h, &ids));
    }

    #[test]
    fn figure_7_witness_is_legal() {
        let h = fig7_history();
        let witness = [OpId(1), OpId(2), OpId(3), OpId(4), OpId(5), OpId(6)];
        assert!(is_legal_sequential(&h, &witness));
    }

    #[test]
    fn figure_1_linearizable_both_ways() {
        for v in ["x", "y"] {
            let h = fig1_history_pop_returns(v);
            let verdict = oracle_check(&h, DEFAULT_ORACLE_MAX_OPS).unwrap();
            assert!(verdict.is_linearizable(), "pop returning {v}");
        }
    }

    #[test]
    fn stale_pop_is_rejected() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        let verdict = oracle_check(&h, DEFAULT_ORACLE_MAX_OPS).unwrap();
        assert!(!verdict.is_linearizable());
    }

    #[test]
    fn bound_is_enforced() {
        let rows: Vec<(&str, Option<&str>, u64, u64)> = (0..13)
            .map(|i| ("pop", None, 2 * i as u64, 2 * i as u64 + 1))
            .collect();
        let h = history_from_spans(&rows);
        let err = oracle_check(&h, DEFAULT_ORACLE_MAX_OPS).unwrap_err();
        assert_eq!(err, OracleError::SearchBoundExceeded { ops: 13, bound: 12 });
    }

    #[test]
    fn empty_history_is_linearizable() {
        let h = history_from_spans(&[]);
        let verdict = oracle_check(&h, DEFAULT_ORACLE_MAX_OPS).unwrap();
        assert_eq!(verdict, Verdict::Linearizable { witness: vec![] });
    }
}
