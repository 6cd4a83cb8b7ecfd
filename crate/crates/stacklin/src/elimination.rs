//! Elimination pairs: an interleaved push/pop where the pop returned exactly
//! the push's value. Such a pair leaves the stack state unchanged, so it can
//! be stripped before checking; the witness builder re-inserts it afterwards.

use std::collections::BTreeSet;

use crate::history::{History, OpId};
use crate::matching::MatchMap;
use crate::order::happened_before;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EliminationPair {
    pub push: OpId,
    pub pop: OpId,
}

/// All pairs (push, pop) with Match(pop) = push and push interleaved with
/// pop, ordered by the pop's invocation. Detection is value-based; recorder
/// `elim` marks are not consulted.
pub fn find_elimination_pairs(h: &History, m: &MatchMap) -> Vec<EliminationPair> {
    let hb = happened_before(h);
    let mut pairs: Vec<EliminationPair> = m
        .iter()
        .filter_map(|(pop, target)| {
            let push = target?;
            hb.interleaved(push, pop).then_some(EliminationPair { push, pop })
        })
        .collect();
    pairs.sort_by_key(|p| h.op(p.pop).inv_seq);
    pairs
}

/// Delete the events of every paired operation; removal and elimination
/// metadata restrict to the survivors.
pub fn strip(h: &History, pairs: &[EliminationPair]) -> History {
    let mut keep: BTreeSet<OpId> = h.ops().iter().map(|o| o.id).collect();
    for pair in pairs {
        keep.remove(&pair.push);
        keep.remove(&pair.pop);
    }
    h.restrict(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::derive_match;
    use crate::order::HbRelation;
    use crate::testutil::{fig1_history_pop_returns, history_from_spans};

    #[test]
    fn figure_1_pop_returns_y_is_one_pair() {
        let h = fig1_history_pop_returns("y");
        let m = derive_match(&h).unwrap();
        let pairs = find_elimination_pairs(&h, &m);
        assert_eq!(pairs, vec![EliminationPair { push: OpId(2), pop: OpId(3) }]);
    }

    #[test]
    fn figure_1_pop_returns_x_has_no_pair() {
        let h = fig1_history_pop_returns("x");
        let m = derive_match(&h).unwrap();
        assert!(find_elimination_pairs(&h, &m).is_empty());
    }

    #[test]
    fn sequential_history_has_no_pairs() {
        let h = history_from_spans(&[("push", Some("a"), 0, 1), ("pop", Some("a"), 2, 3)]);
        let m = derive_match(&h).unwrap();
        assert!(find_elimination_pairs(&h, &m).is_empty());
    }

    #[test]
    fn strip_figure_1_leaves_only_first_push() {
        let h = fig1_history_pop_returns("y");
        let m = derive_match(&h).unwrap();
        let stripped = strip(&h, &find_elimination_pairs(&h, &m));
        assert_eq!(stripped.op_count(), 1);
        assert_eq!(stripped.ops()[0].id, OpId(1));
        assert_eq!(stripped.ops()[0].value(), Some("x"));
    }

    #[test]
    fn strip_nothing_is_identity() {
        let h = fig1_history_pop_returns("y");
        assert_eq!(strip(&h, &[]), h);
    }

    #[test]
    fn strip_everything_leaves_empty_history() {
        let h = history_from_spans(&[("push", Some("a"), 0, 2), ("pop", Some("a"), 1, 3)]);
        let m = derive_match(&h).unwrap();
        let pairs = find_elimination_pairs(&h, &m);
        assert_eq!(pairs.len(), 1);
        let stripped = strip(&h, &pairs);
        assert_eq!(stripped.op_count(), 0);
    }

    #[test]
    fn stripping_preserves_order_and_count() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 5),
            ("pop", Some("b"), 3, 6),
            ("pop", Some("a"), 7, 8),
        ]);
        let m = derive_match(&h).unwrap();
        let pairs = find_elimination_pairs(&h, &m);
        assert_eq!(pairs.len(), 1);
        let stripped = strip(&h, &pairs);
        assert_eq!(stripped.op_count(), h.op_count() - 2 * pairs.len());
        // Happened-before of the stripped history is the restriction.
        let hb = crate::order::happened_before(&h);
        let hb_s: HbRelation = crate::order::happened_before(&stripped);
        for a in stripped.ops() {
            for b in stripped.ops() {
                assert_eq!(hb.precedes(a.id, b.id), hb_s.precedes(a.id, b.id));
            }
        }
    }
}
