//! Happened-before order over operations and linear-extension machinery.
//!
//! An operation precedes another iff its response event lands before the
//! other's invocation event. Two operations with neither preceding the other
//! are interleaved. Because the order comes from interval containment it is
//! automatically a strict partial order.

use std::collections::HashMap;

use thiserror::Error;

use crate::history::{History, OpId};

/// The happened-before relation of one history.
#[derive(Debug, Clone)]
pub struct HbRelation {
    spans: HashMap<OpId, (u64, u64)>,
}

/// Build the happened-before relation of a complete history.
pub fn happened_before(h: &History) -> HbRelation {
    let spans = h
        .ops()
        .iter()
        .map(|o| (o.id, (o.inv_seq, o.ret_seq)))
        .collect();
    HbRelation { spans }
}

impl HbRelation {
    pub fn precedes(&self, a: OpId, b: OpId) -> bool {
        let (_, a_ret) = self.spans[&a];
        let (b_inv, _) = self.spans[&b];
        a_ret < b_inv
    }

    pub fn interleaved(&self, a: OpId, b: OpId) -> bool {
        a != b && !self.precedes(a, b) && !self.precedes(b, a)
    }

    pub fn span(&self, op: OpId) -> (u64, u64) {
        self.spans[&op]
    }

    pub fn contains(&self, op: OpId) -> bool {
        self.spans.contains_key(&op)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    /// The input sequence already violates happened-before.
    #[error("input sequence is not a linear extension: position {later} precedes position {earlier}")]
    PrecedenceCycle { earlier: usize, later: usize },
}

/// True iff no element of `seq` happens-before an earlier element.
///
/// A violation at position y means some earlier x has its invocation after
/// y's response, so one pass tracking the running max invocation seq suffices.
pub fn is_linear_extension(seq: &[OpId], hb: &HbRelation) -> bool {
    find_extension_violation(seq, hb).is_none()
}

fn find_extension_violation(seq: &[OpId], hb: &HbRelation) -> Option<(usize, usize)> {
    let mut max_inv: Option<(u64, usize)> = None;
    for (y, op) in seq.iter().enumerate() {
        let (inv, ret) = hb.span(*op);
        if let Some((m, x)) = max_inv {
            if ret < m {
                return Some((x, y));
            }
        }
        if max_inv.map(|(m, _)| inv > m).unwrap_or(true) {
            max_inv = Some((inv, y));
        }
    }
    None
}

/// Insert `x` into an order-preserving sequence, keeping it order-preserving:
/// scan from the right for the last element that happens-before `x` and place
/// `x` just after it, or at the front when no element precedes it.
pub fn insert_preserving(
    seq: &[OpId],
    x: OpId,
    hb: &HbRelation,
) -> Result<Vec<OpId>, OrderError> {
    if let Some((earlier, later)) = find_extension_violation(seq, hb) {
        return Err(OrderError::PrecedenceCycle { earlier, later });
    }
    let pos = seq
        .iter()
        .rposition(|l| hb.precedes(*l, x))
        .map(|p| p + 1)
        .unwrap_or(0);
    let mut out = Vec::with_capacity(seq.len() + 1);
    out.extend_from_slice(&seq[..pos]);
    out.push(x);
    out.extend_from_slice(&seq[pos..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::parse_history;
    use crate::testutil::{fig1_text_pop_returns, fig7_history, history_from_spans};
    use proptest::prelude::*;

    #[test]
    fn figure_1_relations() {
        let parsed = parse_history(&fig1_text_pop_returns("x")).unwrap();
        let hb = happened_before(&parsed.history);
        // op 1 = push x, op 2 = push y, op 3 = pop
        assert!(hb.precedes(OpId(1), OpId(3)));
        assert!(hb.interleaved(OpId(2), OpId(3)));
        assert!(hb.precedes(OpId(1), OpId(2)));
    }

    #[test]
    fn single_operation_precedes_nothing() {
        let parsed = parse_history("stacklin-history v1\ninv 1 t0 push x\nret 1 t0\n").unwrap();
        let hb = happened_before(&parsed.history);
        assert!(!hb.precedes(OpId(1), OpId(1)));
        assert!(!hb.interleaved(OpId(1), OpId(1)));
    }

    #[test]
    fn sequential_history_is_totally_ordered() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("b"), 4, 5),
            ("pop", Some("a"), 6, 7),
        ]);
        let hb = happened_before(&h);
        let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
        let mut pairs = 0;
        for i in 0..ids.len() {
            for j in 0..ids.len() {
                if hb.precedes(ids[i], ids[j]) {
                    pairs += 1;
                    assert!(i < j);
                }
            }
        }
        assert_eq!(pairs, 6); // 4 choose 2
    }

    #[test]
    fn insert_appends_when_last_precedes() {
        // Figure 7 push sequence plus pop(z,5): push(z,4) precedes it, so the
        // pop lands at the end.
        let h = fig7_history();
        let hb = happened_before(&h);
        let seq = vec![OpId(1), OpId(3), OpId(4)];
        let out = insert_preserving(&seq, OpId(5), &hb).unwrap();
        assert_eq!(out, vec![OpId(1), OpId(3), OpId(4), OpId(5)]);
    }

    #[test]
    fn insert_into_empty() {
        let h = fig7_history();
        let hb = happened_before(&h);
        assert_eq!(insert_preserving(&[], OpId(1), &hb).unwrap(), vec![OpId(1)]);
    }

    #[test]
    fn insert_at_front_when_nothing_precedes() {
        // a and b both interleave x: x goes to the front.
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 10),
            ("push", Some("b"), 1, 11),
            ("pop", None, 2, 12),
        ]);
        let hb = happened_before(&h);
        let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
        let out = insert_preserving(&[ids[0], ids[1]], ids[2], &hb).unwrap();
        assert_eq!(out, vec![ids[2], ids[0], ids[1]]);
    }

    #[test]
    fn insert_rejects_bad_input_sequence() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
        let hb = happened_before(&h);
        let err = insert_preserving(&[ids[1], ids[0]], ids[2], &hb).unwrap_err();
        assert_eq!(err, OrderError::PrecedenceCycle { earlier: 0, later: 1 });
    }

    #[test]
    fn figure_7_pop_order_is_extension() {
        let h = fig7_history();
        let hb = happened_before(&h);
        assert!(is_linear_extension(&[OpId(5), OpId(2), OpId(6)], &hb));
    }

    #[test]
    fn reversed_sequential_order_is_not_extension() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
        ]);
        let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
        let hb = happened_before(&h);
        assert!(is_linear_extension(&[ids[0], ids[1]], &hb));
        assert!(!is_linear_extension(&[ids[1], ids[0]], &hb));
    }

    #[test]
    fn singleton_is_extension() {
        let h = fig7_history();
        let hb = happened_before(&h);
        assert!(is_linear_extension(&[OpId(2)], &hb));
    }

    proptest! {
        // Strict-partial-order audit over random interval layouts.
        #[test]
        fn hb_is_strict_partial_order(spans in crate::testutil::arb_spans(10)) {
            let h = crate::testutil::pushes_from_spans(&spans);
            let hb = happened_before(&h);
            let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
            for &a in &ids {
                prop_assert!(!hb.precedes(a, a));
                for &b in &ids {
                    if hb.precedes(a, b) {
                        prop_assert!(!hb.precedes(b, a));
                        prop_assert!(a != b && !hb.interleaved(a, b));
                    }
                    for &c in &ids {
                        if hb.precedes(a, b) && hb.precedes(b, c) {
                            prop_assert!(hb.precedes(a, c));
                        }
                    }
                }
            }
        }

        // The chosen insertion slot always yields an extension, and agrees
        // with brute-force search over every slot.
        #[test]
        fn insert_preserving_matches_exhaustive_slots(spans in crate::testutil::arb_spans(10)) {
            let h = crate::testutil::pushes_from_spans(&spans);
            let hb = happened_before(&h);
            let ids: Vec<OpId> = h.ops().iter().map(|o| o.id).collect();
            if ids.len() < 2 {
                return Ok(());
            }
            // Build some extension of all but the last op by repeated insertion.
            let (rest, last) = (&ids[..ids.len() - 1], ids[ids.len() - 1]);
            let mut seq = Vec::new();
            for &op in rest {
                seq = insert_preserving(&seq, op, &hb).unwrap();
            }
            let out = insert_preserving(&seq, last, &hb).unwrap();
            prop_assert!(is_linear_extension(&out, &hb));
            let valid_slots: Vec<usize> = (0..=seq.len())
                .filter(|&k| {
                    let mut cand = seq.clone();
                    cand.insert(k, last);
                    is_linear_extension(&cand, &hb)
                })
                .collect();
            let chosen = out.iter().position(|&o| o == last).unwrap();
            prop_assert!(valid_slots.contains(&chosen));
        }
    }
}
