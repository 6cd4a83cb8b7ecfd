//! Linearizability checking for concurrent stack histories.
//!
//! The pipeline records histories from instrumented lock-free stacks
//! (Treiber, HSY elimination-backoff, timestamped), strips elimination
//! pairs, derives the pop-to-push value mapping, and decides linearizability
//! from two happened-before conditions over a linear order of the pops.
//! Accepted histories come with an explicit witness linearization that is
//! re-validated against the sequential LIFO specification on every
//! construction. A brute-force oracle provides ground truth at small scale.

pub mod bench;
pub mod checker;
pub mod elimination;
pub mod fuzz;
pub mod history;
pub mod matching;
pub mod oracle;
pub mod order;
pub mod pipeline;
pub mod report;
pub mod stacks;
pub mod witness;

pub use checker::{
    check_searching, check_with_order, pop_order_from_removals, PopOrder, Verdict, Violation,
};
pub use history::{emit_history, parse_history, History, OpId, Operation};
pub use matching::{derive_match, validate_match, MatchMap};
pub use order::{happened_before, insert_preserving, is_linear_extension, HbRelation};
pub use pipeline::{decide, PipelineOptions, PipelineOutcome, PopOrderMode};

#[cfg(test)]
pub(crate) mod testutil {
    use std::collections::{BTreeMap, BTreeSet};

    use proptest::prelude::*;

    use crate::history::{Event, EventPayload, History, OpId, PopResult};

    /// Figure-7-shaped execution: three pushes x/y/z, three pops, removal
    /// ranks z, x, y.
    pub fn fig7_text() -> String {
        concat!(
            "stacklin-history v1\n",
            "inv 1 t1 push x\n",
            "ret 1 t1\n",
            "inv 2 t5 pop\n",
            "inv 3 t2 push y\n",
            "inv 4 t3 push z\n",
            "ret 3 t2\n",
            "ret 4 t3\n",
            "inv 5 t4 pop\n",
            "ret 5 t4 z\n",
            "inv 6 t2 pop\n",
            "ret 2 t5 x\n",
            "ret 6 t2 y\n",
            "rm 5 1\n",
            "rm 2 2\n",
            "rm 6 3\n",
        )
        .to_string()
    }

    pub fn fig7_history() -> History {
        crate::history::parse_history(&fig7_text()).unwrap().history
    }

    /// A completed push(x), then push(y) overlapping a pop; the pop returns
    /// the given value.
    pub fn fig1_text_pop_returns(v: &str) -> String {
        format!(
            concat!(
                "stacklin-history v1\n",
                "inv 1 t0 push x\n",
                "ret 1 t0\n",
                "inv 2 t1 push y\n",
                "inv 3 t2 pop\n",
                "ret 2 t1\n",
                "ret 3 t2 {}\n",
            ),
            v
        )
    }

    pub fn fig1_history_pop_returns(v: &str) -> History {
        crate::history::parse_history(&fig1_text_pop_returns(v))
            .unwrap()
            .history
    }

    /// Build a history from (method, value, inv, ret) rows. Pop rows take
    /// `Some(value)` for a value return and `None` for an empty return.
    /// Op ids are 1-based row numbers; each op runs on its own thread.
    pub fn history_from_spans(rows: &[(&str, Option<&str>, u64, u64)]) -> History {
        let mut events = Vec::new();
        for (i, (method, value, inv, ret)) in rows.iter().enumerate() {
            assert!(inv < ret, "row {i}: inv must come before ret");
            let op = OpId(i as u64 + 1);
            let thread = format!("t{i}");
            let (inv_payload, ret_payload) = match *method {
                "push" => (
                    EventPayload::InvPush {
                        value: value.expect("push needs a value").to_string(),
                    },
                    EventPayload::RetPush,
                ),
                "pop" => (
                    EventPayload::InvPop,
                    EventPayload::RetPop {
                        result: match value {
                            Some(v) => PopResult::Value(v.to_string()),
                            None => PopResult::Empty,
                        },
                    },
                ),
                other => panic!("unknown method {other}"),
            };
            events.push(Event {
                seq: *inv,
                op,
                thread: thread.clone(),
                payload: inv_payload,
            });
            events.push(Event {
                seq: *ret,
                op,
                thread,
                payload: ret_payload,
            });
        }
        let seqs: BTreeSet<u64> = events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs.len(), events.len(), "event positions must be distinct");
        let (h, warnings) = History::assemble(events, BTreeMap::new(), BTreeSet::new());
        assert!(warnings.is_empty());
        h
    }

    /// All-push history with the given spans, for order-only tests.
    pub fn pushes_from_spans(spans: &[(u64, u64)]) -> History {
        let rows: Vec<(String, u64, u64)> = spans
            .iter()
            .enumerate()
            .map(|(i, (inv, ret))| (format!("v{i}"), *inv, *ret))
            .collect();
        let owned: Vec<(&str, Option<&str>, u64, u64)> = rows
            .iter()
            .map(|(v, inv, ret)| ("push", Some(v.as_str()), *inv, *ret))
            .collect();
        history_from_spans(&owned)
    }

    /// Random interval layouts with distinct endpoints, up to `max_ops` ops.
    pub fn arb_spans(max_ops: usize) -> impl Strategy<Value = Vec<(u64, u64)>> {
        (1..=max_ops).prop_flat_map(|n| {
            Just(n).prop_perturb(move |n, mut rng| {
                let mut points: Vec<u64> = (0..2 * n as u64).collect();
                for i in (1..points.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    points.swap(i, j);
                }
                (0..n)
                    .map(|i| {
                        let a = points[2 * i];
                        let b = points[2 * i + 1];
                        (a.min(b), a.max(b))
                    })
                    .collect()
            })
        })
    }
}
