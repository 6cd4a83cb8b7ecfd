//! The value mapping from pops to the pushes they removed.
//!
//! With distinct push values the mapping is forced: a pop returning v maps to
//! the unique push(v), an empty pop maps to nothing. Safety means the mapping
//! is total, value-consistent, and injective on push targets — no value is
//! removed twice.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::history::{History, OpId};

/// Total map from pop ids to the push they removed, or `None` for pops that
/// returned empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchMap {
    assignment: BTreeMap<OpId, Option<OpId>>,
}

impl MatchMap {
    pub fn from_assignment(assignment: BTreeMap<OpId, Option<OpId>>) -> MatchMap {
        MatchMap { assignment }
    }

    /// Target of a pop: `Some(push)` or `None` for an empty return.
    pub fn target(&self, pop: OpId) -> Option<OpId> {
        self.assignment[&pop]
    }

    pub fn iter(&self) -> impl Iterator<Item = (OpId, Option<OpId>)> + '_ {
        self.assignment.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchError {
    /// A pop returned a value no push inserted. Immediate evidence of
    /// non-linearizability; the pipeline turns this into a verdict rather
    /// than aborting.
    #[error("pop {pop} returned {value:?}, which no push inserted")]
    UnmatchedPopValue { pop: OpId, value: String },
}

/// Which safety clause a candidate mapping breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchViolation {
    /// Pop mapped to a push whose argument differs from the returned value.
    ValueMismatch { pop: OpId, push: OpId },
    /// Pop mapped to nothing but returned a value, or vice versa.
    EmptyMismatch { pop: OpId },
    /// Two pops mapped to the same push.
    DuplicateTarget { pop: OpId, other: OpId, push: OpId },
}

impl MatchViolation {
    pub fn label(&self) -> &'static str {
        match self {
            MatchViolation::ValueMismatch { .. } => "match-value-mismatch",
            MatchViolation::EmptyMismatch { .. } => "match-empty-mismatch",
            MatchViolation::DuplicateTarget { .. } => "duplicate-match",
        }
    }
}

/// Derive the mapping from values: each pop returning v maps to the unique
/// push(v), each empty pop maps to nothing.
pub fn derive_match(h: &History) -> Result<MatchMap, MatchError> {
    let push_by_value: HashMap<&str, OpId> = h
        .pushes()
        .map(|o| (o.value().expect("push has a value"), o.id))
        .collect();
    let mut assignment = BTreeMap::new();
    for pop in h.pops() {
        match pop.value() {
            None => {
                assignment.insert(pop.id, None);
            }
            Some(v) => match push_by_value.get(v) {
                Some(push) => {
                    assignment.insert(pop.id, Some(*push));
                }
                None => {
                    return Err(MatchError::UnmatchedPopValue {
                        pop: pop.id,
                        value: v.to_string(),
                    })
                }
            },
        }
    }
    Ok(MatchMap { assignment })
}

/// Check the three safety clauses of a candidate mapping, which must be total
/// on the pops of `h`. Returns the first violated clause.
pub fn validate_match(h: &History, m: &MatchMap) -> Result<(), MatchViolation> {
    let mut taken: HashMap<OpId, OpId> = HashMap::new();
    for pop in h.pops() {
        let target = m.target(pop.id);
        match (pop.value(), target) {
            (Some(v), Some(push)) => {
                if h.op(push).value() != Some(v) {
                    return Err(MatchViolation::ValueMismatch { pop: pop.id, push });
                }
                if let Some(other) = taken.insert(push, pop.id) {
                    return Err(MatchViolation::DuplicateTarget {
                        pop: pop.id,
                        other,
                        push,
                    });
                }
            }
            (None, None) => {}
            _ => return Err(MatchViolation::EmptyMismatch { pop: pop.id }),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{fig7_history, history_from_spans};

    #[test]
    fn figure_7_mapping() {
        let h = fig7_history();
        let m = derive_match(&h).unwrap();
        assert_eq!(m.target(OpId(2)), Some(OpId(1))); // pop x -> push x
        assert_eq!(m.target(OpId(5)), Some(OpId(4))); // pop z -> push z
        assert_eq!(m.target(OpId(6)), Some(OpId(3))); // pop y -> push y
        assert!(validate_match(&h, &m).is_ok());
    }

    #[test]
    fn pushes_only_gives_empty_map() {
        let h = history_from_spans(&[("push", Some("a"), 0, 1), ("push", Some("b"), 2, 3)]);
        let m = derive_match(&h).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn unknown_value_is_reported() {
        let h = history_from_spans(&[("push", Some("a"), 0, 1), ("pop", Some("q"), 2, 3)]);
        let err = derive_match(&h).unwrap_err();
        assert_eq!(
            err,
            MatchError::UnmatchedPopValue {
                pop: OpId(2),
                value: "q".into()
            }
        );
    }

    #[test]
    fn duplicate_target_is_clause_three() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("pop", Some("a"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        // derive_match itself would map both pops to push 1; validate flags it.
        let m = derive_match(&h).unwrap();
        let err = validate_match(&h, &m).unwrap_err();
        assert!(matches!(err, MatchViolation::DuplicateTarget { push: OpId(1), .. }));
    }

    #[test]
    fn empty_pop_mapped_to_push_is_clause_two() {
        let h = history_from_spans(&[("push", Some("a"), 0, 1), ("pop", None, 2, 3)]);
        let mut assignment = BTreeMap::new();
        assignment.insert(OpId(2), Some(OpId(1)));
        let err = validate_match(&h, &MatchMap::from_assignment(assignment)).unwrap_err();
        assert_eq!(err, MatchViolation::EmptyMismatch { pop: OpId(2) });
    }

    #[test]
    fn wrong_value_target_is_clause_one() {
        let h = history_from_spans(&[
            ("push", Some("a"), 0, 1),
            ("push", Some("b"), 2, 3),
            ("pop", Some("a"), 4, 5),
        ]);
        let mut assignment = BTreeMap::new();
        assignment.insert(OpId(3), Some(OpId(2)));
        let err = validate_match(&h, &MatchMap::from_assignment(assignment)).unwrap_err();
        assert_eq!(
            err,
            MatchViolation::ValueMismatch {
                pop: OpId(3),
                push: OpId(2)
            }
        );
    }
}
