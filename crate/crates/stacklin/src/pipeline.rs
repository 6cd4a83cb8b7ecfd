//! End-to-end verdict pipeline: derive the value mapping, strip elimination
//! pairs, pick a pop order (recorded ranks or search), run the checker, and
//! turn a passing order into a witness for the original history.

use thiserror::Error;

use crate::checker::{
    check_searching, check_with_order, pop_order_from_removals, CheckError, PopOrder, Verdict,
    Violation, DEFAULT_MAX_SEARCH_POPS,
};
use crate::elimination::{find_elimination_pairs, strip, EliminationPair};
use crate::history::History;
use crate::matching::{derive_match, validate_match, MatchError};
use crate::witness::{reinsert_elimination_pairs, WitnessError, WitnessSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopOrderMode {
    /// Use recorder removal ranks; error if any pop lacks one.
    Recorded,
    /// Enumerate pop orders (complete for stripped histories, bounded).
    Search,
    /// Recorded when every pop carries a rank, otherwise search.
    Auto,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub strip_elim: bool,
    pub pop_order: PopOrderMode,
    pub max_search_pops: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            strip_elim: true,
            pop_order: PopOrderMode::Auto,
            max_search_pops: DEFAULT_MAX_SEARCH_POPS,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Order(CheckError),
    #[error(transparent)]
    Witness(#[from] WitnessError),
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub verdict: Verdict,
    /// Elimination pairs stripped before checking.
    pub pairs: Vec<EliminationPair>,
    /// Pop order the verdict was decided under (none for early violations).
    pub order_used: Option<PopOrder>,
}

/// Decide linearizability of a history. A pop returning an unknown value or
/// a broken value mapping yields a violation verdict rather than an error;
/// errors are reserved for unusable inputs (missing ranks, corrupted rank
/// order, search bound) and for internal witness failures.
pub fn decide(h: &History, opts: &PipelineOptions) -> Result<PipelineOutcome, PipelineError> {
    let m = match derive_match(h) {
        Ok(m) => m,
        Err(MatchError::UnmatchedPopValue { pop, value }) => {
            return Ok(PipelineOutcome {
                verdict: Verdict::Violation(Violation::UnmatchedPopValue { pop, value }),
                pairs: vec![],
                order_used: None,
            })
        }
    };
    if let Err(v) = validate_match(h, &m) {
        return Ok(PipelineOutcome {
            verdict: Verdict::Violation(Violation::Match(v)),
            pairs: vec![],
            order_used: None,
        });
    }

    let pairs = if opts.strip_elim {
        find_elimination_pairs(h, &m)
    } else {
        Vec::new()
    };
    let stripped = strip(h, &pairs);
    let sm = derive_match(&stripped).expect("stripping preserves value matching");

    let use_recorded = match opts.pop_order {
        PopOrderMode::Recorded => true,
        PopOrderMode::Search => false,
        PopOrderMode::Auto => stripped
            .pops()
            .all(|p| stripped.removal_rank(p.id).is_some()),
    };

    let (verdict, order_used) = if use_recorded {
        let order = pop_order_from_removals(&stripped).map_err(PipelineError::Order)?;
        let verdict = check_with_order(&stripped, &sm, &order)?;
        (verdict, Some(order))
    } else {
        match check_searching(&stripped, &sm, opts.max_search_pops) {
            Ok(inner) => (inner?, None),
            Err(e) => return Err(PipelineError::Order(e)),
        }
    };

    let verdict = match verdict {
        Verdict::Linearizable { witness } => {
            let full = reinsert_elimination_pairs(&WitnessSequence(witness), &pairs, h)?;
            Verdict::Linearizable { witness: full.0 }
        }
        v => v,
    };

    Ok(PipelineOutcome {
        verdict,
        pairs,
        order_used,
    })
}
