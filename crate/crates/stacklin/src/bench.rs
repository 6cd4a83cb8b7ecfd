//! Checker-versus-oracle timing across history sizes.
//!
//! Records one history per requested size and times the recorded-order
//! checker against the brute-force oracle. Above the oracle bound the oracle
//! column reads SKIPPED; the checker keeps scaling.

use std::time::Instant;

use thiserror::Error;

use crate::oracle::{oracle_check, OracleError};
use crate::pipeline::{decide, PipelineOptions, PopOrderMode};
use crate::stacks::{record_stress, HarnessError, ImplKind, StressConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sizes must be ascending and positive")]
    BadSizes,
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("checker failed on a recorded history: {0}")]
    Checker(String),
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub size: usize,
    pub checker_ms: f64,
    /// None when the history exceeds the oracle bound.
    pub oracle_ms: Option<f64>,
}

/// Time the pipeline and the oracle on recorded histories of the given
/// sizes. Sizes are total operation counts, spread over up to four threads.
pub fn bench(
    impl_kind: ImplKind,
    sizes: &[usize],
    seed: u64,
    oracle_max_ops: usize,
) -> Result<Vec<BenchRow>, BenchError> {
    if sizes.is_empty() || sizes.contains(&0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadSizes);
    }
    let mut rows = Vec::new();
    for &size in sizes {
        let threads = size.min(4).max(1);
        let per_thread = size.div_ceil(threads);
        let cfg = StressConfig::new(impl_kind, threads, per_thread, seed ^ size as u64);
        let run = record_stress(&cfg)?;

        let started = Instant::now();
        let opts = PipelineOptions {
            pop_order: PopOrderMode::Recorded,
            ..Default::default()
        };
        let outcome = decide(&run.history, &opts).map_err(|e| BenchError::Checker(e.to_string()))?;
        let checker_ms = started.elapsed().as_secs_f64() * 1e3;
        if !outcome.verdict.is_linearizable() {
            return Err(BenchError::Checker(format!(
                "recorded history of size {size} rejected"
            )));
        }

        let oracle_ms = {
            let started = Instant::now();
            match oracle_check(&run.history, oracle_max_ops) {
                Ok(_) => Some(started.elapsed().as_secs_f64() * 1e3),
                Err(OracleError::SearchBoundExceeded { .. }) => None,
            }
        };
        rows.push(BenchRow {
            size: run.history.op_count(),
            checker_ms,
            oracle_ms,
        });
    }
    Ok(rows)
}

/// Tab-separated table, one row per size, oracle column SKIPPED when bounded
/// out.
pub fn render_table(rows: &[BenchRow]) -> String {
    let mut out = String::from("size\tchecker_ms\toracle_ms\n");
    for row in rows {
        let oracle = match row.oracle_ms {
            Some(ms) => format!("{ms:.3}"),
            None => "SKIPPED".to_string(),
        };
        out.push_str(&format!("{}\t{:.3}\t{}\n", row.size, row.checker_ms, oracle));
    }
    out
}
