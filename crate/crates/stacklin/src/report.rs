//! Text and JSON rendering of verdicts for the CLI and the C API.

use serde::Serialize;

use crate::checker::Verdict;
use crate::history::OpId;

#[derive(Debug, Serialize)]
pub struct Report {
    pub result: &'static str,
    pub failed_condition: Option<&'static str>,
    pub pop_index: Option<usize>,
    pub ops: Vec<u64>,
    pub witness: Option<Vec<u64>>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(verdict: &Verdict, warnings: Vec<String>) -> Report {
        match verdict {
            Verdict::Linearizable { witness } => Report {
                result: "linearizable",
                failed_condition: None,
                pop_index: None,
                ops: vec![],
                witness: Some(witness.iter().map(|o| o.0).collect()),
                warnings,
            },
            Verdict::Violation(v) => Report {
                result: "violation",
                failed_condition: Some(v.label()),
                pop_index: v.pop_index(),
                ops: v.ops().iter().map(|o: &OpId| o.0).collect(),
                witness: None,
                warnings,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.result {
            "linearizable" => {
                out.push_str("LINEARIZABLE\n");
                if let Some(witness) = &self.witness {
                    let ids: Vec<String> = witness.iter().map(|o| o.to_string()).collect();
                    out.push_str(&format!("witness: {}\n", ids.join(" ")));
                }
            }
            _ => {
                out.push_str("VIOLATION\n");
                if let Some(cond) = self.failed_condition {
                    out.push_str(&format!("failed condition: {cond}\n"));
                }
                if let Some(idx) = self.pop_index {
                    out.push_str(&format!("pop position: {idx}\n"));
                }
                if !self.ops.is_empty() {
                    let ids: Vec<String> = self.ops.iter().map(|o| o.to_string()).collect();
                    out.push_str(&format!("ops: {}\n", ids.join(" ")));
                }
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::Violation;

    #[test]
    fn violation_report_fields() {
        let verdict = Verdict::Violation(Violation::EmptyPopShadowed {
            pop_index: 1,
            pop: OpId(2),
            push: OpId(1),
        });
        let report = Report::new(&verdict, vec![]);
        assert_eq!(report.result, "violation");
        assert_eq!(report.failed_condition, Some("empty-pop-shadowed"));
        assert_eq!(report.pop_index, Some(1));
        assert_eq!(report.ops, vec![2, 1]);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["result"], "violation");
        assert_eq!(json["failed_condition"], "empty-pop-shadowed");
    }

    #[test]
    fn linearizable_report_carries_witness() {
        let verdict = Verdict::Linearizable {
            witness: vec![OpId(1), OpId(2)],
        };
        let report = Report::new(&verdict, vec!["dropped pending invocation: op 9".into()]);
        assert_eq!(report.witness, Some(vec![1, 2]));
        assert!(report.to_text().contains("warning"));
    }
}
