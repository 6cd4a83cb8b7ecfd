use stacklin::pipeline::{decide, PipelineOptions, PopOrderMode};
use stacklin::stacks::{record_stress, ImplKind, StressConfig};

#[test]
fn probe_recorded_order_acceptance() {
    for kind in [ImplKind::Treiber, ImplKind::Hsy, ImplKind::Ts] {
        for seed in 0..10u64 {
            let cfg = StressConfig::new(kind, 4, 50, seed);
            let run = record_stress(&cfg).unwrap();
            let opts = PipelineOptions { pop_order: PopOrderMode::Recorded, ..Default::default() };
            let out = decide(&run.history, &opts).unwrap_or_else(|e| panic!("{} seed {seed}: {e}", kind.name()));
            assert!(out.verdict.is_linearizable(), "{} seed {seed}: {:?}", kind.name(), out.verdict.violation());
        }
    }
}

#[test]
fn probe_small_runs_agree_with_oracle() {
    use stacklin::oracle::oracle_check;
    for kind in [ImplKind::Treiber, ImplKind::Hsy, ImplKind::Ts] {
        for seed in 0..200u64 {
            let cfg = StressConfig::new(kind, 3, 3, seed);
            let run = record_stress(&cfg).unwrap();
            let out = decide(&run.history, &PipelineOptions { pop_order: PopOrderMode::Search, ..Default::default() }).unwrap();
            let oracle = oracle_check(&run.history, 12).unwrap();
            assert_eq!(out.verdict.is_linearizable(), oracle.is_linearizable(), "{} seed {seed}", kind.name());
            assert!(out.verdict.is_linearizable(), "{} seed {seed} should be linearizable", kind.name());
        }
    }
}
