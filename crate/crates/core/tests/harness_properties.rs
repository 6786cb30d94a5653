use proptest::prelude::*;
use wlap_core::harness::{run_experiment, ExperimentConfig, RiskRow, RiskTable};

fn table(rows: &[(usize, f64)], order: &[usize]) -> RiskTable {
    let mut t = RiskTable::new("risk");
    for (slot, &i) in order.iter().enumerate() {
        let (n, value) = rows[i];
        t.push(RiskRow {
            n,
            replication: slot,
            value,
            seed: i as u64,
        });
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregates_ignore_replication_order(
        rows in prop::collection::vec((prop::sample::select(vec![256usize, 512, 1024]), 1e-6f64..10.0), 3..200),
        shuffle in any::<u64>(),
    ) {
        let identity: Vec<usize> = (0..rows.len()).collect();
        let mut permuted = identity.clone();
        let mut state = shuffle | 1;
        for i in (1..permuted.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            permuted.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = table(&rows, &identity);
        let b = table(&rows, &permuted);
        for ((na, ma), (nb, mb)) in a.mean_by_n().into_iter().zip(b.mean_by_n()) {
            prop_assert_eq!(na, nb);
            prop_assert!((ma - mb).abs() <= 1e-12 * ma.abs().max(1.0), "{} vs {}", ma, mb);
        }
        prop_assert_eq!(a.median_by_n(), b.median_by_n());
    }
}

const SMALL_RUN: &str = r#"
kind = "density-rate"
name = "small"
seed = 99
replications = 6
n_grid = [64, 128, 256]

[density]
side_lengths = [1.0]
kind = "trig"
terms = [{ k = [1], cos = 0.5, sin = 0.0 }]

[bandwidth]
density = 6.283185307179586
"#;

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig::from_toml(SMALL_RUN).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&cfg).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.risk_csv, three.risk_csv);
    assert_eq!(one.report, three.report);
    assert_eq!(one.plot_csv, three.plot_csv);
}

#[test]
fn seed_changes_the_draws() {
    let mut cfg = ExperimentConfig::from_toml(SMALL_RUN).unwrap();
    let a = run_experiment(&cfg).unwrap();
    cfg.seed += 1;
    let b = run_experiment(&cfg).unwrap();
    assert_ne!(a.risk_csv, b.risk_csv);
}
