use voltrace::consistency::{run_sweep, ConsistencyReport, LemmaConfig, SweepConfig};
use voltrace::posterior::Budget;
use voltrace::Method;

fn small_config(seed: u64) -> SweepConfig {
    let mut cfg = SweepConfig::default_with_seed(seed);
    cfg.spec.m = 30;
    cfg.sigma0 = voltrace::prior::reachable_target(&cfg.spec, |_| 0.0).values().to_vec();
    cfg.n_grid = vec![20, 80];
    cfg.replications = 4;
    cfg.is_crossover = 20;
    cfg.lemma_draws = 3;
    cfg.budget = Budget {
        is_draws: 1500,
        chain_iters: 1500,
        burn_in: 300,
        level_samples: 150,
        ..Budget::default()
    };
    cfg
}

#[test]
fn plan_covers_the_grid_with_distinct_seeds() {
    let cfg = small_config(1);
    let plan = cfg.plan();
    assert_eq!(plan.len(), 8);
    assert_eq!(plan[0].method, Method::ImportanceSampling);
    assert_eq!(plan[7].method, Method::Mcmc);
    let mut seeds: Vec<u64> = plan.iter().map(|c| c.path_seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 8);
}

#[test]
fn sweep_is_reproducible_and_serializable() {
    let cfg = small_config(5);
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    let ja = serde_json::to_string(&a).unwrap();
    assert_eq!(ja, serde_json::to_string(&b).unwrap());
    assert_eq!(a.cells_csv(), b.cells_csv());
    assert!(a.cells_csv().starts_with(&format!("# config_hash: {}", a.provenance.config_hash)));

    let back: ConsistencyReport = serde_json::from_str(&ja).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.cells.len(), 8);
    assert_eq!(back.sizes.len(), 2);
    assert!(a.cells.iter().all(|c| c.error.is_none()));
    assert!(a.bound_checks.iter().all(|c| c.passed), "{:?}", a.bound_checks);

    let other = run_sweep(&small_config(6)).unwrap();
    assert_ne!(other.provenance.config_hash, a.provenance.config_hash);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(1);
    cfg.n_grid = vec![80, 20];
    assert!(run_sweep(&cfg).is_err());
    let mut cfg = small_config(1);
    cfg.sigma0[0] = 10.0;
    assert!(run_sweep(&cfg).is_err());
    let mut lemma = LemmaConfig::default_with_seed(1);
    lemma.draws = 0;
    assert!(lemma.validate().is_err());
}
