use voltrace::posterior::{run_chain, ChainConfig, DataLikelihood, ImportanceDraws, NoData};
use voltrace::prior::reachable_target;
use voltrace::{l2_distance, simulate_path, DispersionFn, PriorSpec};

fn spec() -> PriorSpec {
    PriorSpec::brownian(0.5, 2.0, 50).unwrap()
}

#[test]
fn prior_target_accepts_every_proposal() {
    let cfg = ChainConfig {
        rho: 0.9,
        adapt: false,
        ..ChainConfig::new(2000, 1)
    };
    let out = run_chain(&NoData, &spec(), &cfg).unwrap();
    assert_eq!(out.acceptance_rate, 1.0);
    assert_eq!(out.rho, 0.9);
}

#[test]
fn thinning_only_subsamples_the_chain() {
    let spec = spec();
    let truth = reachable_target(&spec, |_| 0.0);
    let path = simulate_path(&truth, 200, 6).unwrap();
    let target = DataLikelihood(&path);
    let base = ChainConfig {
        iters: 3000,
        burn_in: 500,
        ..ChainConfig::new(3000, 12)
    };
    let every = run_chain(&target, &spec, &ChainConfig { thin: 1, ..base }).unwrap();
    let thinned = run_chain(&target, &spec, &ChainConfig { thin: 7, ..base }).unwrap();
    let expected: Vec<DispersionFn> = every.samples.iter().step_by(7).cloned().collect();
    assert_eq!(thinned.samples, expected);
    assert_eq!(thinned.acceptance_rate, every.acceptance_rate);
}

#[test]
fn posterior_mean_concentrates_near_truth() {
    let spec = spec();
    let truth = reachable_target(&spec, |t| (3.0 * t).cos() - 0.5);
    let path = simulate_path(&truth, 5000, 31).unwrap();
    let target = DataLikelihood(&path);
    let cfg = ChainConfig::new(20_000, 2);
    let a = run_chain(&target, &spec, &cfg).unwrap();
    let b = run_chain(&target, &spec, &ChainConfig { seed: 3, ..cfg }).unwrap();
    assert!((0.05..0.8).contains(&a.acceptance_rate), "acceptance {}", a.acceptance_rate);

    let mean_a = DispersionFn::from_raw(a.mean_curve());
    let mean_b = DispersionFn::from_raw(b.mean_curve());
    let err = l2_distance(&mean_a, &truth);
    assert!(err < 0.1, "posterior mean is {err} from the truth");
    // independent chains agree far better than the prior spread
    let gap = l2_distance(&mean_a, &mean_b);
    assert!(gap < 0.05, "chains disagree by {gap}");
}

#[test]
fn importance_weights_are_normalized() {
    let spec = spec();
    let truth = reachable_target(&spec, |_| 0.0);
    let path = simulate_path(&truth, 20, 2).unwrap();
    let draws = ImportanceDraws::new(&path, &spec, 2000, 5).unwrap();
    assert_eq!(draws.len(), 2000);
    let max = draws.weights.iter().cloned().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    let ess = draws.ess();
    assert!(ess > 1.0 && ess <= 2000.0);
    let inside = draws.mass(|s| l2_distance(s, &truth) < 0.2).mass;
    let outside = draws.mass(|s| l2_distance(s, &truth) >= 0.2).mass;
    assert!((inside + outside - 1.0).abs() < 4.0 * f64::EPSILON);
}
