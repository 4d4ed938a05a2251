use voltrace::prior::{prior_draws, reachable_target, sample_driver, small_ball_mass};
use voltrace::rng::derive_seed;
use voltrace::stats::{mean, variance};
use voltrace::PriorSpec;

fn driver_moments(spec: &PriorSpec, draws: usize) -> Vec<(f64, f64)> {
    let paths: Vec<Vec<f64>> = (0..draws)
        .map(|i| sample_driver(spec, derive_seed(77, i as u64)).unwrap().values)
        .collect();
    (0..=spec.m)
        .map(|j| {
            let col: Vec<f64> = paths.iter().map(|p| p[j]).collect();
            (mean(&col), variance(&col))
        })
        .collect()
}

/// Sample variance of `draws` normals with variance `v` has sd `v √(2/(draws−1))`.
fn check_variance(got: f64, want: f64, draws: usize) {
    let sd = want * (2.0 / (draws - 1) as f64).sqrt();
    assert!((got - want).abs() < 5.0 * sd, "variance {got} vs {want}");
}

#[test]
fn brownian_driver_variance_is_one_plus_t() {
    let spec = PriorSpec::brownian(0.5, 2.0, 20).unwrap();
    let draws = 8000;
    for (j, (mu, var)) in driver_moments(&spec, draws).into_iter().enumerate() {
        let t = j as f64 / 20.0;
        assert!(mu.abs() < 5.0 * ((1.0 + t) / draws as f64).sqrt());
        check_variance(var, 1.0 + t, draws);
    }
}

#[test]
fn riemann_liouville_driver_variance_matches_kernel_sum() {
    let m = 20;
    let draws = 8000;
    for beta in [0.3, 0.75, 0.95] {
        let spec = PriorSpec::riemann_liouville(0.5, 2.0, beta, m).unwrap();
        let moments = driver_moments(&spec, draws);
        for j in [1, 5, 10, 20] {
            let t = j as f64 / m as f64;
            let poly: f64 = (0..spec.poly_terms()).map(|k| t.powi(2 * k as i32)).sum();
            let kernel: f64 = (1..=j)
                .map(|d| (d as f64 / m as f64).powf(2.0 * beta - 1.0) / m as f64)
                .sum();
            check_variance(moments[j].1, poly + kernel, draws);
        }
    }
}

#[test]
fn prior_draws_are_certified_members() {
    for spec in [
        PriorSpec::brownian(0.3, 1.7, 60).unwrap(),
        PriorSpec::riemann_liouville(0.3, 1.7, 0.6, 60).unwrap(),
    ] {
        let lip = spec.link_lipschitz();
        assert!(lip > 0.0);
        for s in prior_draws(&spec, 500, 4).unwrap() {
            assert!(s.certify(&spec.params));
            assert_eq!(s.values()[0], spec.params.kappa);
        }
    }
}

#[test]
fn small_ball_mass_grows_with_radius() {
    let spec = PriorSpec::brownian(0.5, 2.0, 50).unwrap();
    let sigma0 = reachable_target(&spec, |t| (3.0 * t).cos() - 0.5);
    let masses: Vec<f64> = [0.05, 0.1, 0.2, 0.4]
        .iter()
        .map(|&e| small_ball_mass(&spec, &sigma0, e * spec.params.span(), 4000, 8).unwrap().mass)
        .collect();
    assert!(masses.windows(2).all(|w| w[0] <= w[1]), "{masses:?}");
    assert!(masses[3] > masses[0]);
    assert!(small_ball_mass(&spec, &sigma0, 0.1, 999, 8).is_err());
}

#[test]
fn draws_do_not_depend_on_thread_count() {
    let spec = PriorSpec::brownian(0.5, 2.0, 30).unwrap();
    let parallel = prior_draws(&spec, 64, 3).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| prior_draws(&spec, 64, 3).unwrap());
    assert_eq!(parallel, serial);
}
