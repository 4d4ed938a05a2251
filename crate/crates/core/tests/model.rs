use voltrace::model::cell_variances;
use voltrace::stats::skew_kurt;
use voltrace::{quadratic_variation, simulate_path, ClassParams, DispersionFn, ObservationPath};

fn wavy(m: usize) -> DispersionFn {
    let p = ClassParams::new(0.5, 2.0, 4.0).unwrap();
    DispersionFn::from_fn(m, p, |t| 1.2 + 0.5 * (4.0 * t).sin()).unwrap()
}

fn standardized(path: &ObservationPath, sigma: &DispersionFn) -> Vec<f64> {
    let v = cell_variances(sigma, path.n());
    path.increments().zip(&v).map(|(dx, vi)| dx / vi.sqrt()).collect()
}

#[test]
fn increments_have_the_cell_variances() {
    let sigma = wavy(400);
    let n = 4000;
    let path = simulate_path(&sigma, n, 21).unwrap();
    let z = standardized(&path, &sigma);
    // sum of squares is chi-square with n degrees of freedom
    let chi2: f64 = z.iter().map(|x| x * x).sum();
    let zscore = (chi2 - n as f64) / (2.0 * n as f64).sqrt();
    assert!(zscore.abs() < 4.0, "chi-square z-score {zscore}");

    let (skew, kurt) = skew_kurt(&z);
    let nf = n as f64;
    assert!(skew.abs() < 4.0 * (6.0 / nf).sqrt(), "skew {skew}");
    assert!(kurt.abs() < 4.0 * (24.0 / nf).sqrt(), "excess kurtosis {kurt}");
}

#[test]
fn quadratic_variation_converges_to_integrated_variance() {
    let sigma = wavy(400);
    let iv: f64 = cell_variances(&sigma, 1).iter().sum();
    let mut prev = f64::INFINITY;
    for n in [100, 1600, 25_600] {
        let errs: Vec<f64> = (0..20)
            .map(|s| (quadratic_variation(&simulate_path(&sigma, n, s).unwrap()) - iv).abs())
            .collect();
        let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
        assert!(rms < prev, "error did not shrink at n = {n}");
        prev = rms;
    }
    assert!(prev < 0.05);
}

#[test]
fn cell_variances_sum_to_integral_for_any_n() {
    let sigma = wavy(37);
    let iv: f64 = cell_variances(&sigma, 1)[0];
    for n in [1, 2, 37, 50, 1000] {
        let s: f64 = cell_variances(&sigma, n).iter().sum();
        assert!((s - iv).abs() < 1e-12 * iv, "n = {n}");
    }
}

#[test]
fn scaling_a_path_scales_its_quadratic_variation() {
    let sigma = wavy(50);
    let path = simulate_path(&sigma, 300, 2).unwrap();
    let qv = quadratic_variation(&path);
    let scaled = quadratic_variation(&path.scaled(3.0));
    assert!((scaled - 9.0 * qv).abs() < 1e-12 * scaled);
}
