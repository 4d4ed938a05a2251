//! Gaussian increment likelihood and its normalized log-ratio decomposition.
//!
//! With `v_i = ∫_{cell i} σ²` and `ΔX_i` the `i`-th increment,
//!
//! ```text
//! log L_n(σ) = Σ [ −½ log(2π v_i) − ΔX_i² / (2 v_i) ]
//! S_n(σ)     = n⁻¹ (log L_n(σ) − log L_n(σ₀)) = T₁ + T₂
//! T₁         = (1/2n) Σ log(v⁰_i / v_i)
//! T₂         = −(1/2n) Σ ΔX_i² (1/v_i − 1/v⁰_i)
//! ```
//!
//! Everything stays in the log domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cell_variances, quadratic_variation, shared_breakpoints, sup_distance};
use crate::model::{DispersionFn, ObservationPath};
use crate::quad::adaptive_simpson;

/// Absolute tolerance for the `∫ (σ₀² − σ²)/σ²`-type integrals.
pub const INTEGRAL_TOL: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn checked_variances(sigma: &DispersionFn, n: usize) -> Result<Vec<f64>> {
    let v = cell_variances(sigma, n);
    if let Some((cell, &variance)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::NonPositiveVariance { cell, variance });
    }
    Ok(v)
}

/// `log L_n(σ)` for the observed increments.
pub fn log_likelihood(sigma: &DispersionFn, path: &ObservationPath) -> Result<f64> {
    let v = checked_variances(sigma, path.n())?;
    Ok(path
        .increments()
        .zip(&v)
        .map(|(dx, &vi)| -0.5 * (LN_2PI + vi.ln()) - dx * dx / (2.0 * vi))
        .sum())
}

/// Likelihood decomposition of `σ` against the truth `σ₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodBreakdown {
    pub log_l: f64,
    pub log_r: f64,
    pub s_n: f64,
    pub t1: f64,
    pub t2: f64,
}

/// JSON record emitted for a breakdown evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRecord {
    pub n: usize,
    pub log_l: f64,
    pub log_r: f64,
    pub s_n: f64,
    pub t1: f64,
    pub t2: f64,
    pub q_n: f64,
}

pub fn breakdown(
    sigma: &DispersionFn,
    sigma0: &DispersionFn,
    path: &ObservationPath,
) -> Result<LikelihoodBreakdown> {
    let n = path.n();
    let v = checked_variances(sigma, n)?;
    let v0 = checked_variances(sigma0, n)?;
    let mut log_l = 0.0;
    let mut log_ratio_sum = 0.0;
    let mut weighted_sum = 0.0;
    for ((dx, &vi), &v0i) in path.increments().zip(&v).zip(&v0) {
        let dx2 = dx * dx;
        log_l += -0.5 * (LN_2PI + vi.ln()) - dx2 / (2.0 * vi);
        log_ratio_sum += (v0i / vi).ln();
        weighted_sum += dx2 * (1.0 / vi - 1.0 / v0i);
    }
    let nf = n as f64;
    let t1 = log_ratio_sum / (2.0 * nf);
    let t2 = -weighted_sum / (2.0 * nf);
    let s_n = t1 + t2;
    Ok(LikelihoodBreakdown {
        log_l,
        log_r: nf * s_n,
        s_n,
        t1,
        t2,
    })
}

/// Integrates `g(σ(u), σ₀(u))` over `[0, 1]`, piece by piece on the union
/// of both knot grids.
fn integrate_pair(
    sigma: &DispersionFn,
    sigma0: &DispersionFn,
    g: impl Fn(f64, f64) -> f64,
) -> f64 {
    let pts = shared_breakpoints(sigma, sigma0);
    let tol = INTEGRAL_TOL / (pts.len().max(2) - 1) as f64;
    pts.windows(2)
        .map(|w| {
            let (ta, sa, s0a) = w[0];
            let (tb, sb, s0b) = w[1];
            let h = tb - ta;
            let f = |u: f64| {
                let r = (u - ta) / h;
                g(sa + r * (sb - sa), s0a + r * (s0b - s0a))
            };
            adaptive_simpson(&f, ta, tb, tol)
        })
        .sum()
}

/// `∫₀¹ (σ₀² − σ²)/σ² du`.
pub fn relative_gap_over_sigma(sigma: &DispersionFn, sigma0: &DispersionFn) -> f64 {
    integrate_pair(sigma, sigma0, |s, s0| (s0 * s0 - s * s) / (s * s))
}

/// `∫₀¹ (σ₀² − σ²)/σ₀² du`.
pub fn relative_gap_over_truth(sigma: &DispersionFn, sigma0: &DispersionFn) -> f64 {
    integrate_pair(sigma, sigma0, |s, s0| (s0 * s0 - s * s) / (s0 * s0))
}

/// `Q_n(σ) = |T₂(σ) + ½ ∫ (σ₀² − σ²)/σ²|`, the centred data term.
pub fn q_n(sigma: &DispersionFn, sigma0: &DispersionFn, path: &ObservationPath) -> Result<f64> {
    let b = breakdown(sigma, sigma0, path)?;
    Ok((b.t2 + 0.5 * relative_gap_over_sigma(sigma, sigma0)).abs())
}

/// `|∫ (σ₀² − σ²)/σ₀²|`, bounded by `2K ‖σ − σ₀‖∞ / κ²` on the class.
pub fn integral_bound_lhs(sigma: &DispersionFn, sigma0: &DispersionFn) -> f64 {
    relative_gap_over_truth(sigma, sigma0).abs()
}

/// `2K ε / κ²`: the bound on `integral_bound_lhs` over a sup-ball of radius `ε`.
pub fn integral_bound_rhs(kappa: f64, big_k: f64, eps: f64) -> f64 {
    2.0 * big_k * eps / (kappa * kappa)
}

/// Oscillation bound on `Q_n` between two class members sharing `σ₀`:
/// `(K/κ⁴) d QV + (K³/κ⁴) d` with `d = ‖σ₁ − σ₂‖∞`.
///
/// Class bounds are taken from `sigma1`'s parameters.
pub fn qn_oscillation_bound(
    sigma1: &DispersionFn,
    sigma2: &DispersionFn,
    path: &ObservationPath,
) -> f64 {
    let p = sigma1.params();
    let d = sup_distance(sigma1, sigma2);
    let k4 = p.kappa.powi(4);
    p.big_k / k4 * d * quadratic_variation(path) + p.big_k.powi(3) / k4 * d
}

/// Curvature constant `c = 1/(2(C+1))` for which
/// `log(1+y) ≤ y − c y²` holds on `(−1, C]`.
pub fn log_curvature_constant(envelope: f64) -> f64 {
    1.0 / (2.0 * (envelope + 1.0))
}

/// Standard normal log-density, exposed for oracle comparisons.
pub fn normal_log_pdf(x: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * PI * variance).ln() - x * x / (2.0 * variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_path, ClassParams};
    use approx::assert_relative_eq;

    fn class() -> ClassParams {
        ClassParams::new(0.5, 2.0, 2.0).unwrap()
    }

    #[test]
    fn single_cell_standard_normal() {
        let s = DispersionFn::constant(1.0, 4, ClassParams::new(0.5, 2.0, 1.0).unwrap()).unwrap();
        let p = ObservationPath::new(vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(log_likelihood(&s, &p).unwrap(), -0.918_938_533_204_672_7, epsilon = 1e-15);
    }

    #[test]
    fn log_likelihood_decreases_in_magnitude_of_increment() {
        let s = DispersionFn::constant(1.0, 4, class()).unwrap();
        let mut last = f64::INFINITY;
        for z in [0.0, 0.3, 1.0, 2.5] {
            let p = ObservationPath::new(vec![0.0, 2.0 * z]).unwrap();
            let ll = log_likelihood(&s, &p).unwrap();
            assert_relative_eq!(ll, -0.5 * (2.0 * PI).ln() - 2.0 * z * z, epsilon = 1e-14);
            assert!(ll < last || z == 0.0);
            last = ll;
        }
    }

    #[test]
    fn rejects_nonpositive_variance() {
        let s = DispersionFn::from_raw(vec![0.0, 0.0, 0.0]);
        let p = ObservationPath::new(vec![0.0, 0.1, 0.2]).unwrap();
        assert!(matches!(
            log_likelihood(&s, &p),
            Err(Error::NonPositiveVariance { .. })
        ));
    }

    #[test]
    fn breakdown_constants_closed_form() {
        let (a, b) = (1.2, 0.8);
        let s0 = DispersionFn::constant(a, 10, class()).unwrap();
        let s = DispersionFn::constant(b, 10, class()).unwrap();
        let path = simulate_path(&s0, 250, 1).unwrap();
        let qv = quadratic_variation(&path);
        let bd = breakdown(&s, &s0, &path).unwrap();
        assert!((bd.t1 - (a / b).ln()).abs() < 1e-12);
        assert!((bd.t2 + 0.5 * qv * (1.0 / (b * b) - 1.0 / (a * a))).abs() < 1e-12);
        let expected_q = (-0.5 * qv * (1.0 / (b * b) - 1.0 / (a * a)) + 0.5 * (a * a - b * b) / (b * b)).abs();
        assert!((q_n(&s, &s0, &path).unwrap() - expected_q).abs() < 1e-10);
    }

    #[test]
    fn breakdown_at_truth_is_zero() {
        let s0 = DispersionFn::affine(0.7, 1.0, 40, class()).unwrap();
        let path = simulate_path(&s0, 300, 5).unwrap();
        let bd = breakdown(&s0, &s0, &path).unwrap();
        assert_eq!(bd.t1, 0.0);
        assert_eq!(bd.t2, 0.0);
        assert_eq!(bd.s_n, 0.0);
        let zero = ObservationPath::new(vec![0.0; 301]).unwrap();
        assert_eq!(q_n(&s0, &s0, &zero).unwrap(), 0.0);
    }

    #[test]
    fn integral_bound_constants() {
        let p = ClassParams::new(1.0, 2.0, 1.0).unwrap();
        let s0 = DispersionFn::constant(1.0, 10, p).unwrap();
        let s = DispersionFn::constant(1.1, 10, p).unwrap();
        assert_relative_eq!(integral_bound_lhs(&s, &s0), 0.21, max_relative = 1e-10);
        assert_eq!(integral_bound_lhs(&s0, &s0), 0.0);
        assert_relative_eq!(integral_bound_rhs(1.0, 2.0, 0.1), 0.4, max_relative = 1e-15);
    }

    #[test]
    fn oscillation_bound_degenerate_class_plug_in() {
        // κ = K = 1 is outside ClassParams; use raw functions whose recorded
        // range is exactly [1, 1].
        let s1 = DispersionFn::from_raw(vec![1.0, 1.0, 1.0]);
        let s2 = DispersionFn::from_raw(vec![1.0, 1.0, 1.0]);
        let path = ObservationPath::new(vec![0.0, 0.5, -0.5]).unwrap();
        assert_eq!(qn_oscillation_bound(&s1, &s2, &path), 0.0);
        let p = ClassParams { kappa: 1.0, big_k: 1.0, lip_m: 1.0 };
        let d = 0.25;
        let q = quadratic_variation(&path);
        let s3 = DispersionFn::from_raw(vec![1.25, 1.25, 1.25]);
        let bound = p.big_k / p.kappa.powi(4) * d * q + p.big_k.powi(3) / p.kappa.powi(4) * d;
        assert_relative_eq!(qn_oscillation_bound(&s1, &s3, &path), bound, max_relative = 1e-15);
        assert_relative_eq!(bound, d * q + d, max_relative = 1e-15);
    }

    #[test]
    fn curvature_constant() {
        assert_eq!(log_curvature_constant(1.0), 0.25);
        assert_relative_eq!(class().ratio_envelope(), 15.0);
    }
}
