//! Dispersion functions, observation paths and the norms between them.
//!
//! A dispersion function is stored as a piecewise-linear interpolant on
//! `m + 1` equally spaced knots of `[0, 1]`. All integrals of `σ²` and of
//! squared differences are then available in closed form: on a piece of
//! width `h` with endpoint values `a` and `b`, `∫ ℓ² = h (a² + ab + b²) / 3`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default knot count for dispersion functions.
pub const DEFAULT_KNOTS: usize = 400;

/// Slack allowed when certifying class membership of computed values.
const CLASS_TOL: f64 = 1e-12;

/// Bounds `κ ≤ σ ≤ K` and Lipschitz constant `M` of the dispersion class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub kappa: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    #[serde(rename = "M")]
    pub lip_m: f64,
}

impl ClassParams {
    pub fn new(kappa: f64, big_k: f64, lip_m: f64) -> Result<Self> {
        let ok = kappa.is_finite()
            && big_k.is_finite()
            && lip_m.is_finite()
            && kappa > 0.0
            && kappa < big_k
            && lip_m > 0.0;
        if !ok {
            return Err(Error::InvalidClass(format!(
                "need 0 < kappa < K < inf and 0 < M < inf, got kappa={kappa}, K={big_k}, M={lip_m}"
            )));
        }
        Ok(Self {
            kappa,
            big_k,
            lip_m,
        })
    }

    /// `K − κ`, the range available to a dispersion function.
    pub fn span(&self) -> f64 {
        self.big_k - self.kappa
    }

    /// Envelope `C = K²/κ² − 1` on the variance-ratio deviations `v⁰/v − 1`.
    pub fn ratio_envelope(&self) -> f64 {
        (self.big_k / self.kappa).powi(2) - 1.0
    }
}

/// Piecewise-linear dispersion coefficient on `m + 1` uniform knots.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionFn {
    values: Vec<f64>,
    params: ClassParams,
}

impl DispersionFn {
    /// Builds a class member, checking the range and the discrete Lipschitz
    /// certificate `|σ_{j+1} − σ_j| ≤ M/m`.
    pub fn new(values: Vec<f64>, params: ClassParams) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(
                "a dispersion function needs at least two knots".into(),
            ));
        }
        let m = (values.len() - 1) as f64;
        for (j, &v) in values.iter().enumerate() {
            if !(v >= params.kappa - CLASS_TOL && v <= params.big_k + CLASS_TOL) {
                return Err(Error::ClassViolation(format!(
                    "value {v} at knot {j} outside [{}, {}]",
                    params.kappa, params.big_k
                )));
            }
        }
        let max_step = params.lip_m / m * (1.0 + CLASS_TOL) + CLASS_TOL;
        for (j, w) in values.windows(2).enumerate() {
            if (w[1] - w[0]).abs() > max_step {
                return Err(Error::ClassViolation(format!(
                    "slope {} between knots {j} and {} exceeds M = {}",
                    (w[1] - w[0]).abs() * m,
                    j + 1,
                    params.lip_m
                )));
            }
        }
        Ok(Self { values, params })
    }

    /// Wraps knot values without class checks. The recorded parameters are
    /// the empirical range and slope of the data. Useful for diagnostics and
    /// for functions (like `σ(u) = u`) that sit outside any positive class.
    pub fn from_raw(values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "need at least two knots");
        let m = (values.len() - 1) as f64;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope = values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() * m)
            .fold(0.0, f64::max);
        Self {
            values,
            params: ClassParams {
                kappa: lo,
                big_k: hi,
                lip_m: slope,
            },
        }
    }

    /// Samples `f` at the knots `j/m` and validates the result.
    pub fn from_fn(m: usize, params: ClassParams, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("knot count m must be >= 1".into()));
        }
        let values = (0..=m).map(|j| f(j as f64 / m as f64)).collect();
        Self::new(values, params)
    }

    pub fn constant(c: f64, m: usize, params: ClassParams) -> Result<Self> {
        Self::from_fn(m, params, |_| c)
    }

    /// `σ(t) = a + b t`.
    pub fn affine(a: f64, b: f64, m: usize, params: ClassParams) -> Result<Self> {
        Self::from_fn(m, params, |t| a + b * t)
    }

    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params(&self) -> &ClassParams {
        &self.params
    }

    pub fn knot(&self, j: usize) -> f64 {
        j as f64 / self.m() as f64
    }

    /// Linear interpolation between knots.
    pub fn eval(&self, t: f64) -> f64 {
        let m = self.m();
        let x = (t.clamp(0.0, 1.0)) * m as f64;
        let j = (x.floor() as usize).min(m - 1);
        let frac = x - j as f64;
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    /// Value at the rational point `num / den`, with the knot index located
    /// by integer arithmetic so grid points land exactly on knots.
    fn eval_rational(&self, num: usize, den: usize) -> (usize, f64) {
        let m = self.m();
        let scaled = num * m;
        let j = (scaled / den).min(m - 1);
        let rem = scaled - j * den;
        let frac = rem as f64 / den as f64;
        let v = if rem == 0 {
            self.values[j]
        } else {
            self.values[j] + frac * (self.values[j + 1] - self.values[j])
        };
        (j, v)
    }

    /// Pointwise class check at the knots: range and Lipschitz certificate.
    pub fn certify(&self, params: &ClassParams) -> bool {
        Self::new(self.values.clone(), *params).is_ok()
    }

    /// Re-tags the function with another class, re-checking membership.
    pub fn with_params(self, params: ClassParams) -> Result<Self> {
        Self::new(self.values, params)
    }
}

/// `∫ ℓ²` for a linear `ℓ` with endpoint values `a`, `b` over width `h`.
#[inline]
pub(crate) fn linear_sq_integral(h: f64, a: f64, b: f64) -> f64 {
    h * (a * a + a * b + b * b) / 3.0
}

/// Exact `∫_a^b σ²(u) du` of the piecewise-linear interpolant.
pub fn integrate_sigma_sq(sigma: &DispersionFn, a: f64, b: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) || !(b > a && b <= 1.0) {
        return Err(Error::InvalidInterval { a, b });
    }
    let m = sigma.m();
    let mf = m as f64;
    // first knot strictly above a, last knot strictly below b
    let first = ((a * mf).floor() as usize + 1).min(m);
    let mut total = 0.0;
    let mut left_t = a;
    let mut left_v = sigma.eval(a);
    let mut j = first;
    while j <= m && (j as f64) / mf < b {
        let t = j as f64 / mf;
        let v = sigma.values[j];
        total += linear_sq_integral(t - left_t, left_v, v);
        left_t = t;
        left_v = v;
        j += 1;
    }
    total += linear_sq_integral(b - left_t, left_v, sigma.eval(b));
    Ok(total)
}

/// Per-cell variances `v_i = ∫_{(i−1)/n}^{i/n} σ²` for `i = 1..=n`, exact.
///
/// Runs in `O(n + m)`; the cell boundaries are located on the knot grid with
/// integer arithmetic.
pub fn cell_variances(sigma: &DispersionFn, n: usize) -> Vec<f64> {
    let m = sigma.m();
    let mf = m as f64;
    let nf = n as f64;
    let vals = &sigma.values;
    let mut out = Vec::with_capacity(n);
    let (_, mut left_v) = sigma.eval_rational(0, n);
    let mut left_t = 0.0;
    // next knot strictly after the current left boundary
    let mut next_knot = 1usize;
    for i in 1..=n {
        let (_, right_v) = sigma.eval_rational(i, n);
        let right_t = i as f64 / nf;
        let mut acc = 0.0;
        // knots strictly inside the cell: j/m < i/n  <=>  j*n < i*m
        while next_knot <= m && next_knot * n < i * m {
            let t = next_knot as f64 / mf;
            let v = vals[next_knot];
            acc += linear_sq_integral(t - left_t, left_v, v);
            left_t = t;
            left_v = v;
            next_knot += 1;
        }
        acc += linear_sq_integral(right_t - left_t, left_v, right_v);
        // a knot coinciding with the right boundary is consumed here
        if next_knot <= m && next_knot * n == i * m {
            next_knot += 1;
        }
        out.push(acc);
        left_t = right_t;
        left_v = right_v;
    }
    out
}

/// Discrete observations `X_{i/n}`, `i = 0..=n`, started at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPath {
    x: Vec<f64>,
}

impl ObservationPath {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidArgument(
                "an observation path needs n >= 1 cells".into(),
            ));
        }
        if x[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "observation paths start at x0 = 0, got {}",
                x[0]
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at index {i}")));
        }
        Ok(Self { x })
    }

    /// Path with the given increments.
    pub fn from_increments(dx: &[f64]) -> Result<Self> {
        let mut x = Vec::with_capacity(dx.len() + 1);
        x.push(0.0);
        let mut acc = 0.0;
        for &d in dx {
            acc += d;
            x.push(acc);
        }
        Self::new(x)
    }

    /// Number of cells.
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.windows(2).map(|w| w[1] - w[0])
    }

    /// Scales every observation by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| v * c).collect(),
        }
    }
}

/// Exact simulation: independent Gaussian increments with the exact cell
/// variances of `σ₀`.
pub fn simulate_path(sigma0: &DispersionFn, n: usize, seed: u64) -> Result<ObservationPath> {
    if n == 0 {
        return Err(Error::InvalidArgument("cell count n must be >= 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let dx: Vec<f64> = cell_variances(sigma0, n)
        .into_iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v.sqrt() * z
        })
        .collect();
    ObservationPath::from_increments(&dx)
}

/// `Σ (X_{i/n} − X_{(i−1)/n})²`.
pub fn quadratic_variation(path: &ObservationPath) -> f64 {
    path.increments().map(|d| d * d).sum()
}

/// Breakpoints shared by two knot grids: the sorted union of `j/m_a` and
/// `k/m_b`, each returned with the pair of interpolated values.
fn union_pieces(a: &DispersionFn, b: &DispersionFn) -> Vec<(f64, f64, f64)> {
    let (ma, mb) = (a.m(), b.m());
    if ma == mb {
        return (0..=ma)
            .map(|j| (j as f64 / ma as f64, a.values[j], b.values[j]))
            .collect();
    }
    let mut pts = Vec::with_capacity(ma + mb + 2);
    let (mut j, mut k) = (0usize, 0usize);
    // merge j/ma and k/mb by cross-multiplication
    while j <= ma || k <= mb {
        let take_a = k > mb || (j <= ma && j * mb <= k * ma);
        let take_b = j > ma || (k <= mb && k * ma <= j * mb);
        let t = if take_a {
            j as f64 / ma as f64
        } else {
            k as f64 / mb as f64
        };
        let va = if take_a { a.values[j] } else { a.eval(t) };
        let vb = if take_b { b.values[k] } else { b.eval(t) };
        pts.push((t, va, vb));
        if take_a {
            j += 1;
        }
        if take_b {
            k += 1;
        }
    }
    pts
}

/// Exact `‖a − b‖₂` on `[0, 1]`.
pub fn l2_distance(a: &DispersionFn, b: &DispersionFn) -> f64 {
    if a.m() == b.m() {
        let m = a.m();
        let h = 1.0 / m as f64;
        let mut acc = 0.0;
        for j in 0..m {
            let d0 = a.values[j] - b.values[j];
            let d1 = a.values[j + 1] - b.values[j + 1];
            acc += linear_sq_integral(h, d0, d1);
        }
        return acc.max(0.0).sqrt();
    }
    let pts = union_pieces(a, b);
    pts.windows(2)
        .map(|w| linear_sq_integral(w[1].0 - w[0].0, w[0].1 - w[0].2, w[1].1 - w[1].2))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Exact `‖a − b‖∞`: the difference is piecewise linear, so its maximum sits
/// on a breakpoint.
pub fn sup_distance(a: &DispersionFn, b: &DispersionFn) -> f64 {
    if a.m() == b.m() {
        return a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
    }
    union_pieces(a, b)
        .into_iter()
        .map(|(_, x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sorted breakpoints of the pair `(a, b)` as `(t, a(t), b(t))` triples.
pub(crate) fn shared_breakpoints(a: &DispersionFn, b: &DispersionFn) -> Vec<(f64, f64, f64)> {
    union_pieces(a, b)
}
