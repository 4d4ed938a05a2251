//! Priors on dispersion functions built by integrating a bounded link of a
//! Gaussian driver:
//!
//! ```text
//! σ(t) = κ + ∫₀ᵗ f(W(s)) ds,    f : ℝ → [0, K − κ]
//! ```
//!
//! where `W` is either Brownian motion started at an independent standard
//! normal, or a Riemann–Liouville process with Hurst order `β`. Every draw
//! takes values in `[κ, K]` and is Lipschitz with constant `K`.
//!
//! The driver is a deterministic linear image of standard-normal
//! innovations, which is what the posterior sampler moves in.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{sup_distance, ClassParams, DispersionFn, DEFAULT_KNOTS};
use crate::rng;

/// Bounded, Lipschitz link from the driver to the slope of `σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// `f(x) = (K − κ) / (1 + e^{−x})`.
    Logistic,
}

impl Link {
    pub fn eval(&self, x: f64, span: f64) -> f64 {
        match self {
            Link::Logistic => {
                if x >= 0.0 {
                    span / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    span * e / (1.0 + e)
                }
            }
        }
    }

    /// Lipschitz constant of the link on `ℝ`.
    pub fn lipschitz(&self, span: f64) -> f64 {
        match self {
            Link::Logistic => span / 4.0,
        }
    }

    /// Driver value mapped to `y ∈ (0, span)`.
    pub fn inverse(&self, y: f64, span: f64) -> f64 {
        match self {
            Link::Logistic => (y / (span - y)).ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverKind {
    /// `W̄_t = Z + W̃_t`.
    #[serde(rename = "bm")]
    BrownianWithNormalStart,
    /// `R_t = Z₀ + ∫₀ᵗ (t − s)^{β−1/2} dW̃_s`.
    #[serde(rename = "rl")]
    RiemannLiouville,
}

/// Prior configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorSpecWire", into = "PriorSpecWire")]
pub struct PriorSpec {
    pub params: ClassParams,
    pub link: Link,
    pub driver: DriverKind,
    /// Hurst order; only read by the Riemann–Liouville driver.
    pub beta: f64,
    pub m: usize,
}

#[derive(Serialize, Deserialize)]
struct PriorSpecWire {
    kappa: f64,
    #[serde(rename = "K")]
    big_k: f64,
    link: Link,
    driver: DriverKind,
    beta: f64,
    m: usize,
}

impl TryFrom<PriorSpecWire> for PriorSpec {
    type Error = Error;

    fn try_from(w: PriorSpecWire) -> Result<Self> {
        let mut spec = PriorSpec::brownian(w.kappa, w.big_k, w.m)?;
        spec.link = w.link;
        spec.driver = w.driver;
        spec.beta = w.beta;
        spec.validate()?;
        Ok(spec)
    }
}

impl From<PriorSpec> for PriorSpecWire {
    fn from(s: PriorSpec) -> Self {
        Self {
            kappa: s.params.kappa,
            big_k: s.params.big_k,
            link: s.link,
            driver: s.driver,
            beta: s.beta,
            m: s.m,
        }
    }
}

impl PriorSpec {
    /// Brownian driver with logistic link; the class Lipschitz constant is
    /// set to `K`.
    pub fn brownian(kappa: f64, big_k: f64, m: usize) -> Result<Self> {
        let spec = Self {
            params: ClassParams::new(kappa, big_k, big_k)?,
            link: Link::Logistic,
            driver: DriverKind::BrownianWithNormalStart,
            beta: 0.5,
            m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn riemann_liouville(kappa: f64, big_k: f64, beta: f64, m: usize) -> Result<Self> {
        let spec = Self {
            driver: DriverKind::RiemannLiouville,
            beta,
            ..Self::brownian(kappa, big_k, m)?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ClassParams::new(self.params.kappa, self.params.big_k, self.params.lip_m)?;
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!("prior grid needs m >= 2, got {}", self.m)));
        }
        if self.driver == DriverKind::RiemannLiouville && !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Riemann-Liouville order beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Number of polynomial initialisation coefficients `Z_k`.
    pub fn poly_terms(&self) -> usize {
        match self.driver {
            DriverKind::BrownianWithNormalStart => 1,
            DriverKind::RiemannLiouville => self.beta.floor() as usize + 1,
        }
    }

    /// Lipschitz constant of the link for this class.
    pub fn link_lipschitz(&self) -> f64 {
        self.link.lipschitz(self.params.span())
    }

    /// Maps a driver path to `σ` without going through the innovations.
    pub fn sigma_from_path(&self, w: &[f64]) -> DispersionFn {
        integrate_link(self, w)
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::brownian(0.5, 2.0, DEFAULT_KNOTS).expect("default prior is valid")
    }
}

/// Driver path on the knot grid together with the standard-normal
/// variables that generate it.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDriver {
    pub values: Vec<f64>,
    /// Initialisation variables `Z` (or `Z₀ … Z_{⌊β⌋}`).
    pub z: Vec<f64>,
    /// Standard-normal innovations; increment `j` of `W̃` is `ξ_j / √m`.
    pub increments: Vec<f64>,
}

impl GaussianDriver {
    /// Rebuilds the path from the underlying Gaussian variables.
    pub fn from_innovations(spec: &PriorSpec, z: Vec<f64>, increments: Vec<f64>) -> Result<Self> {
        if z.len() != spec.poly_terms() || increments.len() != spec.m {
            return Err(Error::InvalidArgument(format!(
                "driver needs {} initial and {} innovation variables, got {} and {}",
                spec.poly_terms(),
                spec.m,
                z.len(),
                increments.len()
            )));
        }
        let values = driver_path(spec, &z, &increments);
        Ok(Self {
            values,
            z,
            increments,
        })
    }
}

fn driver_path(spec: &PriorSpec, z: &[f64], xi: &[f64]) -> Vec<f64> {
    let m = spec.m;
    let scale = 1.0 / (m as f64).sqrt();
    let mut values = Vec::with_capacity(m + 1);
    match spec.driver {
        DriverKind::BrownianWithNormalStart => {
            let mut acc = z[0];
            values.push(acc);
            for &x in xi {
                acc += x * scale;
                values.push(acc);
            }
        }
        DriverKind::RiemannLiouville => {
            // left-point rule: R(t_j) = Σ_k Z_k t_j^k + Σ_{i<j} (t_j − s_i)^{β−½} ξ_i/√m
            let expo = spec.beta - 0.5;
            let kernel: Vec<f64> = (1..=m)
                .map(|d| (d as f64 / m as f64).powf(expo) * scale)
                .collect();
            for j in 0..=m {
                let t = j as f64 / m as f64;
                let poly: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(k, zk)| zk * t.powi(k as i32))
                    .sum();
                let stoch: f64 = (0..j).map(|i| kernel[j - i - 1] * xi[i]).sum();
                values.push(poly + stoch);
            }
        }
    }
    values
}

pub fn sample_driver(spec: &PriorSpec, seed: u64) -> Result<GaussianDriver> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let z: Vec<f64> = (0..spec.poly_terms()).map(|_| rng.sample(StandardNormal)).collect();
    let xi: Vec<f64> = (0..spec.m).map(|_| rng.sample(StandardNormal)).collect();
    GaussianDriver::from_innovations(spec, z, xi)
}

fn integrate_link(spec: &PriorSpec, w: &[f64]) -> DispersionFn {
    let span = spec.params.span();
    let kappa = spec.params.kappa;
    let big_k = spec.params.big_k;
    let half_h = 0.5 / (w.len() - 1) as f64;
    let mut sigma = Vec::with_capacity(w.len());
    sigma.push(kappa);
    let mut acc = kappa;
    let mut f_prev = spec.link.eval(w[0], span);
    for &x in &w[1..] {
        let f = spec.link.eval(x, span);
        acc += half_h * (f_prev + f);
        sigma.push(acc.min(big_k));
        f_prev = f;
    }
    DispersionFn::new(sigma, spec.params).expect("link integral stays in the class")
}

/// `σ(t_j) = κ + trapezoid ∫₀^{t_j} f(driver)`.
pub fn driver_to_sigma(driver: &GaussianDriver, spec: &PriorSpec) -> Result<DispersionFn> {
    if driver.values.len() != spec.m + 1 {
        return Err(Error::InvalidArgument(format!(
            "driver has {} knots, spec expects {}",
            driver.values.len(),
            spec.m + 1
        )));
    }
    Ok(integrate_link(spec, &driver.values))
}

pub fn sample_prior(spec: &PriorSpec, seed: u64) -> Result<DispersionFn> {
    let driver = sample_driver(spec, seed)?;
    driver_to_sigma(&driver, spec)
}

/// `count` independent prior draws; draw `i` uses the derived seed
/// `(seed, i)`, so results do not depend on thread scheduling.
pub fn prior_draws(spec: &PriorSpec, count: usize, seed: u64) -> Result<Vec<DispersionFn>> {
    spec.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| sample_prior(spec, rng::derive_seed(seed, i as u64)))
        .collect()
}

/// `√(g(0)² + ‖g′‖₂²)` for the piecewise-linear interpolant of knot values.
pub fn rkhs_norm(g: &[f64]) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    let m = (g.len() - 1) as f64;
    let slope_sq: f64 = g.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() * m;
    (g[0] * g[0] + slope_sq).sqrt()
}

/// Monte Carlo estimate of a prior probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallEstimate {
    pub mass: f64,
    pub se: f64,
    pub hits: usize,
    pub draws: usize,
    /// Clopper–Pearson 95% lower confidence bound.
    pub lower95: f64,
}

impl SmallBallEstimate {
    pub fn from_counts(hits: usize, draws: usize) -> Self {
        let mass = hits as f64 / draws as f64;
        let se = (mass * (1.0 - mass) / draws as f64).sqrt();
        let lower95 = if hits == 0 {
            0.0
        } else {
            Beta::new(hits as f64, (draws - hits + 1) as f64)
                .map(|b| b.inverse_cdf(0.025))
                .unwrap_or(0.0)
        };
        Self {
            mass,
            se,
            hits,
            draws,
            lower95,
        }
    }
}

/// Fraction of the given draws strictly inside the sup-ball of radius `eps`.
pub fn small_ball_fraction(draws: &[DispersionFn], sigma0: &DispersionFn, eps: f64) -> SmallBallEstimate {
    let hits = draws.iter().filter(|d| sup_distance(d, sigma0) < eps).count();
    SmallBallEstimate::from_counts(hits, draws.len())
}

/// Prior mass of `{σ : ‖σ − σ₀‖∞ < ε}` from `draws` prior samples.
pub fn small_ball_mass(
    spec: &PriorSpec,
    sigma0: &DispersionFn,
    eps: f64,
    draws: usize,
    seed: u64,
) -> Result<SmallBallEstimate> {
    if draws < 1000 {
        return Err(Error::InvalidArgument(format!(
            "small-ball estimation needs at least 1000 draws, got {draws}"
        )));
    }
    let sample = prior_draws(spec, draws, seed)?;
    Ok(small_ball_fraction(&sample, sigma0, eps))
}

/// The target reached by a deterministic driver path `h`:
/// `σ₀ = κ + ∫ f(h)`.
pub fn reachable_target(spec: &PriorSpec, h: impl Fn(f64) -> f64) -> DispersionFn {
    let w: Vec<f64> = (0..=spec.m).map(|j| h(j as f64 / spec.m as f64)).collect();
    integrate_link(spec, &w)
}
