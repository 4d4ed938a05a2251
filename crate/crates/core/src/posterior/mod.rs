//! Posterior computation for `Π(· | X_{t_0}, …, X_{t_n})`.
//!
//! The prior is the pushforward of a Gaussian vector (the driver
//! innovations), so an autoregressive proposal
//!
//! ```text
//! ξ' = √(1 − ρ²) ξ + ρ ζ,    ζ ~ N(0, I)
//! ```
//!
//! leaves the prior invariant and the Metropolis–Hastings acceptance
//! probability reduces to the likelihood ratio `min(1, L(σ')/L(σ))`.
//! Restricting the target to a set (for tail estimation) amounts to a
//! log-target of `−∞` outside it.
//!
//! [`importance`] provides the independent self-normalized importance
//! sampling oracle and [`tail`] a multilevel-splitting estimator for small
//! posterior probabilities.

pub mod importance;
pub mod tail;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::log_likelihood;
use crate::model::{l2_distance, DispersionFn, ObservationPath};
use crate::prior::{driver_to_sigma, sample_driver, GaussianDriver, PriorSpec};
use crate::rng::{self, Rng};

pub use importance::{posterior_mass_is, ImportanceDraws};

/// Unnormalized log-density of the posterior relative to the prior.
pub trait LogTarget: Sync {
    fn log_target(&self, sigma: &DispersionFn) -> Result<f64>;
}

/// The observation likelihood.
#[derive(Clone, Copy, Debug)]
pub struct DataLikelihood<'a>(pub &'a ObservationPath);

impl LogTarget for DataLikelihood<'_> {
    fn log_target(&self, sigma: &DispersionFn) -> Result<f64> {
        log_likelihood(sigma, self.0)
    }
}

/// No observations: the posterior is the prior.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoData;

impl LogTarget for NoData {
    fn log_target(&self, _sigma: &DispersionFn) -> Result<f64> {
        Ok(0.0)
    }
}

/// `inner` restricted to `{σ : ‖σ − σ₀‖₂ ≥ radius}`.
pub struct OutsideBall<'a, T> {
    pub inner: &'a T,
    pub center: &'a DispersionFn,
    pub radius: f64,
}

impl<T: LogTarget> LogTarget for OutsideBall<'_, T> {
    fn log_target(&self, sigma: &DispersionFn) -> Result<f64> {
        if l2_distance(sigma, self.center) >= self.radius {
            self.inner.log_target(sigma)
        } else {
            Ok(f64::NEG_INFINITY)
        }
    }
}

/// Current point of a chain with its cached image and log-target.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub driver: GaussianDriver,
    pub sigma: DispersionFn,
    pub log_l: f64,
    pub step: usize,
}

impl ChainState {
    pub fn new(driver: GaussianDriver, spec: &PriorSpec, target: &impl LogTarget) -> Result<Self> {
        let sigma = driver_to_sigma(&driver, spec)?;
        let log_l = target.log_target(&sigma)?;
        Ok(Self {
            driver,
            sigma,
            log_l,
            step: 0,
        })
    }

    /// Starts from a prior draw.
    pub fn from_prior(spec: &PriorSpec, target: &impl LogTarget, seed: u64) -> Result<Self> {
        Self::new(sample_driver(spec, seed)?, spec, target)
    }

    /// Recomputes the caches and compares them bitwise.
    pub fn is_coherent(&self, spec: &PriorSpec, target: &impl LogTarget) -> bool {
        match ChainState::new(self.driver.clone(), spec, target) {
            Ok(fresh) => {
                fresh.sigma == self.sigma && fresh.log_l.to_bits() == self.log_l.to_bits()
            }
            Err(_) => false,
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size rho must lie in (0, 1], got {rho}")))
    }
}

/// One prior-preserving Metropolis–Hastings step. Returns the new state and
/// whether the proposal was accepted.
pub fn pcn_step(
    state: &ChainState,
    rho: f64,
    target: &impl LogTarget,
    spec: &PriorSpec,
    rng: &mut Rng,
) -> Result<(ChainState, bool)> {
    check_rho(rho)?;
    let keep = (1.0 - rho * rho).sqrt();
    let mut mix = |x: &f64| {
        let zeta: f64 = rng.sample(StandardNormal);
        keep * x + rho * zeta
    };
    let z: Vec<f64> = state.driver.z.iter().map(&mut mix).collect();
    let xi: Vec<f64> = state.driver.increments.iter().map(&mut mix).collect();
    let driver = GaussianDriver::from_innovations(spec, z, xi)?;
    let sigma = driver_to_sigma(&driver, spec)?;
    let log_l = target.log_target(&sigma)?;
    let log_u: f64 = rng.gen::<f64>().ln();
    let accept = log_l > f64::NEG_INFINITY && log_u < log_l - state.log_l;
    let step = state.step + 1;
    if accept {
        Ok((
            ChainState {
                driver,
                sigma,
                log_l,
                step,
            },
            true,
        ))
    } else {
        let mut s = state.clone();
        s.step = step;
        Ok((s, false))
    }
}

/// Chain settings. Burn-in defaults to 20% of `iters` and thinning to 10.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub rho: f64,
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Tune `rho` during burn-in towards 20–40% acceptance.
    pub adapt: bool,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(iters: usize, seed: u64) -> Self {
        Self {
            rho: 0.2,
            iters,
            burn_in: iters / 5,
            thin: 10,
            adapt: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.iters <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "iters ({}) must exceed burn_in ({})",
                self.iters, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of retained samples, `⌈(iters − burn_in)/thin⌉`.
    pub fn retained(&self) -> usize {
        (self.iters - self.burn_in).div_ceil(self.thin)
    }
}

/// Acceptance window for step-size adaptation.
const ADAPT_WINDOW: usize = 50;
const TARGET_ACCEPT: (f64, f64) = (0.2, 0.4);

/// Multiplicative step-size update from a window acceptance rate.
pub(crate) fn adapt_rho(rho: f64, rate: f64) -> f64 {
    let r = if rate > TARGET_ACCEPT.1 {
        rho * 1.3
    } else if rate < TARGET_ACCEPT.0 {
        rho / 1.3
    } else {
        rho
    };
    r.clamp(1e-4, 1.0)
}

/// Runs a chain from `state`, calling `keep` on every retained state.
/// Returns the final state, post-burn-in acceptance rate and frozen `rho`.
pub(crate) fn drive_chain(
    mut state: ChainState,
    cfg: &ChainConfig,
    target: &impl LogTarget,
    spec: &PriorSpec,
    rng: &mut Rng,
    mut keep: impl FnMut(&ChainState),
) -> Result<(ChainState, f64, f64)> {
    let mut rho = cfg.rho;
    let mut window = 0usize;
    let mut accepted_after = 0usize;
    for i in 0..cfg.iters {
        let (next, acc) = pcn_step(&state, rho, target, spec, rng)?;
        state = next;
        if i < cfg.burn_in {
            window += acc as usize;
            if cfg.adapt && (i + 1) % ADAPT_WINDOW == 0 {
                rho = adapt_rho(rho, window as f64 / ADAPT_WINDOW as f64);
                window = 0;
            }
        } else {
            accepted_after += acc as usize;
            if (i - cfg.burn_in).is_multiple_of(cfg.thin) {
                keep(&state);
            }
        }
    }
    let rate = accepted_after as f64 / (cfg.iters - cfg.burn_in) as f64;
    Ok((state, rate, rho))
}

/// Output of [`run_chain`].
#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub samples: Vec<DispersionFn>,
    pub acceptance_rate: f64,
    /// Step size used after burn-in.
    pub rho: f64,
    pub seed: u64,
}

impl ChainOutput {
    /// Knot-wise posterior mean.
    pub fn mean_curve(&self) -> Vec<f64> {
        let m = self.samples[0].values().len();
        let mut acc = vec![0.0; m];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        let k = self.samples.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}

/// Runs a prior-preserving chain started from a prior draw.
pub fn run_chain(target: &impl LogTarget, spec: &PriorSpec, cfg: &ChainConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, 1);
    let init = ChainState::from_prior(spec, target, rng::derive_seed(cfg.seed, 0))?;
    let mut samples = Vec::with_capacity(cfg.retained());
    let (_, acceptance_rate, rho) =
        drive_chain(init, cfg, target, spec, &mut rng, |s| samples.push(s.sigma.clone()))?;
    Ok(ChainOutput {
        samples,
        acceptance_rate,
        rho,
        seed: cfg.seed,
    })
}

/// Estimation route for posterior probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mcmc,
    #[serde(rename = "is")]
    ImportanceSampling,
}

/// Estimated posterior probability of a set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimate {
    pub mass: f64,
    pub se: f64,
    /// `ln mass`; finite even when `mass` underflows.
    pub log_mass: f64,
    pub ess: f64,
    pub samples: usize,
    pub method: Method,
    /// Importance weights collapsed (ESS below threshold) or a splitting
    /// run stalled before reaching the target level.
    pub degenerate: bool,
    /// Splitting levels used (0 when the plain sample fraction sufficed).
    pub levels: usize,
}

/// Budget for [`ball_mass`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Prior draws for importance sampling.
    pub is_draws: usize,
    /// Post-burn-in length of the main chain (pCN steps).
    pub chain_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Samples per splitting level.
    pub level_samples: usize,
    /// Steps between retained samples inside a splitting level.
    pub level_thin: usize,
    pub max_levels: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            is_draws: 10_000,
            chain_iters: 20_000,
            burn_in: 5_000,
            thin: 5,
            level_samples: 1_000,
            level_thin: 3,
            max_levels: 120,
        }
    }
}

/// Posterior probability of the `L₂`-ball complement
/// `{σ : ‖σ − σ₀‖₂ ≥ ε}`.
pub fn ball_mass(
    path: &ObservationPath,
    spec: &PriorSpec,
    sigma0: &DispersionFn,
    eps: f64,
    method: Method,
    budget: &Budget,
    seed: u64,
) -> Result<PosteriorEstimate> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius must be > 0, got {eps}")));
    }
    match method {
        Method::ImportanceSampling => {
            let draws = ImportanceDraws::new(path, spec, budget.is_draws, seed)?;
            Ok(draws.mass(|s| l2_distance(s, sigma0) >= eps))
        }
        Method::Mcmc => tail::ball_complement_mcmc(path, spec, sigma0, eps, budget, seed),
    }
}
