//! Self-normalized importance sampling with prior proposals.
//!
//! Weights are `w_j = exp(log L_n(σ_j) − max_k log L_n(σ_k))`, so the
//! largest weight is exactly one and nothing under- or overflows. The same
//! weight vector also yields log-estimates of the restricted integrals
//! `∫_A R_n dΠ`, whose ratio is the posterior probability of `A`.

use rayon::prelude::*;

use super::{Method, PosteriorEstimate};
use crate::error::Result;
use crate::likelihood::log_likelihood;
use crate::model::{DispersionFn, ObservationPath};
use crate::prior::{prior_draws, PriorSpec};

/// Weight collapse threshold on the effective sample size.
pub const MIN_ESS: f64 = 50.0;

/// Prior draws with their log-likelihoods and normalized weights.
#[derive(Clone, Debug)]
pub struct ImportanceDraws {
    pub sigmas: Vec<DispersionFn>,
    pub log_l: Vec<f64>,
    pub max_log_l: f64,
    pub weights: Vec<f64>,
    pub total_weight: f64,
}

/// `ln ∫_A exp(log-weight) dΠ` held as `offset + ln(scaled_sum)`, where
/// `scaled_sum` is a sum of the shared normalized weights.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogIntegral {
    pub offset: f64,
    pub scaled_sum: f64,
    pub contributing: usize,
    pub draws: usize,
}

impl LogIntegral {
    /// Log of the estimate; `−∞` when no draw contributes.
    pub fn ln(&self) -> f64 {
        if self.scaled_sum > 0.0 {
            self.offset + self.scaled_sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `exp(ln self − ln other)` for two integrals over the same draw set,
    /// evaluated in the shared weight frame (offsets cancel exactly).
    pub fn ratio(&self, other: &LogIntegral) -> f64 {
        debug_assert_eq!(self.offset.to_bits(), other.offset.to_bits());
        self.scaled_sum / other.scaled_sum
    }
}

impl ImportanceDraws {
    pub fn new(path: &ObservationPath, spec: &PriorSpec, draws: usize, seed: u64) -> Result<Self> {
        let sigmas = prior_draws(spec, draws, seed)?;
        Self::from_draws(sigmas, path)
    }

    pub fn from_draws(sigmas: Vec<DispersionFn>, path: &ObservationPath) -> Result<Self> {
        let log_l = sigmas
            .par_iter()
            .map(|s| log_likelihood(s, path))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::from_log_weights(sigmas, log_l))
    }

    pub(crate) fn from_log_weights(sigmas: Vec<DispersionFn>, log_l: Vec<f64>) -> Self {
        let max_log_l = log_l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_l.iter().map(|l| (l - max_log_l).exp()).collect();
        let total_weight = weights.iter().sum();
        Self {
            sigmas,
            log_l,
            max_log_l,
            weights,
            total_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// `(Σ w)² / Σ w²`.
    pub fn ess(&self) -> f64 {
        let sq: f64 = self.weights.iter().map(|w| w * w).sum();
        self.total_weight * self.total_weight / sq
    }

    fn partial_sum(&self, pred: impl Fn(&DispersionFn) -> bool) -> (f64, usize, Vec<bool>) {
        let inside: Vec<bool> = self.sigmas.iter().map(pred).collect();
        let mut sum = 0.0;
        let mut count = 0;
        for (w, &hit) in self.weights.iter().zip(&inside) {
            if hit {
                sum += w;
                count += 1;
            }
        }
        (sum, count, inside)
    }

    /// Posterior probability of `{σ : pred(σ)}`.
    pub fn mass(&self, pred: impl Fn(&DispersionFn) -> bool) -> PosteriorEstimate {
        let (sum, _, inside) = self.partial_sum(pred);
        let mass = sum / self.total_weight;
        let var_num: f64 = self
            .weights
            .iter()
            .zip(&inside)
            .map(|(w, &hit)| {
                let d = if hit { 1.0 - mass } else { -mass };
                w * w * d * d
            })
            .sum();
        let ess = self.ess();
        PosteriorEstimate {
            mass,
            se: var_num.sqrt() / self.total_weight,
            log_mass: mass.ln(),
            ess,
            samples: self.len(),
            method: Method::ImportanceSampling,
            degenerate: ess < MIN_ESS,
            levels: 0,
        }
    }

    /// Log-estimate of `∫_A R_n dΠ` with `R_n = L_n / L_n(σ₀)`, where
    /// `log_l0 = log L_n(σ₀)`.
    pub fn log_integral(&self, log_l0: f64, pred: impl Fn(&DispersionFn) -> bool) -> LogIntegral {
        let (scaled_sum, contributing, _) = self.partial_sum(pred);
        LogIntegral {
            offset: self.max_log_l - log_l0 - (self.len() as f64).ln(),
            scaled_sum,
            contributing,
            draws: self.len(),
        }
    }
}

/// Posterior probability of `{σ : pred(σ)}` by importance sampling from
/// `draws` prior samples.
pub fn posterior_mass_is(
    pred: impl Fn(&DispersionFn) -> bool,
    path: &ObservationPath,
    spec: &PriorSpec,
    draws: usize,
    seed: u64,
) -> Result<PosteriorEstimate> {
    if draws < 1000 {
        return Err(crate::Error::InvalidArgument(format!(
            "importance sampling needs at least 1000 draws, got {draws}"
        )));
    }
    Ok(ImportanceDraws::new(path, spec, draws, seed)?.mass(pred))
}
