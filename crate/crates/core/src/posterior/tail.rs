//! Posterior probability of an `L₂`-ball complement by MCMC.
//!
//! When the complement carries a visible share of the posterior, the
//! estimate is the fraction of retained chain samples outside the ball,
//! with a batch-means standard error. Once that share drops below what a
//! chain can resolve, the estimate switches to multilevel splitting
//! (subset simulation): intermediate radii `b₁ < b₂ < … < ε` are chosen
//! adaptively as upper quantiles of the distance to `σ₀`, and each
//! conditional probability `Π(d ≥ b_{k+1} | d ≥ b_k, data)` is estimated
//! with the same prior-preserving sampler restricted to `{d ≥ b_k}`.

use super::{
    adapt_rho, drive_chain, ChainConfig, ChainState, DataLikelihood, Method, OutsideBall,
    PosteriorEstimate,
};
use super::Budget;
use crate::error::Result;
use crate::model::{l2_distance, DispersionFn, ObservationPath};
use crate::prior::PriorSpec;
use crate::rng;
use crate::stats::batch_means_se;

/// Conditional probability targeted at each splitting level.
pub const LEVEL_PROBABILITY: f64 = 0.1;

const BATCHES: usize = 20;

/// Au–Beck correlation factor `γ` of a level estimator built from
/// `chains` Markov chains of indicator values.
fn correlation_factor(chains: &[Vec<bool>], p: f64) -> f64 {
    let total: usize = chains.iter().map(Vec::len).sum();
    let nc = chains.len();
    let len = chains.iter().map(Vec::len).max().unwrap_or(0);
    let r0 = p * (1.0 - p);
    if r0 <= 0.0 || len < 2 {
        return 0.0;
    }
    let mut gamma = 0.0;
    for lag in 1..len {
        let mut acc = 0.0;
        let mut pairs = 0usize;
        for c in chains {
            for l in 0..c.len().saturating_sub(lag) {
                acc += (c[l] && c[l + lag]) as u8 as f64;
                pairs += 1;
            }
        }
        if pairs == 0 {
            break;
        }
        let r = acc / pairs as f64 - p * p;
        let weight = 1.0 - (lag * nc) as f64 / total as f64;
        if weight <= 0.0 {
            break;
        }
        gamma += 2.0 * weight * r / r0;
    }
    gamma.max(0.0)
}

struct Level {
    states: Vec<ChainState>,
    dist: Vec<f64>,
    /// Indicator chains are rebuilt per threshold, so keep the chain layout.
    chain_of: Vec<usize>,
}

impl Level {
    fn chains_for(&self, threshold: f64) -> Vec<Vec<bool>> {
        let nchains = self.chain_of.iter().copied().max().map_or(0, |c| c + 1);
        let mut out = vec![Vec::new(); nchains];
        for (&c, &d) in self.chain_of.iter().zip(&self.dist) {
            out[c].push(d >= threshold);
        }
        out
    }
}

pub(crate) fn ball_complement_mcmc(
    path: &ObservationPath,
    spec: &PriorSpec,
    sigma0: &DispersionFn,
    eps: f64,
    budget: &Budget,
    seed: u64,
) -> Result<PosteriorEstimate> {
    // two class members never differ by more than K − κ
    if eps > spec.params.span() {
        return Ok(PosteriorEstimate {
            mass: 0.0,
            se: 0.0,
            log_mass: f64::NEG_INFINITY,
            ess: 0.0,
            samples: 0,
            method: Method::Mcmc,
            degenerate: false,
            levels: 0,
        });
    }
    let likelihood = DataLikelihood(path);
    let mut rng = rng::stream(seed, 1);
    let init = ChainState::from_prior(spec, &likelihood, rng::derive_seed(seed, 0))?;
    let cfg = ChainConfig {
        rho: 0.2,
        iters: budget.burn_in + budget.chain_iters,
        burn_in: budget.burn_in,
        thin: budget.thin.max(1),
        adapt: true,
        seed,
    };
    cfg.validate()?;
    let mut states = Vec::with_capacity(cfg.retained());
    let (_, _, mut rho) = drive_chain(init, &cfg, &likelihood, spec, &mut rng, |s| {
        states.push(s.clone())
    })?;
    let dist: Vec<f64> = states.iter().map(|s| l2_distance(&s.sigma, sigma0)).collect();

    // plain fraction, with its batch-means error
    let indicator: Vec<f64> = dist.iter().map(|&d| (d >= eps) as u8 as f64).collect();
    let frac0 = indicator.iter().sum::<f64>() / indicator.len() as f64;
    let (se0, ess0) = batch_means_se(&indicator, BATCHES);
    if frac0 >= LEVEL_PROBABILITY {
        return Ok(PosteriorEstimate {
            mass: frac0,
            se: se0,
            log_mass: frac0.ln(),
            ess: ess0,
            samples: indicator.len(),
            method: Method::Mcmc,
            degenerate: false,
            levels: 0,
        });
    }

    let n_level = budget.level_samples.max(10);
    let mut level = Level {
        chain_of: vec![0; states.len()],
        states,
        dist,
    };
    let mut log_mass = 0.0;
    // squared coefficient of variation accumulated over levels
    let mut cv2 = 0.0;
    let mut first = true;
    let mut prev_threshold = f64::NEG_INFINITY;
    let mut levels = 0usize;
    let mut degenerate = false;
    let mut last_ess = ess0;
    loop {
        let n = level.dist.len();
        let hits = level.dist.iter().filter(|&&d| d >= eps).count();
        let frac = hits as f64 / n as f64;
        let mut sorted = level.dist.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = ((1.0 - LEVEL_PROBABILITY) * n as f64).floor() as usize;
        let threshold = sorted[cut.min(n - 1)];
        let stalled = threshold <= prev_threshold || levels >= budget.max_levels;
        if frac >= LEVEL_PROBABILITY || stalled || hits == n {
            // final conditional probability
            if frac > 0.0 {
                log_mass += frac.ln();
                let gamma = if first {
                    let (se, _) = batch_means_se(&indicator, BATCHES);
                    (se * se * n as f64 / (frac * (1.0 - frac))).max(1.0) - 1.0
                } else {
                    correlation_factor(&level.chains_for(eps), frac)
                };
                cv2 += (1.0 - frac) / (n as f64 * frac) * (1.0 + gamma);
                last_ess = n as f64 / (1.0 + gamma);
            } else {
                log_mass = f64::NEG_INFINITY;
                degenerate = true;
            }
            if stalled && frac < LEVEL_PROBABILITY {
                degenerate = true;
            }
            break;
        }

        // promote the samples at or above the threshold
        let seeds: Vec<usize> = (0..n).filter(|&i| level.dist[i] >= threshold).collect();
        let p_k = seeds.len() as f64 / n as f64;
        let gamma = if first {
            let ind: Vec<f64> = level.dist.iter().map(|&d| (d >= threshold) as u8 as f64).collect();
            let (se, _) = batch_means_se(&ind, BATCHES);
            (se * se * n as f64 / (p_k * (1.0 - p_k))).max(1.0) - 1.0
        } else {
            correlation_factor(&level.chains_for(threshold), p_k)
        };
        log_mass += p_k.ln();
        cv2 += (1.0 - p_k) / (n as f64 * p_k) * (1.0 + gamma);
        levels += 1;
        first = false;
        prev_threshold = threshold;

        let restricted = OutsideBall {
            inner: &likelihood,
            center: sigma0,
            radius: threshold,
        };
        let per_chain = n_level.div_ceil(seeds.len());
        let mut next = Level {
            states: Vec::with_capacity(per_chain * seeds.len()),
            dist: Vec::with_capacity(per_chain * seeds.len()),
            chain_of: Vec::with_capacity(per_chain * seeds.len()),
        };
        let mut accepted = 0usize;
        let mut steps = 0usize;
        for (c, &i) in seeds.iter().enumerate() {
            let mut state = level.states[i].clone();
            // the restricted log-target equals the likelihood on the seed
            state.step = 0;
            next.states.push(state.clone());
            next.dist.push(level.dist[i]);
            next.chain_of.push(c);
            for _ in 1..per_chain {
                for _ in 0..budget.level_thin.max(1) {
                    let (s, acc) = super::pcn_step(&state, rho, &restricted, spec, &mut rng)?;
                    state = s;
                    accepted += acc as usize;
                    steps += 1;
                }
                next.dist.push(l2_distance(&state.sigma, sigma0));
                next.states.push(state.clone());
                next.chain_of.push(c);
            }
        }
        if steps > 0 {
            rho = adapt_rho(rho, accepted as f64 / steps as f64);
        }
        level = next;
    }

    let mass = log_mass.exp();
    Ok(PosteriorEstimate {
        mass,
        se: mass * cv2.sqrt(),
        log_mass,
        ess: last_ess,
        samples: level.dist.len(),
        method: Method::Mcmc,
        degenerate,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_chains_have_no_correlation_penalty() {
        let chains: Vec<Vec<bool>> = (0..100).map(|i| vec![i % 10 == 0]).collect();
        assert_eq!(correlation_factor(&chains, 0.1), 0.0);
    }

    #[test]
    fn sticky_chains_are_penalised() {
        let chains: Vec<Vec<bool>> = (0..20).map(|i| vec![i % 5 == 0; 10]).collect();
        assert!(correlation_factor(&chains, 0.2) > 1.0);
    }
}
