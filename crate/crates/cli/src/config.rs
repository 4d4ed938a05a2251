//! Run configuration: a JSON file overlaid by command-line flags.
//!
//! Every section mirrors the flags of one command, with all fields
//! optional so that a file can set any subset. The resolved configuration
//! is written next to each output; passing that file back through
//! `--config` reproduces the run.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use voltrace::prior::PriorSpec;

use crate::error::{usage, CliError, CliResult};

pub const SEED_ENV: &str = "VOLTRACE_SEED";

/// Copies every `Some` field of `$from` into `$into`.
macro_rules! overlay {
    ($into:expr, $from:expr; $($f:ident),+ $(,)?) => {
        $( if $from.$f.is_some() { $into.$f = $from.$f.clone(); } )+
    };
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    /// Lower bound κ of the dispersion class
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Upper bound K of the dispersion class
    #[arg(long = "big-k", global = true)]
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub big_k: Option<f64>,
    /// Prior driver: bm (Brownian with normal start) or rl (Riemann–Liouville)
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub driver: Option<String>,
    /// Riemann–Liouville order β in (0, 1)
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Knot intervals of the dispersion grid
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl PriorSection {
    fn overlay(&mut self, o: &Self) {
        overlay!(self, o; kappa, big_k, driver, beta, m);
    }

    pub fn resolve(&self) -> CliResult<PriorSpec> {
        let d = PriorSpec::default();
        let kappa = self.kappa.unwrap_or(d.params.kappa);
        let big_k = self.big_k.unwrap_or(d.params.big_k);
        let m = self.m.unwrap_or(d.m);
        Ok(match self.driver.as_deref().unwrap_or("bm") {
            "bm" => PriorSpec::brownian(kappa, big_k, m)?,
            "rl" => PriorSpec::riemann_liouville(kappa, big_k, self.beta.unwrap_or(0.75), m)?,
            other => return usage(format!("unknown driver `{other}` (expected bm or rl)")),
        })
    }
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// True dispersion σ₀ (const:c, affine:a,b, file:<csv>, prior-draw:<seed>)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<String>,
    /// Number of increments; the path has n + 1 points
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Output CSV (default: <out-dir>/path.csv)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoglikSection {
    /// Path CSV with header `t,x`
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Dispersion σ to evaluate
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<String>,
    /// Reference dispersion σ₀ for the decomposition
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<String>,
    /// Also write the JSON record to this file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePriorSection {
    /// Number of draws
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Centre for a sup-norm small-ball estimate
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<String>,
    /// Small-ball radius (default 0.1 (K − κ))
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Output CSV (default: <out-dir>/prior_draws.csv)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePosteriorSection {
    /// Path CSV with header `t,x`
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Total chain length
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Discarded initial steps (default 20% of iters)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    /// Initial proposal step size in (0, 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Tune rho during burn-in
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapt: Option<bool>,
    /// Output CSV (default: <out-dir>/chain.csv)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Estimator budget flags shared by `ball-mass` and `sweep`.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// Prior draws for importance sampling
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_draws: Option<usize>,
    /// Post-burn-in MCMC steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_iters: Option<usize>,
    /// Discarded steps before the main chain
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Samples per splitting level
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_samples: Option<usize>,
}

impl BudgetSection {
    fn overlay(&mut self, o: &Self) {
        overlay!(self, o; is_draws, chain_iters, burn_in, level_samples);
    }

    pub fn resolve(&self) -> voltrace::posterior::Budget {
        let mut b = voltrace::posterior::Budget::default();
        b.is_draws = self.is_draws.unwrap_or(b.is_draws);
        b.chain_iters = self.chain_iters.unwrap_or(b.chain_iters);
        b.burn_in = self.burn_in.unwrap_or(b.burn_in);
        b.level_samples = self.level_samples.unwrap_or(b.level_samples);
        b
    }
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallMassSection {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Ball centre σ₀
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<String>,
    /// L2 radius (default 0.15 (K − κ))
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// mcmc or is
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[command(flatten)]
    pub budget: BudgetSection,
    /// Also write the JSON estimate to this file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Comma-separated, strictly increasing sample sizes
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    /// Simulated paths per sample size (default 80)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    /// L2 radius (default 0.15 (K − κ))
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Sup-ball radius for the bound checks
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_tilde: Option<f64>,
    /// True dispersion (default: the straight ramp reached by a zero driver)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<String>,
    /// Largest n handled by importance sampling
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_crossover: Option<usize>,
    /// Sup-ball draws per cell for the bound checks
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma_draws: Option<usize>,
    #[command(flatten)]
    pub budget: BudgetSection,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaSection {
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    /// Sup-ball draws per sample size
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    /// Paths per sample size for the medians
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_tilde: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Single-line JSON on stdout
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compact: Option<bool>,
    #[serde(skip_serializing_if = "is_default")]
    pub prior: PriorSection,
    #[serde(skip_serializing_if = "is_default")]
    pub simulate: SimulateSection,
    #[serde(skip_serializing_if = "is_default")]
    pub loglik: LoglikSection,
    #[serde(skip_serializing_if = "is_default")]
    pub sample_prior: SamplePriorSection,
    #[serde(skip_serializing_if = "is_default")]
    pub sample_posterior: SamplePosteriorSection,
    #[serde(skip_serializing_if = "is_default")]
    pub ball_mass: BallMassSection,
    #[serde(skip_serializing_if = "is_default")]
    pub sweep: SweepSection,
    #[serde(skip_serializing_if = "is_default")]
    pub verify_lemmas: LemmaSection,
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

impl RunConfig {
    /// Reads a config file. Metadata files written by earlier runs are
    /// accepted too; their `run_config` member is used.
    pub fn load(file: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", file.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", file.display())))?;
        if let Some(inner) = value.get_mut("run_config") {
            value = inner.take();
        }
        serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", file.display())))
    }

    /// Applies flag values over this configuration.
    pub fn overlay(&mut self, o: &RunConfig) {
        overlay!(self, o; seed, out_dir, compact);
        self.prior.overlay(&o.prior);
        overlay!(self.simulate, o.simulate; sigma0, n, out);
        overlay!(self.loglik, o.loglik; path, sigma, sigma0, out);
        overlay!(self.sample_prior, o.sample_prior; count, sigma0, eps, out);
        overlay!(self.sample_posterior, o.sample_posterior; path, iters, burn_in, thin, rho, adapt, out);
        overlay!(self.ball_mass, o.ball_mass; path, sigma0, eps, method, out);
        self.ball_mass.budget.overlay(&o.ball_mass.budget);
        overlay!(self.sweep, o.sweep; n_grid, replications, eps, eps_tilde, sigma0, is_crossover, lemma_draws);
        self.sweep.budget.overlay(&o.sweep.budget);
        overlay!(self.verify_lemmas, o.verify_lemmas; n_grid, draws, replications, eps_tilde, sigma0);
    }

    /// Fills the seed from `VOLTRACE_SEED` when neither flag nor file set it.
    pub fn resolve_seed(&mut self, env: Option<String>) -> CliResult<u64> {
        if self.seed.is_none() {
            self.seed = match env {
                Some(s) => match s.trim().parse() {
                    Ok(v) => Some(v),
                    Err(_) => return usage(format!("{SEED_ENV}=`{s}` is not an unsigned integer")),
                },
                None => Some(0),
            };
        }
        Ok(self.seed.unwrap_or(0))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Identity of the computation: output locations and display flags are
    /// left out so moving a run does not change its hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.compact = None;
        c.simulate.out = None;
        c.loglik.out = None;
        c.sample_prior.out = None;
        c.sample_posterior.out = None;
        c.ball_mass.out = None;
        voltrace::io::config_hash(&c)
    }

    /// Keeps only the global settings and the section of one command.
    pub fn for_command(&self, command: &str) -> RunConfig {
        let mut c = RunConfig {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            compact: self.compact,
            prior: self.prior.clone(),
            ..RunConfig::default()
        };
        match command {
            "simulate" => c.simulate = self.simulate.clone(),
            "loglik" => c.loglik = self.loglik.clone(),
            "sample-prior" => c.sample_prior = self.sample_prior.clone(),
            "sample-posterior" => c.sample_posterior = self.sample_posterior.clone(),
            "ball-mass" => c.ball_mass = self.ball_mass.clone(),
            "sweep" => c.sweep = self.sweep.clone(),
            "verify-lemmas" => c.verify_lemmas = self.verify_lemmas.clone(),
            _ => {}
        }
        c
    }
}
