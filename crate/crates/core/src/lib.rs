//! Non-parametric Bayesian estimation of the dispersion coefficient `σ(t)`
//! of `dX_t = σ(t) dW_t` from observations on the grid `t_i = i/n`.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: piecewise-linear dispersion functions, exact path simulation,
//!   `L₂`/`L∞` distances and quadratic variation;
//! - [`likelihood`]: the Gaussian increment likelihood and its
//!   normalized log-ratio decomposition `S_n = T₁ + T₂`;
//! - [`prior`]: integrated-link priors driven by Brownian or
//!   Riemann–Liouville processes;
//! - [`posterior`]: a prior-preserving MCMC sampler on the Gaussian driver
//!   and a self-normalized importance-sampling oracle;
//! - [`consistency`]: sweeps over `n` measuring how fast the posterior
//!   leaves every `L₂` neighbourhood complement, plus bound checks.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consistency;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod posterior;
pub mod prior;
mod quad;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{breakdown, log_likelihood, q_n, LikelihoodBreakdown};
pub use model::{
    integrate_sigma_sq, l2_distance, quadratic_variation, simulate_path, sup_distance,
    ClassParams, DispersionFn, ObservationPath,
};
pub use posterior::{ChainState, Method, PosteriorEstimate};
pub use prior::{GaussianDriver, PriorSpec};
