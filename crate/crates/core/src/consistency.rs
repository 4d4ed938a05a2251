//! Desk-scale consistency experiments.
//!
//! For every sample size in a grid, fresh paths are simulated under `σ₀`
//! and the posterior probability of `{σ : ‖σ − σ₀‖₂ ≥ ε}` is estimated.
//! Alongside the masses the sweep records the normalizing integrals
//!
//! ```text
//! D_n = ∫ R_n dΠ,      N_n = ∫_{‖σ−σ₀‖₂ ≥ ε} R_n dΠ,      R_n = L_n(σ)/L_n(σ₀)
//! ```
//!
//! and checks the finite-sample forms of the bounds on `T₁`, `T₂`,
//! `∫(σ₀² − σ²)/σ₀²` and `D_n`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{breakdown, integral_bound_lhs, integral_bound_rhs, log_likelihood};
use crate::model::{l2_distance, simulate_path, sup_distance, ClassParams, DispersionFn, ObservationPath};
use crate::posterior::importance::{ImportanceDraws, LogIntegral};
use crate::posterior::{ball_mass, Budget, Method, PosteriorEstimate};
use crate::prior::{prior_draws, PriorSpec};
use crate::rng::{self, derive_seed};
use crate::stats::{self, LinearFit};

/// Slack constant `C` in `T₁ ≥ −2Kε̃/κ² − C/n`. The per-cell inequality
/// `log(v⁰/v) ≥ (v⁰ − v)/v⁰ ≥ −2Kε̃/κ²` already gives `T₁ ≥ −Kε̃/κ²` at
/// every `n`, and pilot runs never came within a factor two of the bound,
/// so no discretisation slack is needed.
pub const LEMMA_T1_SLACK_C: f64 = 0.0;

/// Slack on the `T₂ ≥ −2Kε̃/κ²` bound. Its fluctuation has standard
/// deviation at most `(2Kε̃/κ²)/√(2n)` around a mean no lower than
/// `−Kε̃/κ²`, so at `n ≥ 800` a violation needs a 20-sigma excursion.
pub fn lemma_t2_slack(_n: usize) -> f64 {
    0.0
}

/// Lower bound `−2Kε̃/κ²` shared by both lemmas.
pub fn lemma_bound(params: &ClassParams, eps_tilde: f64) -> f64 {
    -integral_bound_rhs(params.kappa, params.big_k, eps_tilde)
}

/// Largest `ε̃` keeping `κ²cε²/K⁴ − 5Kε̃/κ² > 0` with `c = 1/(2K²/κ²)`.
pub fn eps_tilde_limit(params: &ClassParams, eps: f64) -> f64 {
    let (k, bk) = (params.kappa, params.big_k);
    let c = 1.0 / (2.0 * (bk * bk) / (k * k));
    let rate = k * k * c * eps * eps / bk.powi(4);
    rate * k * k / (5.0 * bk)
}

/// Decay constant `β = 5Kε̃/κ²` of the denominator bound `D_n ≥ e^{−βn}`.
pub fn dn_decay_constant(params: &ClassParams, eps_tilde: f64) -> f64 {
    5.0 * params.big_k * eps_tilde / (params.kappa * params.kappa)
}

/// `log D̂_n`: log of the prior Monte Carlo average of `R_n`.
pub fn estimate_dn(
    path: &ObservationPath,
    spec: &PriorSpec,
    sigma0: &DispersionFn,
    draws: usize,
    seed: u64,
) -> Result<LogIntegral> {
    check_draws(draws)?;
    let d = ImportanceDraws::new(path, spec, draws, seed)?;
    let log_l0 = log_likelihood(sigma0, path)?;
    Ok(d.log_integral(log_l0, |_| true))
}

/// `log N̂_n`: as [`estimate_dn`] restricted to draws with
/// `‖σ − σ₀‖₂ ≥ ε`; `−∞` when none contributes.
pub fn estimate_nn(
    path: &ObservationPath,
    spec: &PriorSpec,
    sigma0: &DispersionFn,
    eps: f64,
    draws: usize,
    seed: u64,
) -> Result<LogIntegral> {
    check_draws(draws)?;
    let d = ImportanceDraws::new(path, spec, draws, seed)?;
    let log_l0 = log_likelihood(sigma0, path)?;
    Ok(d.log_integral(log_l0, |s| l2_distance(s, sigma0) >= eps))
}

/// `(log D̂, log N̂)` on one shared draw set.
pub fn dn_nn_on(
    draws: &ImportanceDraws,
    sigma0: &DispersionFn,
    path: &ObservationPath,
    eps: f64,
) -> Result<(LogIntegral, LogIntegral)> {
    let log_l0 = log_likelihood(sigma0, path)?;
    Ok((
        draws.log_integral(log_l0, |_| true),
        draws.log_integral(log_l0, |s| l2_distance(s, sigma0) >= eps),
    ))
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < 1000 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo integrals need at least 1000 draws, got {draws}"
        )));
    }
    Ok(())
}

/// A class member within sup-distance `eps_tilde` of `sigma0`: `σ₀` plus a
/// random piecewise-linear perturbation, rescaled to a uniform draw of its
/// sup-norm in `[0, ε̃)` and rejected until it lies in the class.
pub fn draw_in_sup_ball(
    sigma0: &DispersionFn,
    params: &ClassParams,
    eps_tilde: f64,
    rng: &mut rng::Rng,
) -> DispersionFn {
    let m = sigma0.m();
    let base = sigma0.values();
    loop {
        // a handful of random nodes, interpolated onto the knots
        let nodes = rng.gen_range(2..=8usize);
        let heights: Vec<f64> = (0..=nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shape: Vec<f64> = (0..=m)
            .map(|j| {
                let x = j as f64 / m as f64 * nodes as f64;
                let k = (x.floor() as usize).min(nodes - 1);
                heights[k] + (x - k as f64) * (heights[k + 1] - heights[k])
            })
            .collect();
        let peak = shape.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        let radius = eps_tilde * rng.gen::<f64>();
        let vals: Vec<f64> = base
            .iter()
            .zip(&shape)
            .map(|(b, s)| b + radius * s / peak * (1.0 - 1e-9))
            .collect();
        if let Ok(s) = DispersionFn::new(vals, *params) {
            debug_assert!(sup_distance(&s, sigma0) < eps_tilde);
            return s;
        }
    }
}

/// Sweep configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_grid: Vec<usize>,
    /// `L₂` ball radius.
    pub eps: f64,
    /// Sup-ball radius for the lemma checks.
    pub eps_tilde: f64,
    pub replications: usize,
    pub spec: PriorSpec,
    /// Knot values of `σ₀`; must lie in the prior's class.
    pub sigma0: Vec<f64>,
    /// Master seed; every cell seed is derived from it.
    pub seed: u64,
    /// Importance sampling for `n ≤ is_crossover`, MCMC above.
    pub is_crossover: usize,
    pub budget: Budget,
    /// Sup-ball draws per cell for the lemma checks.
    pub lemma_draws: usize,
}

impl SweepConfig {
    /// κ = 0.5, K = 2, `σ₀ = κ + ∫ f(0)` (a straight ramp from 0.5 to 1.25),
    /// `ε = 0.15 (K − κ)`, `n ∈ {50, 200, 800, 3200}`, 80 replications.
    pub fn default_with_seed(seed: u64) -> Self {
        let spec = PriorSpec::default();
        let sigma0 = crate::prior::reachable_target(&spec, |_| 0.0);
        let eps = 0.15 * spec.params.span();
        Self {
            n_grid: vec![50, 200, 800, 3200],
            eps,
            eps_tilde: 0.5 * eps_tilde_limit(&spec.params, eps),
            replications: 80,
            spec,
            sigma0: sigma0.values().to_vec(),
            seed,
            is_crossover: 50,
            budget: Budget::default(),
            lemma_draws: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] == 0 {
            return Err(Error::InvalidArgument(
                "n_grid must be non-empty, positive and strictly increasing".into(),
            ));
        }
        if !(self.eps > 0.0 && self.eps_tilde > 0.0) {
            return Err(Error::InvalidArgument("eps and eps_tilde must be > 0".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        self.sigma0_fn().map(|_| ())
    }

    pub fn sigma0_fn(&self) -> Result<DispersionFn> {
        DispersionFn::new(self.sigma0.clone(), self.spec.params)
    }

    pub fn method_for(&self, n: usize) -> Method {
        if n <= self.is_crossover {
            Method::ImportanceSampling
        } else {
            Method::Mcmc
        }
    }

    /// Job plan: one entry per `(n, replication)` cell with its seeds.
    pub fn plan(&self) -> Vec<CellPlan> {
        let mut out = Vec::new();
        for &n in &self.n_grid {
            for rep in 0..self.replications {
                let key = ((n as u64) << 20) ^ rep as u64;
                out.push(CellPlan {
                    n,
                    rep,
                    method: self.method_for(n),
                    path_seed: derive_seed(self.seed, key),
                    estimator_seed: derive_seed(self.seed ^ 0x5EED, key),
                });
            }
        }
        out
    }
}

/// One scheduled cell of the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPlan {
    pub n: usize,
    pub rep: usize,
    pub method: Method,
    pub path_seed: u64,
    pub estimator_seed: u64,
}

/// Result of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub plan: CellPlan,
    pub estimate: Option<PosteriorEstimate>,
    pub log_dn: f64,
    pub log_nn: f64,
    pub nn_contributing: usize,
    /// `exp(ln N̂ − ln D̂)` evaluated on the shared draws equals the
    /// importance-sampling mass bit for bit.
    pub identity_holds: bool,
    pub qv: f64,
    pub t1_min_margin: f64,
    pub t2_min_margin: f64,
    pub t1_violations: usize,
    pub t2_violations: usize,
    pub integral_violations: usize,
    /// `min n S_n` over the shared draws inside the achieved sup-ball.
    pub min_log_r_in_ball: f64,
    pub error: Option<String>,
}

/// Per-`n` aggregate over replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub method: Method,
    pub median_mass: f64,
    /// Bootstrap standard error of the median mass.
    pub median_mass_se: f64,
    pub median_log_mass: f64,
    pub median_log_dn: f64,
    pub median_log_nn: f64,
    pub degenerate_cells: usize,
    pub failed_cells: usize,
}

/// One row of the bound-check table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted `b` in `log mass ≈ a − b n`.
    pub rate: f64,
    pub rate_se: f64,
    pub rate_ci95: (f64, f64),
    pub intercept: f64,
    pub points: usize,
}

impl From<LinearFit> for DecayFit {
    fn from(f: LinearFit) -> Self {
        Self {
            rate: -f.slope,
            rate_se: f.slope_se,
            rate_ci95: (-f.slope_ci95.1, -f.slope_ci95.0),
            intercept: f.intercept,
            points: f.points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub crate_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub sizes: Vec<SizeSummary>,
    pub decay: Option<DecayFit>,
    pub bound_checks: Vec<BoundCheck>,
    /// Sup-ball radius actually populated by the shared prior draws.
    pub achieved_eps_tilde: f64,
    pub provenance: Provenance,
}

/// Verdict on the desk-scale consistency statement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayVerdict {
    pub strictly_decreasing: bool,
    /// `(median₀ − median_last) / √(se₀² + se_last²)`.
    pub separation_in_se: f64,
    pub rate_positive: bool,
    pub passed: bool,
}

impl ConsistencyReport {
    pub fn verdict(&self) -> DecayVerdict {
        let strictly_decreasing = self
            .sizes
            .windows(2)
            .all(|w| w[1].median_mass < w[0].median_mass);
        let (first, last) = (&self.sizes[0], &self.sizes[self.sizes.len() - 1]);
        let se = (first.median_mass_se.powi(2) + last.median_mass_se.powi(2)).sqrt();
        let gap = first.median_mass - last.median_mass;
        let separation_in_se = if se > 0.0 {
            gap / se
        } else if gap > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let rate_positive = self
            .decay
            .as_ref()
            .is_some_and(|d| d.rate > 0.0 && d.rate_ci95.0 > 0.0);
        DecayVerdict {
            strictly_decreasing,
            separation_in_se,
            rate_positive,
            passed: strictly_decreasing && separation_in_se > 3.0 && rate_positive,
        }
    }

    /// Per-cell CSV for plotting.
    pub fn cells_csv(&self) -> String {
        let mut out = format!("# config_hash: {}\n", self.provenance.config_hash);
        out.push_str("n,rep,method,path_seed,estimator_seed,mass,se,log_mass,ess,levels,degenerate,log_dn,log_nn,qv,error\n");
        for c in &self.cells {
            let (mass, se, log_mass, ess, levels, deg) = match &c.estimate {
                Some(e) => (e.mass, e.se, e.log_mass, e.ess, e.levels, e.degenerate),
                None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0, true),
            };
            let method = match c.plan.method {
                Method::Mcmc => "mcmc",
                Method::ImportanceSampling => "is",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.plan.n,
                c.plan.rep,
                method,
                c.plan.path_seed,
                c.plan.estimator_seed,
                crate::io::fmt_f64(mass),
                crate::io::fmt_f64(se),
                crate::io::fmt_f64(log_mass),
                crate::io::fmt_f64(ess),
                levels,
                deg,
                crate::io::fmt_f64(c.log_dn),
                crate::io::fmt_f64(c.log_nn),
                crate::io::fmt_f64(c.qv),
                c.error.as_deref().unwrap_or("").replace(',', ";"),
            ));
        }
        out
    }
}

struct Shared<'a> {
    cfg: &'a SweepConfig,
    sigma0: DispersionFn,
    draws: Vec<DispersionFn>,
    /// Indices of the shared draws inside the achieved sup-ball.
    ball: Vec<usize>,
}

fn run_cell(shared: &Shared<'_>, plan: CellPlan) -> CellResult {
    let mut out = CellResult {
        plan,
        estimate: None,
        log_dn: f64::NAN,
        log_nn: f64::NAN,
        nn_contributing: 0,
        identity_holds: false,
        qv: f64::NAN,
        t1_min_margin: f64::NAN,
        t2_min_margin: f64::NAN,
        t1_violations: 0,
        t2_violations: 0,
        integral_violations: 0,
        min_log_r_in_ball: f64::NAN,
        error: None,
    };
    if let Err(e) = fill_cell(shared, &mut out) {
        out.error = Some(e.to_string());
    }
    out
}

fn fill_cell(shared: &Shared<'_>, out: &mut CellResult) -> Result<()> {
    let cfg = shared.cfg;
    let plan = out.plan;
    let params = cfg.spec.params;
    let path = simulate_path(&shared.sigma0, plan.n, plan.path_seed)?;
    out.qv = crate::model::quadratic_variation(&path);

    let is = ImportanceDraws::from_draws(shared.draws.clone(), &path)?;
    let (dn, nn) = dn_nn_on(&is, &shared.sigma0, &path, cfg.eps)?;
    out.log_dn = dn.ln();
    out.log_nn = nn.ln();
    out.nn_contributing = nn.contributing;
    let is_mass = is.mass(|s| l2_distance(s, &shared.sigma0) >= cfg.eps);
    out.identity_holds = nn.ratio(&dn).to_bits() == is_mass.mass.to_bits();
    let log_l0 = log_likelihood(&shared.sigma0, &path)?;
    out.min_log_r_in_ball = shared
        .ball
        .iter()
        .map(|&j| is.log_l[j] - log_l0)
        .fold(f64::INFINITY, f64::min);

    out.estimate = Some(match plan.method {
        Method::ImportanceSampling => is_mass,
        Method::Mcmc => ball_mass(
            &path,
            &cfg.spec,
            &shared.sigma0,
            cfg.eps,
            Method::Mcmc,
            &cfg.budget,
            plan.estimator_seed,
        )?,
    });

    let bound = lemma_bound(&params, cfg.eps_tilde);
    let rhs = integral_bound_rhs(params.kappa, params.big_k, cfg.eps_tilde);
    let mut rng = rng::stream(plan.estimator_seed, 7);
    let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..cfg.lemma_draws {
        let s = draw_in_sup_ball(&shared.sigma0, &params, cfg.eps_tilde, &mut rng);
        let b = breakdown(&s, &shared.sigma0, &path)?;
        let margin1 = b.t1 - (bound - LEMMA_T1_SLACK_C / plan.n as f64);
        let margin2 = b.t2 - (bound - lemma_t2_slack(plan.n));
        m1 = m1.min(margin1);
        m2 = m2.min(margin2);
        out.t1_violations += (margin1 < 0.0) as usize;
        out.t2_violations += (margin2 < 0.0) as usize;
        out.integral_violations += (integral_bound_lhs(&s, &shared.sigma0) > rhs) as usize;
    }
    out.t1_min_margin = m1;
    out.t2_min_margin = m2;
    Ok(())
}

/// Runs the full sweep. Cells execute on the rayon pool; aggregation is
/// sequential and depends only on the cell outputs.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ConsistencyReport> {
    cfg.validate()?;
    let sigma0 = cfg.sigma0_fn()?;
    let params = cfg.spec.params;
    let draws = prior_draws(&cfg.spec, cfg.budget.is_draws, derive_seed(cfg.seed, u64::MAX))?;

    // the smallest sup-ball around σ₀ holding at least ten shared draws
    let mut sup: Vec<(f64, usize)> = draws
        .iter()
        .enumerate()
        .map(|(j, d)| (sup_distance(d, &sigma0), j))
        .collect();
    sup.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = 10.min(sup.len());
    let achieved_eps_tilde = if k == 0 { f64::INFINITY } else { sup[k - 1].0.max(cfg.eps_tilde) };
    let ball: Vec<usize> = sup
        .iter()
        .take_while(|(d, _)| *d <= achieved_eps_tilde)
        .map(|&(_, j)| j)
        .collect();
    let ball_fraction = ball.len() as f64 / draws.len().max(1) as f64;

    let shared = Shared {
        cfg,
        sigma0,
        draws,
        ball,
    };
    let cells: Vec<CellResult> = cfg
        .plan()
        .into_par_iter()
        .map(|p| run_cell(&shared, p))
        .collect();

    let mut sizes = Vec::new();
    let (mut fit_x, mut fit_y) = (Vec::new(), Vec::new());
    for &n in &cfg.n_grid {
        let group: Vec<&CellResult> = cells.iter().filter(|c| c.plan.n == n).collect();
        let ok: Vec<&PosteriorEstimate> = group.iter().filter_map(|c| c.estimate.as_ref()).collect();
        let masses: Vec<f64> = ok.iter().map(|e| e.mass).collect();
        let logs: Vec<f64> = ok.iter().map(|e| e.log_mass).collect();
        for e in &ok {
            if e.log_mass.is_finite() {
                fit_x.push(n as f64);
                fit_y.push(e.log_mass);
            }
        }
        let finite = |v: Vec<f64>| -> f64 {
            let v: Vec<f64> = v.into_iter().filter(|x| !x.is_nan()).collect();
            if v.is_empty() {
                f64::NAN
            } else {
                stats::median(&v)
            }
        };
        sizes.push(SizeSummary {
            n,
            method: cfg.method_for(n),
            median_mass: if masses.is_empty() { f64::NAN } else { stats::median(&masses) },
            median_mass_se: stats::median_se(&masses, 2000, derive_seed(cfg.seed, n as u64)),
            median_log_mass: finite(logs),
            median_log_dn: finite(group.iter().map(|c| c.log_dn).collect()),
            median_log_nn: finite(group.iter().map(|c| c.log_nn).collect()),
            degenerate_cells: ok.iter().filter(|e| e.degenerate).count(),
            failed_cells: group.iter().filter(|c| c.error.is_some()).count(),
        });
    }
    let decay = stats::linear_fit(&fit_x, &fit_y).map(DecayFit::from);

    let ok_cells: Vec<&CellResult> = cells.iter().filter(|c| c.error.is_none()).collect();
    let lemma_trials = ok_cells.len() * cfg.lemma_draws;
    let bound = lemma_bound(&params, cfg.eps_tilde);
    let mut checks = Vec::new();
    let t1v: usize = ok_cells.iter().map(|c| c.t1_violations).sum();
    checks.push(BoundCheck {
        name: "T1 lower bound".into(),
        trials: lemma_trials,
        violations: t1v,
        passed: t1v == 0,
        detail: format!("T1 >= {bound:.6e} - {LEMMA_T1_SLACK_C}/n on sup-ball draws"),
    });
    let big: Vec<&&CellResult> = ok_cells.iter().filter(|c| c.plan.n >= 800).collect();
    let t2v: usize = big.iter().map(|c| c.t2_violations).sum();
    let t2_trials = big.len() * cfg.lemma_draws;
    checks.push(BoundCheck {
        name: "T2 lower bound (n >= 800)".into(),
        trials: t2_trials,
        violations: t2v,
        passed: t2_trials == 0 || (t2v as f64) < 0.01 * t2_trials as f64,
        detail: format!("T2 >= {bound:.6e} - slack(n), violation rate below 1%"),
    });
    let iv: usize = ok_cells.iter().map(|c| c.integral_violations).sum();
    checks.push(BoundCheck {
        name: "integral bound".into(),
        trials: lemma_trials,
        violations: iv,
        passed: iv == 0,
        detail: "|int (s0^2 - s^2)/s0^2| <= 2K eps_tilde / kappa^2".into(),
    });
    let beta = dn_decay_constant(&params, achieved_eps_tilde);
    let sn_floor = -4.0 * params.big_k * achieved_eps_tilde / (params.kappa * params.kappa);
    let sn_viol = ok_cells
        .iter()
        .filter(|c| c.min_log_r_in_ball / (c.plan.n as f64) < sn_floor)
        .count();
    checks.push(BoundCheck {
        name: "S_n floor on achieved sup-ball".into(),
        trials: ok_cells.len(),
        violations: sn_viol,
        passed: sn_viol == 0,
        detail: format!(
            "min S_n over {} shared draws within sup-distance {achieved_eps_tilde:.4} >= {sn_floor:.4}",
            shared.ball.len()
        ),
    });
    let dn_viol = ok_cells
        .iter()
        .filter(|c| c.log_dn < ball_fraction.ln() + c.min_log_r_in_ball || c.log_dn < -beta * c.plan.n as f64)
        .count();
    checks.push(BoundCheck {
        name: "D_n lower bound".into(),
        trials: ok_cells.len(),
        violations: dn_viol,
        passed: dn_viol == 0,
        detail: format!(
            "log D_n >= log Pi(V) + min n S_n and log D_n >= -beta n with beta = {beta:.4} at eps_tilde = {achieved_eps_tilde:.4}"
        ),
    });
    let idv = ok_cells.iter().filter(|c| !c.identity_holds).count();
    checks.push(BoundCheck {
        name: "N_n / D_n = importance mass".into(),
        trials: ok_cells.len(),
        violations: idv,
        passed: idv == 0,
        detail: "bitwise on shared draws".into(),
    });

    Ok(ConsistencyReport {
        config: cfg.clone(),
        cells,
        sizes,
        decay,
        bound_checks: checks,
        achieved_eps_tilde,
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: crate::io::config_hash(cfg),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Settings for a standalone check of the finite-`n` bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub n_grid: Vec<usize>,
    /// Sup-ball draws per sample size.
    pub draws: usize,
    /// Paths per sample size for the `Q_n` and quadratic-variation medians.
    pub replications: usize,
    pub eps_tilde: f64,
    pub spec: PriorSpec,
    pub sigma0: Vec<f64>,
    pub seed: u64,
}

impl LemmaConfig {
    /// `n ∈ {100, 400, 1600, 6400}`, 200 draws, 100 paths, `ε̃ = 0.05`.
    pub fn default_with_seed(seed: u64) -> Self {
        let spec = PriorSpec::default();
        Self {
            n_grid: vec![100, 400, 1600, 6400],
            draws: 200,
            replications: 100,
            eps_tilde: 0.05,
            sigma0: crate::prior::reachable_target(&spec, |_| 0.0).values().to_vec(),
            spec,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] == 0 {
            return Err(Error::InvalidArgument(
                "n_grid must be non-empty, positive and strictly increasing".into(),
            ));
        }
        if self.draws == 0 || self.replications == 0 || !(self.eps_tilde > 0.0) {
            return Err(Error::InvalidArgument(
                "draws, replications and eps_tilde must be positive".into(),
            ));
        }
        DispersionFn::new(self.sigma0.clone(), self.spec.params).map(|_| ())
    }
}

/// Per-`n` medians over replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub n: usize,
    pub t1_min: f64,
    pub t2_min: f64,
    /// Median over paths of `max Q_n` across the sup-ball draws.
    pub median_sup_qn: f64,
    /// Median of `|QV − ∫σ₀²|`.
    pub median_qv_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub config: LemmaConfig,
    pub bound: f64,
    pub rows: Vec<LemmaRow>,
    pub checks: Vec<BoundCheck>,
    pub provenance: Provenance,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Checks the `T₁`, `T₂` and integral bounds on sup-ball draws and reports
/// how `Q_n` and the quadratic-variation error shrink with `n`.
pub fn verify_lemmas(cfg: &LemmaConfig) -> Result<LemmaReport> {
    cfg.validate()?;
    let params = cfg.spec.params;
    let sigma0 = DispersionFn::new(cfg.sigma0.clone(), params)?;
    let bound = lemma_bound(&params, cfg.eps_tilde);
    let rhs = integral_bound_rhs(params.kappa, params.big_k, cfg.eps_tilde);
    let qv_target = crate::model::integrate_sigma_sq(&sigma0, 0.0, 1.0)?;

    let mut frng = rng::stream(cfg.seed, 11);
    let family: Vec<DispersionFn> = (0..8)
        .map(|_| draw_in_sup_ball(&sigma0, &params, cfg.eps_tilde, &mut frng))
        .collect();

    struct Tally {
        row: LemmaRow,
        t1v: usize,
        t2v: usize,
        iv: usize,
    }
    let tallies: Vec<Tally> = cfg
        .n_grid
        .par_iter()
        .map(|&n| -> Result<Tally> {
            let mut rng = rng::stream(cfg.seed, n as u64);
            let (mut t1v, mut t2v, mut iv) = (0, 0, 0);
            let (mut t1_min, mut t2_min) = (f64::INFINITY, f64::INFINITY);
            for d in 0..cfg.draws {
                let s = draw_in_sup_ball(&sigma0, &params, cfg.eps_tilde, &mut rng);
                let path = simulate_path(&sigma0, n, derive_seed(cfg.seed, ((n as u64) << 24) | d as u64))?;
                let b = breakdown(&s, &sigma0, &path)?;
                t1_min = t1_min.min(b.t1);
                t2_min = t2_min.min(b.t2);
                t1v += (b.t1 < bound - LEMMA_T1_SLACK_C / n as f64) as usize;
                t2v += (b.t2 < bound - lemma_t2_slack(n)) as usize;
                iv += (integral_bound_lhs(&s, &sigma0) > rhs) as usize;
            }
            let mut sup_q = Vec::with_capacity(cfg.replications);
            let mut qv_err = Vec::with_capacity(cfg.replications);
            for r in 0..cfg.replications {
                let seed = derive_seed(cfg.seed ^ 0x9E37, ((n as u64) << 24) | r as u64);
                let path = simulate_path(&sigma0, n, seed)?;
                let mut q = 0.0f64;
                for s in &family {
                    q = q.max(crate::likelihood::q_n(s, &sigma0, &path)?);
                }
                sup_q.push(q);
                qv_err.push((crate::model::quadratic_variation(&path) - qv_target).abs());
            }
            Ok(Tally {
                row: LemmaRow {
                    n,
                    t1_min,
                    t2_min,
                    median_sup_qn: stats::median(&sup_q),
                    median_qv_error: stats::median(&qv_err),
                },
                t1v,
                t2v,
                iv,
            })
        })
        .collect::<Result<_>>()?;

    let trials = cfg.draws * cfg.n_grid.len();
    let t1v: usize = tallies.iter().map(|t| t.t1v).sum();
    let iv: usize = tallies.iter().map(|t| t.iv).sum();
    let big: Vec<&Tally> = tallies.iter().filter(|t| t.row.n >= 800).collect();
    let t2v: usize = big.iter().map(|t| t.t2v).sum();
    let t2_trials = big.len() * cfg.draws;
    let rows: Vec<LemmaRow> = tallies.into_iter().map(|t| t.row).collect();
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let qn_ratio = last.median_sup_qn / first.median_sup_qn;
    let checks = vec![
        BoundCheck {
            name: "T1 lower bound".into(),
            trials,
            violations: t1v,
            passed: t1v == 0,
            detail: format!("T1 >= {bound:.6e} - {LEMMA_T1_SLACK_C}/n"),
        },
        BoundCheck {
            name: "T2 lower bound (n >= 800)".into(),
            trials: t2_trials,
            violations: t2v,
            passed: t2_trials == 0 || (t2v as f64) < 0.01 * t2_trials as f64,
            detail: format!("T2 >= {bound:.6e} - slack(n), violation rate below 1%"),
        },
        BoundCheck {
            name: "integral bound".into(),
            trials,
            violations: iv,
            passed: iv == 0,
            detail: format!("|int (s0^2 - s^2)/s0^2| <= {rhs:.6e}"),
        },
        BoundCheck {
            name: "Q_n decay".into(),
            trials: rows.len(),
            violations: (qn_ratio >= 1.0) as usize,
            passed: rows.len() < 2 || qn_ratio < 1.0,
            detail: format!(
                "median max Q_n {:.4e} (n = {}) -> {:.4e} (n = {})",
                first.median_sup_qn, first.n, last.median_sup_qn, last.n
            ),
        },
    ];
    Ok(LemmaReport {
        config: cfg.clone(),
        bound,
        rows,
        checks,
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: crate::io::config_hash(cfg),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proof_constants() {
        let p = ClassParams::new(0.5, 2.0, 2.0).unwrap();
        let eps = 0.225;
        let lim = eps_tilde_limit(&p, eps);
        let c = 1.0 / (2.0 * 16.0);
        let lhs = |et: f64| 0.25 * c * eps * eps / 16.0 - 5.0 * 2.0 * et / 0.25;
        assert!(lhs(0.5 * lim) > 0.0);
        assert!(lhs(lim).abs() < 1e-15);
        assert!(lhs(1.01 * lim) < 0.0);
        assert_eq!(dn_decay_constant(&p, 0.1), 4.0);
    }

    #[test]
    fn sup_ball_draws_stay_inside() {
        let spec = PriorSpec::default();
        let s0 = crate::prior::reachable_target(&spec, |t| (6.0 * t).sin());
        let mut rng = rng::seeded(1);
        for _ in 0..200 {
            let s = draw_in_sup_ball(&s0, &spec.params, 0.05, &mut rng);
            assert!(sup_distance(&s, &s0) < 0.05);
        }
    }

    #[test]
    fn dn_is_zero_without_data_and_at_point_mass() {
        let spec = PriorSpec::brownian(0.5, 2.0, 20).unwrap();
        let draws = prior_draws(&spec, 1000, 3).unwrap();
        let none = ImportanceDraws::from_log_weights(draws.clone(), vec![0.0; 1000]);
        assert_eq!(none.log_integral(0.0, |_| true).ln(), 0.0);

        let s0 = draws[0].clone();
        let path = simulate_path(&s0, 30, 2).unwrap();
        let point = ImportanceDraws::from_draws(vec![s0.clone(); 1000], &path).unwrap();
        let (dn, nn) = dn_nn_on(&point, &s0, &path, 0.1).unwrap();
        assert_eq!(dn.ln(), 0.0);
        assert_eq!(nn.ln(), f64::NEG_INFINITY);
        assert_eq!(nn.contributing, 0);
    }

    #[test]
    fn validate_rejects_bad_grids() {
        let mut cfg = SweepConfig::default_with_seed(1);
        cfg.n_grid = vec![200, 50];
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![];
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::default_with_seed(1);
        cfg.eps = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lemma_check_small_grid() {
        let mut cfg = LemmaConfig::default_with_seed(4);
        cfg.n_grid = vec![100, 400];
        cfg.draws = 20;
        cfg.replications = 20;
        let a = verify_lemmas(&cfg).unwrap();
        assert!(a.passed(), "{:?}", a.checks);
        assert_eq!(a, verify_lemmas(&cfg).unwrap());
        assert!(a.rows[1].median_sup_qn < a.rows[0].median_sup_qn);
    }
}
