// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod dispersion;
mod error;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use voltrace::consistency::{run_sweep, verify_lemmas, LemmaConfig, SweepConfig};
use voltrace::io;
use voltrace::likelihood::BreakdownRecord;
use voltrace::posterior::{ball_mass, run_chain, ChainConfig, DataLikelihood};
use voltrace::prior::{prior_draws, reachable_target, small_ball_fraction, PriorSpec};
use voltrace::stats::batch_means_se;
use voltrace::{breakdown, q_n, simulate_path, Method};

use config::{
    BallMassSection, LemmaSection, LoglikSection, PriorSection, RunConfig, SamplePosteriorSection,
    SamplePriorSection, SimulateSection, SweepSection, SEED_ENV,
};
use error::{usage, CliError, CliResult};

#[derive(Parser)]
#[command(name = "voltrace", version, about = "Bayesian estimation of a time-varying dispersion coefficient")]
struct Cli {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (falls back to $VOLTRACE_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Single-line JSON on stdout
    #[arg(long, global = true)]
    compact: bool,
    #[command(flatten)]
    prior: PriorSection,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an observation path under a given dispersion
    Simulate(SimulateSection),
    /// Log-likelihood and its decomposition against a reference dispersion
    Loglik(LoglikSection),
    /// Draw dispersion functions from the prior
    SamplePrior(SamplePriorSection),
    /// Run the posterior sampler on an observed path
    SamplePosterior(SamplePosteriorSection),
    /// Posterior probability outside an L2 ball
    BallMass(BallMassSection),
    /// Consistency sweep over sample sizes
    Sweep {
        #[command(flatten)]
        section: SweepSection,
        /// Print the job plan and exit
        #[arg(long)]
        dry_run: bool,
    },
    /// Check the finite-n bounds on the likelihood ratio terms
    VerifyLemmas(LemmaSection),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Loglik(_) => "loglik",
            Command::SamplePrior(_) => "sample-prior",
            Command::SamplePosterior(_) => "sample-posterior",
            Command::BallMass(_) => "ball-mass",
            Command::Sweep { .. } => "sweep",
            Command::VerifyLemmas(_) => "verify-lemmas",
        }
    }
}

/// Resolved configuration plus the derived values every command needs.
struct Ctx {
    run: RunConfig,
    seed: u64,
    prior: PriorSpec,
    hash: String,
}

impl Ctx {
    fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.run.out_dir().join(default_name))
    }

    fn print_json<T: Serialize>(&self, value: &T) -> CliResult<()> {
        let text = if self.run.compact.unwrap_or(false) {
            serde_json::to_string(value)?
        } else {
            serde_json::to_string_pretty(value)?
        };
        emit(&text);
        Ok(())
    }

    /// Sidecar metadata with the resolved configuration and its hash.
    fn meta(&self, body: serde_json::Value) -> serde_json::Value {
        let mut m = json!({
            "config_hash": self.hash,
            "seed": self.seed,
            "run_config": self.run,
        });
        if let (Some(m), serde_json::Value::Object(b)) = (m.as_object_mut(), body) {
            m.extend(b);
        }
        m
    }
}

/// Writes a line to stdout; a closed pipe (`| head`) is not an error.
fn emit(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn sidecar(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn ensure_parent(file: &Path) -> CliResult<()> {
    match file.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str, command: &str) -> CliResult<&'a T> {
    match v {
        Some(x) => Ok(x),
        None => usage(format!("{command} needs --{flag}")),
    }
}

fn read_path(file: &Path) -> CliResult<voltrace::ObservationPath> {
    if !file.exists() {
        return usage(format!("path file not found: {}", file.display()));
    }
    io::read_path(file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))
}

fn cmd_simulate(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.run.simulate;
    let spec = required(&c.sigma0, "sigma0", "simulate")?;
    let n = *required(&c.n, "n", "simulate")?;
    if n == 0 {
        return usage("--n must be at least 1");
    }
    let sigma0 = dispersion::resolve(spec, &ctx.prior)?;
    let path = simulate_path(&sigma0, n, ctx.seed)?;
    let out = ctx.out_path(&c.out, "path.csv");
    ensure_parent(&out)?;
    io::write_path(&out, &path, &[])?;
    io::write_json(
        &sidecar(&out),
        &ctx.meta(json!({
            "n": n,
            "sigma0": spec,
            "quadratic_variation": voltrace::quadratic_variation(&path),
            "integrated_variance": voltrace::integrate_sigma_sq(&sigma0, 0.0, 1.0)?,
        })),
    )?;
    eprintln!("wrote {} ({} rows)", out.display(), n + 1);
    Ok(())
}

fn cmd_loglik(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.run.loglik;
    let file = required(&c.path, "path", "loglik")?;
    let path = read_path(file)?;
    let sigma = dispersion::resolve(required(&c.sigma, "sigma", "loglik")?, &ctx.prior)?;
    let sigma0 = dispersion::resolve(required(&c.sigma0, "sigma0", "loglik")?, &ctx.prior)?;
    let b = breakdown(&sigma, &sigma0, &path)?;
    let record = BreakdownRecord {
        n: path.n(),
        log_l: b.log_l,
        log_r: b.log_r,
        s_n: b.s_n,
        t1: b.t1,
        t2: b.t2,
        q_n: q_n(&sigma, &sigma0, &path)?,
    };
    if let Some(out) = &c.out {
        ensure_parent(out)?;
        io::write_json(out, &record)?;
    }
    ctx.print_json(&record)
}

fn cmd_sample_prior(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.run.sample_prior;
    let count = c.count.unwrap_or(100);
    if count == 0 {
        return usage("--count must be at least 1");
    }
    let draws = prior_draws(&ctx.prior, count, ctx.seed)?;
    let small_ball = match &c.sigma0 {
        Some(spec) => {
            let sigma0 = dispersion::resolve(spec, &ctx.prior)?;
            let eps = c.eps.unwrap_or(0.1 * ctx.prior.params.span());
            Some(json!({
                "sigma0": spec,
                "eps": eps,
                "estimate": small_ball_fraction(&draws, &sigma0, eps),
            }))
        }
        None => None,
    };
    let out = ctx.out_path(&c.out, "prior_draws.csv");
    ensure_parent(&out)?;
    io::write_samples(&out, &draws, &[format!("config_hash: {}", ctx.hash)])?;
    let meta = ctx.meta(json!({
        "prior": ctx.prior,
        "count": count,
        "small_ball": small_ball,
    }));
    io::write_json(&sidecar(&out), &meta)?;
    eprintln!("wrote {} ({count} draws)", out.display());
    Ok(())
}

/// Batch-means diagnostics of `σ(t)` along the chain.
fn ess_diagnostics(samples: &[voltrace::DispersionFn]) -> Vec<serde_json::Value> {
    [0.1, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&t| {
            let x: Vec<f64> = samples.iter().map(|s| s.eval(t)).collect();
            let (se, ess) = if x.len() >= 40 { batch_means_se(&x, 20) } else { (f64::NAN, f64::NAN) };
            json!({ "t": t, "mean": voltrace::stats::mean(&x), "se": se, "ess": ess })
        })
        .collect()
}

fn cmd_sample_posterior(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.run.sample_posterior;
    let path = read_path(required(&c.path, "path", "sample-posterior")?)?;
    let iters = c.iters.unwrap_or(20_000);
    let mut cfg = ChainConfig::new(iters, ctx.seed);
    cfg.burn_in = c.burn_in.unwrap_or(cfg.burn_in);
    cfg.thin = c.thin.unwrap_or(cfg.thin);
    cfg.rho = c.rho.unwrap_or(cfg.rho);
    cfg.adapt = c.adapt.unwrap_or(cfg.adapt);
    let chain = run_chain(&DataLikelihood(&path), &ctx.prior, &cfg)?;
    let out = ctx.out_path(&c.out, "chain.csv");
    ensure_parent(&out)?;
    io::write_samples(&out, &chain.samples, &[format!("config_hash: {}", ctx.hash)])?;
    let meta = ctx.meta(json!({
        "acceptance_rate": chain.acceptance_rate,
        "rho": chain.rho,
        "chain": cfg,
        "samples": chain.samples.len(),
        "ess_diagnostics": ess_diagnostics(&chain.samples),
    }));
    io::write_json(&sidecar(&out), &meta)?;
    eprintln!(
        "wrote {} ({} samples, acceptance {:.3})",
        out.display(),
        chain.samples.len(),
        chain.acceptance_rate
    );
    if chain.acceptance_rate == 0.0 {
        return Err(CliError::Degenerate(
            "no proposal was accepted after burn-in; lower --rho or lengthen the chain".into(),
        ));
    }
    Ok(())
}

fn cmd_ball_mass(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.run.ball_mass;
    let path = read_path(required(&c.path, "path", "ball-mass")?)?;
    let sigma0 = dispersion::resolve(required(&c.sigma0, "sigma0", "ball-mass")?, &ctx.prior)?;
    let eps = c.eps.unwrap_or(0.15 * ctx.prior.params.span());
    let method = match c.method.as_deref().unwrap_or("mcmc") {
        "mcmc" => Method::Mcmc,
        "is" => Method::ImportanceSampling,
        other => return usage(format!("unknown method `{other}` (expected mcmc or is)")),
    };
    let budget = c.budget.resolve();
    let est = ball_mass(&path, &ctx.prior, &sigma0, eps, method, &budget, ctx.seed)?;
    let record = json!({
        "config_hash": ctx.hash,
        "n": path.n(),
        "eps": eps,
        "estimate": est,
    });
    if let Some(out) = &c.out {
        ensure_parent(out)?;
        io::write_json(out, &ctx.meta(record.clone()))?;
    }
    ctx.print_json(&record)?;
    if est.degenerate {
        return Err(CliError::Degenerate(format!(
            "{} estimate collapsed (ess {:.1}); increase the budget or switch method",
            match method {
                Method::Mcmc => "mcmc",
                Method::ImportanceSampling => "importance-sampling",
            },
            est.ess
        )));
    }
    Ok(())
}

fn sweep_config(ctx: &Ctx) -> CliResult<SweepConfig> {
    let c = &ctx.run.sweep;
    let mut cfg = SweepConfig::default_with_seed(ctx.seed);
    cfg.spec = ctx.prior;
    cfg.sigma0 = match &c.sigma0 {
        Some(spec) => dispersion::resolve(spec, &ctx.prior)?.values().to_vec(),
        None => reachable_target(&ctx.prior, |_| 0.0).values().to_vec(),
    };
    cfg.eps = c.eps.unwrap_or(0.15 * ctx.prior.params.span());
    cfg.eps_tilde = c
        .eps_tilde
        .unwrap_or(0.5 * voltrace::consistency::eps_tilde_limit(&ctx.prior.params, cfg.eps));
    if let Some(g) = &c.n_grid {
        cfg.n_grid = g.clone();
    }
    cfg.replications = c.replications.unwrap_or(cfg.replications);
    cfg.is_crossover = c.is_crossover.unwrap_or(cfg.is_crossover);
    cfg.lemma_draws = c.lemma_draws.unwrap_or(cfg.lemma_draws);
    cfg.budget = c.budget.resolve();
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(ctx: &Ctx, dry_run: bool) -> CliResult<()> {
    let cfg = sweep_config(ctx)?;
    if dry_run {
        emit(&format!("# config_hash: {}", ctx.hash));
        emit("n,rep,method,path_seed,estimator_seed");
        for p in cfg.plan() {
            let method = match p.method {
                Method::Mcmc => "mcmc",
                Method::ImportanceSampling => "is",
            };
            emit(&format!("{},{},{method},{},{}", p.n, p.rep, p.path_seed, p.estimator_seed));
        }
        return Ok(());
    }
    let report = run_sweep(&cfg)?;
    let dir = ctx.run.out_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    // the report's own hash covers the sweep settings; the run hash covers
    // how they were produced
    let meta = ctx.meta(json!({ "report": report, "verdict": report.verdict() }));
    io::write_json(&dir.join("sweep.json"), &meta)?;
    let csv = format!("# run_config_hash: {}\n{}", ctx.hash, report.cells_csv());
    io::write_text(&dir.join("sweep.csv"), &csv)?;
    let plot = svg::decay_plot(&report).replacen(
        "-->",
        &format!("-->\n<!-- run_config_hash: {} -->", ctx.hash),
        1,
    );
    io::write_text(&dir.join("sweep.svg"), &plot)?;

    let summary = json!({
        "config_hash": ctx.hash,
        "sizes": report.sizes,
        "decay": report.decay,
        "verdict": report.verdict(),
        "bound_checks": report.bound_checks,
    });
    ctx.print_json(&summary)?;
    if report.cells.iter().all(|c| c.error.is_some()) {
        return Err(CliError::Degenerate("every sweep cell failed".into()));
    }
    Ok(())
}

fn cmd_verify_lemmas(ctx: &Ctx) -> CliResult<()> {
    let c = &ctx.run.verify_lemmas;
    let mut cfg = LemmaConfig::default_with_seed(ctx.seed);
    cfg.spec = ctx.prior;
    cfg.sigma0 = match &c.sigma0 {
        Some(spec) => dispersion::resolve(spec, &ctx.prior)?.values().to_vec(),
        None => reachable_target(&ctx.prior, |_| 0.0).values().to_vec(),
    };
    if let Some(g) = &c.n_grid {
        cfg.n_grid = g.clone();
    }
    cfg.draws = c.draws.unwrap_or(cfg.draws);
    cfg.replications = c.replications.unwrap_or(cfg.replications);
    cfg.eps_tilde = c.eps_tilde.unwrap_or(cfg.eps_tilde);
    let report = verify_lemmas(&cfg)?;
    let dir = ctx.run.out_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    io::write_json(&dir.join("lemmas.json"), &ctx.meta(json!({ "report": report })))?;
    ctx.print_json(&json!({
        "config_hash": ctx.hash,
        "passed": report.passed(),
        "bound": report.bound,
        "rows": report.rows,
        "checks": report.checks,
    }))
}

fn run(cli: Cli) -> CliResult<()> {
    let mut run = match &cli.config {
        Some(file) => RunConfig::load(file)?,
        None => RunConfig::default(),
    };
    let mut flags = RunConfig {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        compact: cli.compact.then_some(true),
        prior: cli.prior.clone(),
        ..RunConfig::default()
    };
    let mut dry_run = false;
    match &cli.command {
        Command::Simulate(s) => flags.simulate = s.clone(),
        Command::Loglik(s) => flags.loglik = s.clone(),
        Command::SamplePrior(s) => flags.sample_prior = s.clone(),
        Command::SamplePosterior(s) => flags.sample_posterior = s.clone(),
        Command::BallMass(s) => flags.ball_mass = s.clone(),
        Command::Sweep { section, dry_run: d } => {
            flags.sweep = section.clone();
            dry_run = *d;
        }
        Command::VerifyLemmas(s) => flags.verify_lemmas = s.clone(),
    }
    run.overlay(&flags);
    let name = cli.command.name();
    let mut run = run.for_command(name);
    let seed = run.resolve_seed(std::env::var(SEED_ENV).ok())?;
    let prior = run.prior.resolve()?;
    let ctx = Ctx {
        hash: run.hash(),
        run,
        seed,
        prior,
    };
    match name {
        "simulate" => cmd_simulate(&ctx),
        "loglik" => cmd_loglik(&ctx),
        "sample-prior" => cmd_sample_prior(&ctx),
        "sample-posterior" => cmd_sample_posterior(&ctx),
        "ball-mass" => cmd_ball_mass(&ctx),
        "sweep" => cmd_sweep(&ctx, dry_run),
        _ => cmd_verify_lemmas(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
