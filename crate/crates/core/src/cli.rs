//! Command line: config files, flag overrides and subcommand dispatch.
//!
//! Config files are flat `key = value` lines. Keys before any section
//! apply to every subcommand; keys under `[name]` apply to subcommand
//! `name` only and win over the global ones. `#` starts a comment.
//! Flags win over the file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::disorder::{replica_seed, DisorderLaw};
use crate::error::{Error, Result};
use crate::hyper::{estimate_cp, verify_moment_bound, HyperEstimate, MomentBoundReport};
use crate::limit_theory::{predict, Target, TestFunction};
use crate::stats::{run_experiment, ExperimentKind, ReplicaPlan};
use crate::walk_kernels::{beta_n, return_probabilities};

/// Exit code when every assertion passes.
pub const EXIT_PASS: i32 = 0;
/// Exit code when an assertion fails.
pub const EXIT_FAIL: i32 = 1;
/// Exit code for usage, config and resource errors.
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_REPLICAS: usize = 500;
pub const DEFAULT_N_GRID: [usize; 3] = [256, 1024, 4096];
pub const DEFAULT_PHI: &str = "gauss:1";
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_P_GRID: [f64; 5] = [4.0, 3.0, 2.5, 2.1, 2.01];
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Return probabilities q_2N(0), R_N and beta_N per horizon.
    Kernels,
    /// E[Z^2] against the overlap MGF, chaos order variances and residuals.
    Moments,
    /// Law of pi L_N / log N against Exp(1).
    Overlap,
    /// One-point law of log Z_N against its log-normal limit.
    Onepoint,
    /// Variance of the averaged log field against the EW prediction.
    Ewfield,
    /// Decomposition diagnostics log Z = log Z^A + ratio + O_N.
    Decomp,
    /// Left tail of log Z_N and E[Z^-2].
    Tails,
    /// Hypercontractivity constants c_p and the moment bound.
    Hyper,
    /// Limit predictions for a test function, printed as JSON.
    Predict,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Kernels,
        Command::Moments,
        Command::Overlap,
        Command::Onepoint,
        Command::Ewfield,
        Command::Decomp,
        Command::Tails,
        Command::Hyper,
        Command::Predict,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Kernels => "kernels",
            Command::Moments => "moments",
            Command::Overlap => "overlap",
            Command::Onepoint => "onepoint",
            Command::Ewfield => "ewfield",
            Command::Decomp => "decomp",
            Command::Tails => "tails",
            Command::Hyper => "hyper",
            Command::Predict => "predict",
        }
    }

    fn experiment(self) -> Option<ExperimentKind> {
        match self {
            Command::Moments => Some(ExperimentKind::Moments),
            Command::Overlap => Some(ExperimentKind::Overlap),
            Command::Onepoint => Some(ExperimentKind::Onepoint),
            Command::Ewfield => Some(ExperimentKind::Ewfield),
            Command::Decomp => Some(ExperimentKind::Decomp),
            Command::Tails => Some(ExperimentKind::Tails),
            _ => None,
        }
    }

    fn needs_beta_hat(self) -> bool {
        !matches!(self, Command::Kernels | Command::Overlap | Command::Hyper)
    }

    /// Subcommands whose assertions use the subcritical limit objects.
    fn needs_subcritical(self) -> bool {
        matches!(self, Command::Predict | Command::Onepoint | Command::Ewfield)
    }

    fn needs_seed(self) -> bool {
        self.experiment().is_some() || self == Command::Hyper
    }
}

#[derive(Debug, Parser)]
#[command(name = "polymer2d", version, about = "2D directed polymer at intermediate disorder: simulations and checks")]
pub struct Cli {
    /// Config file (flat key = value, optional [subcommand] sections)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Rescaled inverse temperature beta_hat (required except for kernels, overlap, hyper)
    #[arg(long, global = true)]
    pub beta_hat: Option<f64>,
    /// Comma-separated horizons N [default: 256,1024,4096]
    #[arg(long, global = true)]
    pub n_grid: Option<String>,
    /// Window exponent gamma in a_N = (log N)^-(1-gamma) [default: 0.2]
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Disorder law: gaussian, rademacher or uniform [default: gaussian]
    #[arg(long, global = true)]
    pub law: Option<String>,
    /// Master seed (mandatory for replica experiments and hyper)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replicas per horizon [default: 500]
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Test function: gauss:S, bump:R, optional *A, or zero [default: gauss:1]
    #[arg(long, global = true)]
    pub phi: Option<String>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 = all cores [default: 0]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Print the compute budget and exit
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Validated settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub beta_hat: Option<f64>,
    pub n_grid: Vec<usize>,
    pub gamma: f64,
    pub law: DisorderLaw,
    pub seed: Option<u64>,
    pub replicas: usize,
    pub phi: TestFunction,
    pub out: PathBuf,
    pub workers: usize,
    pub dry_run: bool,
    pub budget: f64,
    pub p_grid: Vec<f64>,
    pub tol: f64,
}

/// Unvalidated key-value settings before defaults are applied.
#[derive(Clone, Debug, Default, PartialEq)]
struct Raw {
    beta_hat: Option<f64>,
    n_grid: Option<Vec<usize>>,
    gamma: Option<f64>,
    law: Option<DisorderLaw>,
    seed: Option<u64>,
    replicas: Option<usize>,
    phi: Option<TestFunction>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    dry_run: Option<bool>,
    budget: Option<f64>,
    p_grid: Option<Vec<f64>>,
    tol: Option<f64>,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| field_err(field, format!("cannot parse '{}'", v.trim())))
}

fn parse_list<T: std::str::FromStr>(field: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(field, s))
        .collect()
}

impl Raw {
    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "beta_hat" => self.beta_hat = Some(parse_num(key, v)?),
            "n_grid" => self.n_grid = Some(parse_list(key, v)?),
            "gamma" => self.gamma = Some(parse_num(key, v)?),
            "law" => self.law = Some(v.parse().map_err(|e: Error| field_err(key, e))?),
            "seed" => self.seed = Some(parse_num(key, v)?),
            "replicas" => self.replicas = Some(parse_num(key, v)?),
            "phi" => self.phi = Some(v.parse().map_err(|e: Error| field_err(key, e))?),
            "out" => self.out = Some(PathBuf::from(v.trim())),
            "workers" => self.workers = Some(parse_num(key, v)?),
            "dry_run" => self.dry_run = Some(parse_num(key, v)?),
            "budget" => self.budget = Some(parse_num(key, v)?),
            "p_grid" => self.p_grid = Some(parse_list(key, v)?),
            "tol" => self.tol = Some(parse_num(key, v)?),
            _ => return Err(field_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Fields of `other` that are set win.
    fn merge(&mut self, other: Raw) {
        macro_rules! take {
            ($($f:ident),*) => {$(if other.$f.is_some() { self.$f = other.$f; })*};
        }
        take!(beta_hat, n_grid, gamma, law, seed, replicas, phi, out, workers, dry_run, budget, p_grid, tol);
    }
}

/// Global keys plus the section of `command`.
fn parse_text(text: &str, command: Command) -> Result<Raw> {
    let mut global = Raw::default();
    let mut mine = Raw::default();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ctx = |e: Error| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config error: ")));
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !Command::ALL.iter().any(|c| c.name() == name) {
                return Err(ctx(field_err("section", format!("unknown subcommand '{name}'"))));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ctx(Error::Config(format!("expected key = value, got '{line}'"))))?;
        let k = k.trim();
        match &section {
            None => global.set(k, v).map_err(ctx)?,
            Some(s) if s == command.name() => mine.set(k, v).map_err(ctx)?,
            // other sections are checked but not applied
            Some(_) => Raw::default().set(k, v).map_err(ctx)?,
        }
    }
    global.merge(mine);
    Ok(global)
}

impl ExperimentConfig {
    fn from_raw(command: Command, r: Raw) -> Result<Self> {
        let cfg = ExperimentConfig {
            command,
            beta_hat: r.beta_hat,
            n_grid: r.n_grid.unwrap_or_else(|| DEFAULT_N_GRID.to_vec()),
            gamma: r.gamma.unwrap_or(DEFAULT_GAMMA),
            law: r.law.unwrap_or(DisorderLaw::Gaussian),
            seed: r.seed,
            replicas: r.replicas.unwrap_or(DEFAULT_REPLICAS),
            phi: match r.phi {
                Some(p) => p,
                None => DEFAULT_PHI.parse()?,
            },
            out: r.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            workers: r.workers.unwrap_or(0),
            dry_run: r.dry_run.unwrap_or(false),
            budget: r.budget.unwrap_or(crate::stats::replicas::DEFAULT_BUDGET),
            p_grid: r.p_grid.unwrap_or_else(|| DEFAULT_P_GRID.to_vec()),
            tol: r.tol.unwrap_or(DEFAULT_TOL),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text for `command` with no flag overrides.
    pub fn parse(text: &str, command: Command) -> Result<Self> {
        ExperimentConfig::from_raw(command, parse_text(text, command)?)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.command;
        match self.beta_hat {
            None if c.needs_beta_hat() => {
                return Err(field_err("beta_hat", format!("required by '{}'", c.name())));
            }
            Some(b) if !(b >= 0.0) || !b.is_finite() => {
                return Err(field_err("beta_hat", format!("{b} is not a finite nonnegative number")));
            }
            Some(b) if c.needs_subcritical() && !(b > 0.0 && b < 1.0) => {
                return Err(field_err(
                    "beta_hat",
                    format!("{b} refused: '{}' uses limits that require the subcritical regime 0 < beta_hat < 1", c.name()),
                ));
            }
            _ => {}
        }
        if c.needs_seed() && self.seed.is_none() {
            return Err(field_err("seed", format!("required by '{}' (no clock-based default)", c.name())));
        }
        if self.n_grid.is_empty() {
            return Err(field_err("n_grid", "empty"));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(field_err("n_grid", format!("horizon {n} is below 2")));
        }
        if !(self.gamma < 1.0) || !self.gamma.is_finite() {
            return Err(field_err("gamma", format!("{} must be finite and below 1", self.gamma)));
        }
        self.phi.validate().map_err(|e| field_err("phi", e))?;
        if !(self.budget > 0.0) {
            return Err(field_err("budget", "must be positive"));
        }
        if let Some(p) = self.p_grid.iter().find(|&&p| !(p > 2.0 && p <= 4.0)) {
            return Err(field_err("p_grid", format!("{p} outside (2, 4]")));
        }
        if !(self.tol > 0.0) {
            return Err(field_err("tol", "must be positive"));
        }
        Ok(())
    }

    /// Config text that parses back to `self`.
    pub fn to_config_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let mut s = format!("[{}]\n", self.command.name());
        if let Some(b) = self.beta_hat {
            let _ = writeln!(s, "beta_hat = {b:?}");
        }
        let _ = writeln!(s, "n_grid = {}", join(&self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "law = {}", self.law);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "phi = {}", self.phi);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "dry_run = {}", self.dry_run);
        let _ = writeln!(s, "budget = {:?}", self.budget);
        let _ = writeln!(s, "p_grid = {}", join(&self.p_grid.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>()));
        let _ = writeln!(s, "tol = {:?}", self.tol);
        s
    }

    fn plan(&self, kind: ExperimentKind) -> ReplicaPlan {
        let mut p = ReplicaPlan::new(kind, self.n_grid.clone(), self.replicas, self.seed.unwrap_or(0))
            .with_beta_hat(self.beta_hat.unwrap_or(0.0))
            .with_law(self.law)
            .with_gamma(self.gamma)
            .with_phi(self.phi);
        p.budget = self.budget;
        p
    }
}

/// Config from an optional file overlaid with flags.
pub fn parse_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_text(&text, cli.command)?
        }
        None => Raw::default(),
    };
    let mut flags = Raw::default();
    let mut set = |k: &str, v: Option<String>| -> Result<()> {
        match v {
            Some(v) => flags.set(k, &v),
            None => Ok(()),
        }
    };
    set("beta_hat", cli.beta_hat.map(|v| format!("{v:?}")))?;
    set("n_grid", cli.n_grid.clone())?;
    set("gamma", cli.gamma.map(|v| format!("{v:?}")))?;
    set("law", cli.law.clone())?;
    set("seed", cli.seed.map(|v| v.to_string()))?;
    set("replicas", cli.replicas.map(|v| v.to_string()))?;
    set("phi", cli.phi.clone())?;
    set("out", cli.out.as_ref().map(|p| p.display().to_string()))?;
    set("workers", cli.workers.map(|v| v.to_string()))?;
    if cli.dry_run {
        flags.dry_run = Some(true);
    }
    raw.merge(flags);
    ExperimentConfig::from_raw(cli.command, raw)
}

#[derive(Clone, Debug, Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct SimpleSummary<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    data: T,
    verdicts: Vec<Check>,
}

fn write_long_csv(path: &Path, experiment: &str, rows: &[(usize, String, f64, f64)]) -> Result<()> {
    let mut s = String::from("experiment,N,statistic,estimate,se\n");
    for (n, stat, est, se) in rows {
        let _ = writeln!(s, "{experiment},{n},{stat},{est:e},{se:e}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Serialize)]
struct KernelRow {
    n: usize,
    q_2n: f64,
    r_n: f64,
    pi_r_over_log_n: f64,
    beta_n: Option<f64>,
}

fn kernels(cfg: &ExperimentConfig) -> Result<bool> {
    let n_max = *cfg.n_grid.iter().max().unwrap_or(&2);
    let q = return_probabilities(n_max);
    let mut rn = vec![0.0; n_max + 1];
    let mut acc = crate::sum::Neumaier::new();
    for n in 1..=n_max {
        acc.add(q[n]);
        rn[n] = acc.value();
    }
    let mut table = Vec::new();
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        let b = match cfg.beta_hat {
            Some(b) if b > 0.0 => Some(beta_n(b, n)?),
            _ => None,
        };
        let r = KernelRow {
            n,
            q_2n: q[n],
            r_n: rn[n],
            pi_r_over_log_n: std::f64::consts::PI * rn[n] / (n as f64).ln(),
            beta_n: b,
        };
        rows.push((n, "q_2n".to_string(), r.q_2n, 0.0));
        rows.push((n, "r_n".to_string(), r.r_n, 0.0));
        rows.push((n, "pi_r_over_log_n".to_string(), r.pi_r_over_log_n, 0.0));
        if let Some(b) = b {
            rows.push((n, "beta_n".to_string(), b, 0.0));
        }
        println!("N={n} q_2N(0)={:.6e} R_N={:.6} pi R_N/log N={:.6}", r.q_2n, r.r_n, r.pi_r_over_log_n);
        table.push(r);
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_long_csv(&cfg.out.join("results.csv"), "kernels", &rows)?;
    let summary = SimpleSummary {
        config: cfg,
        data: table,
        verdicts: Vec::new(),
    };
    std::fs::write(cfg.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(true)
}

#[derive(Serialize)]
struct HyperData {
    estimates: Vec<HyperEstimate>,
    moment_bounds: Vec<MomentBoundReport>,
}

fn hyper(cfg: &ExperimentConfig) -> Result<bool> {
    let seed = cfg.seed.unwrap_or(0);
    let mut estimates = Vec::new();
    for law in DisorderLaw::ALL {
        for &p in &cfg.p_grid {
            estimates.push(estimate_cp(law, p, cfg.tol)?);
        }
    }
    let mut checks = Vec::new();
    let gauss: Vec<&HyperEstimate> = estimates.iter().filter(|e| e.law == DisorderLaw::Gaussian).collect();
    let worst = gauss
        .iter()
        .map(|e| (e.c_p - (e.p - 1.0).sqrt()).abs())
        .fold(0.0f64, f64::max);
    checks.push(Check {
        name: "gaussian_sqrt_p_minus_1".into(),
        pass: worst <= 1e-3,
        detail: format!("largest |c_p - sqrt(p-1)| = {worst:.2e}"),
    });
    for law in DisorderLaw::ALL {
        let mut pts: Vec<(f64, f64)> = estimates.iter().filter(|e| e.law == law).map(|e| (e.p, e.c_p)).collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let dec = pts.windows(2).all(|w| w[1].1 < w[0].1);
        checks.push(Check {
            name: format!("{}_decreasing_as_p_decreases", law.name()),
            pass: dec,
            detail: pts.iter().map(|(p, c)| format!("c_{p} = {c:.5}")).collect::<Vec<_>>().join(", "),
        });
    }
    let mut bounds = Vec::new();
    for (k, e) in estimates.iter().filter(|e| e.law == DisorderLaw::Rademacher).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(seed, k as u64));
        let r = verify_moment_bound(DisorderLaw::Rademacher, e.p, e.c_p, 100, &mut rng)?;
        checks.push(Check {
            name: format!("moment_bound_p{}", e.p),
            pass: r.satisfied == r.instances,
            detail: format!("{}/{} instances, worst ratio {:.4}", r.satisfied, r.instances, r.worst_ratio),
        });
        bounds.push(r);
    }
    std::fs::create_dir_all(&cfg.out)?;
    let mut csv = String::from("law,p,c_p,margin\n");
    let mut rows = Vec::new();
    for e in &estimates {
        let _ = writeln!(csv, "{},{:?},{:e},{:e}", e.law, e.p, e.c_p, e.certificate.worst_margin);
        rows.push((0, format!("c_p_{}_p{}", e.law, e.p), e.c_p, 0.0));
    }
    std::fs::write(cfg.out.join("hyper.csv"), csv)?;
    write_long_csv(&cfg.out.join("results.csv"), "hyper", &rows)?;
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let pass = checks.iter().all(|c| c.pass);
    let summary = SimpleSummary {
        config: cfg,
        data: HyperData {
            estimates,
            moment_bounds: bounds,
        },
        verdicts: checks,
    };
    std::fs::write(cfg.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(pass)
}

fn predict_cmd(cfg: &ExperimentConfig) -> Result<bool> {
    let b = cfg.beta_hat.unwrap_or(0.0);
    let p = predict(b, &cfg.phi, Target::Polymer)?;
    let json = serde_json::to_string_pretty(&p)?;
    println!("{json}");
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("prediction.json"), json + "\n")?;
    Ok(true)
}

/// Runs a validated config; `Ok(false)` means an assertion failed.
pub fn dispatch(cfg: &ExperimentConfig) -> Result<bool> {
    if cfg.dry_run {
        match cfg.command.experiment() {
            Some(kind) => {
                let plan = cfg.plan(kind);
                println!(
                    "{}: {} replicas x N {:?}: about {:.3e} site updates (budget {:.3e})",
                    kind,
                    plan.n_replicas,
                    plan.n_grid,
                    plan.site_updates(),
                    plan.budget
                );
            }
            None => println!("{}: no replica budget", cfg.command.name()),
        }
        return Ok(true);
    }
    match cfg.command {
        Command::Kernels => kernels(cfg),
        Command::Hyper => hyper(cfg),
        Command::Predict => predict_cmd(cfg),
        c => {
            let kind = c.experiment().expect("replica subcommand");
            let rep = run_experiment(&cfg.plan(kind), cfg.workers)?;
            rep.write(&cfg.out)?;
            for v in &rep.verdicts {
                println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            Ok(rep.passed())
        }
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let cfg = match parse_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(&cfg) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn missing_beta_hat_names_the_field() {
        let e = ExperimentConfig::parse("seed = 1\n", Command::Onepoint).unwrap_err();
        assert!(e.to_string().contains("beta_hat"), "{e}");
    }

    #[test]
    fn supercritical_refused_for_predictions() {
        let e = ExperimentConfig::parse("beta_hat = 1.2\nseed = 1\n", Command::Ewfield).unwrap_err();
        assert!(e.to_string().contains("subcritical"), "{e}");
        // simulation without limit assertions is allowed
        ExperimentConfig::parse("beta_hat = 1.2\nseed = 1\n", Command::Tails).unwrap();
    }

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::parse("beta_hat = 0.4\nseed = 3\n", Command::Onepoint).unwrap();
        assert_eq!(c.gamma, 0.2);
        assert_eq!(c.law, DisorderLaw::Gaussian);
        assert_eq!(c.n_grid, DEFAULT_N_GRID.to_vec());
    }

    #[test]
    fn seed_is_mandatory() {
        let e = ExperimentConfig::parse("beta_hat = 0.4\n", Command::Moments).unwrap_err();
        assert!(e.to_string().contains("seed"));
        ExperimentConfig::parse("beta_hat = 0.4\n", Command::Predict).unwrap();
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let e = ExperimentConfig::parse("beta_hat = 0.4\nseed = 1\nbogus = 2\n", Command::Onepoint).unwrap_err();
        assert!(e.to_string().contains("line 3") && e.to_string().contains("bogus"), "{e}");
        let e = ExperimentConfig::parse("[nope]\n", Command::Onepoint).unwrap_err();
        assert!(e.to_string().contains("nope"));
        let e = ExperimentConfig::parse("[tails]\nwhat = 1\n", Command::Onepoint).unwrap_err();
        assert!(e.to_string().contains("what"));
        let e = ExperimentConfig::parse("beta_hat = abc\n", Command::Onepoint).unwrap_err();
        assert!(e.to_string().contains("beta_hat"));
    }

    #[test]
    fn sections_override_globals() {
        let text = "beta_hat = 0.3\nseed = 5\nreplicas = 10\n[onepoint]\nreplicas = 20\n[tails]\nreplicas = 30\n";
        assert_eq!(ExperimentConfig::parse(text, Command::Onepoint).unwrap().replicas, 20);
        assert_eq!(ExperimentConfig::parse(text, Command::Tails).unwrap().replicas, 30);
        assert_eq!(ExperimentConfig::parse(text, Command::Moments).unwrap().replicas, 10);
    }

    #[test]
    fn config_round_trip() {
        let text = "beta_hat = 0.37\nseed = 99\nn_grid = 64,128\nlaw = rademacher\nphi = bump:0.3*2\ngamma = 0.15\nbudget = 1e9\np_grid = 2.2,3\n";
        for cmd in Command::ALL {
            let a = ExperimentConfig::parse(text, cmd).unwrap();
            let b = ExperimentConfig::parse(&a.to_config_text(), cmd).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "beta_hat = 0.3\nseed = 1\nreplicas = 7\n").unwrap();
        let cli = Cli::try_parse_from([
            "polymer2d",
            "--config",
            path.to_str().unwrap(),
            "--replicas",
            "9",
            "--law",
            "uniform",
            "onepoint",
        ])
        .unwrap();
        let c = parse_config(&cli).unwrap();
        assert_eq!(c.replicas, 9);
        assert_eq!(c.law, DisorderLaw::Uniform);
        assert_eq!(c.beta_hat, Some(0.3));
    }

    #[test]
    fn help_lists_every_flag() {
        let help = Cli::command().render_long_help().to_string();
        for flag in [
            "--config", "--beta-hat", "--n-grid", "--gamma", "--law", "--seed", "--replicas", "--phi", "--out",
            "--workers", "--dry-run",
        ] {
            assert!(help.contains(flag), "{flag}");
        }
        for c in Command::ALL {
            assert!(help.contains(c.name()));
        }
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["polymer2d", "--beta-hat", "0.5", "--out", out, "predict"]), EXIT_PASS);
        let p: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("prediction.json")).unwrap()).unwrap();
        assert!((p["c_hat_sq"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(run(["polymer2d", "predict"]), EXIT_USAGE);
        assert_eq!(run(["polymer2d", "--beta-hat", "1.2", "predict"]), EXIT_USAGE);
        assert_eq!(run(["polymer2d", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            run(["polymer2d", "--beta-hat", "0.4", "--seed", "1", "--dry-run", "ewfield"]),
            EXIT_PASS
        );
        // a resource error is a usage-class failure
        assert_eq!(
            run([
                "polymer2d", "--beta-hat", "0.4", "--seed", "1", "--n-grid", "1000000", "--out", out, "onepoint"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn kernels_writes_table() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["polymer2d", "--n-grid", "10,100000", "--out", out, "kernels"]), EXIT_PASS);
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.contains("kernels,100000,r_n,"));
    }
}
