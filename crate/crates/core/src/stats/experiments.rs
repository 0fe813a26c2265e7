//! The experiment battery: replica runs, statistics and verdicts.
//!
//! `results.csv` is long format with columns
//! `experiment,N,statistic,estimate,se`; exact quantities carry `se = 0`
//! and KS distances carry the null scale `1/sqrt(n)`. `summary.json`
//! holds the plan, trend reports and verdicts; `replicas.csv` the raw
//! per-replica values.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Exp, Normal};

use super::estimators::{
    fit_left_tail, ks_distance, ks_scale, mean, mean_se, ratio, second_moment_known_mean, variance_se,
    EstimatorResult, TailFit, TrendReport, KS_MIN_SAMPLES,
};
use super::replicas::{map_replicas, ExperimentKind, ReplicaPlan};
use crate::chaos::{chaos_eval, ew_variance_prediction_via_chaos, order_variance_exact, residual_sequence};
use crate::disorder::{replica_seed, sigma_n, Environment};
use crate::error::{Error, Result};
use crate::limit_theory::{predict, sigma_hat_sq, sigma_phi_sq, Target, TestFunction};
use crate::partition::{
    averaged_log_field, compute_z, log_field_pairing, ratio_and_o_from_logs, sweep_half_width,
    sweep_log_z, Parity, SweepField, WindowSpec,
};
use crate::sum::Neumaier;
use crate::walk_kernels::{beta_n, default_radius, overlap_mgf_exact, sample_overlap};

/// Number of intervals for the chaos-side field prediction.
pub const THETA_M: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub n: usize,
    pub statistic: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaRecord {
    pub replica: u64,
    pub n: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub plan: ReplicaPlan,
    pub rows: Vec<ResultRow>,
    pub trends: Vec<TrendReport>,
    pub verdicts: Vec<Verdict>,
    pub tail_fits: Vec<(usize, TailFit)>,
    #[serde(skip)]
    pub columns: Vec<String>,
    #[serde(skip)]
    pub replicas: Vec<ReplicaRecord>,
}

impl ExperimentReport {
    fn new(plan: &ReplicaPlan, columns: &[&str]) -> Self {
        ExperimentReport {
            experiment: plan.kind,
            plan: plan.clone(),
            rows: Vec::new(),
            trends: Vec::new(),
            verdicts: Vec::new(),
            tail_fits: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            replicas: Vec::new(),
        }
    }

    fn row(&mut self, n: usize, statistic: &str, r: &EstimatorResult) {
        self.rows.push(ResultRow {
            experiment: self.experiment.name().to_string(),
            n,
            statistic: statistic.to_string(),
            estimate: r.estimate,
            se: r.std_error,
        });
    }

    fn exact(&mut self, n: usize, statistic: &str, v: f64) {
        self.row(n, statistic, &EstimatorResult::exact(v));
    }

    fn verdict(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    /// First row with this statistic at this `N`.
    pub fn get(&self, n: usize, statistic: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.n == n && r.statistic == statistic)
    }

    pub fn trend(&self, statistic: &str) -> Option<&TrendReport> {
        self.trends.iter().find(|t| t.statistic == statistic)
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Values of one replica column at one `N`, in replica order.
    pub fn column(&self, n: usize, name: &str) -> Vec<f64> {
        let Some(k) = self.columns.iter().position(|c| c == name) else {
            return Vec::new();
        };
        self.replicas.iter().filter(|r| r.n == n).map(|r| r.values[k]).collect()
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from("experiment,N,statistic,estimate,se\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:e},{:e}", r.experiment, r.n, r.statistic, r.estimate, r.se);
        }
        s
    }

    pub fn replicas_csv(&self) -> String {
        let mut s = String::from("replica,N");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for r in &self.replicas {
            let _ = write!(s, "{},{}", r.replica, r.n);
            for v in &r.values {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `results.csv`, `summary.json` and `replicas.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.results_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json()? + "\n")?;
        std::fs::write(dir.join("replicas.csv"), self.replicas_csv())?;
        Ok(())
    }
}

fn beta_of(beta_hat: f64, n: usize) -> Result<f64> {
    if beta_hat == 0.0 {
        Ok(0.0)
    } else {
        beta_n(beta_hat, n)
    }
}

fn fmt_trend(t: &TrendReport) -> String {
    let vals: Vec<String> = t
        .n_grid
        .iter()
        .zip(&t.values)
        .map(|(n, v)| format!("N={n}: {v:.4e}"))
        .collect();
    vals.join(", ")
}

/// Runs `plan` on `workers` threads (0 = all cores). Outputs depend only
/// on the plan.
pub fn run_experiment(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    plan.validate()?;
    match plan.kind {
        ExperimentKind::Moments => moments(plan, workers),
        ExperimentKind::Overlap => overlap(plan, workers),
        ExperimentKind::Onepoint => onepoint(plan, workers),
        ExperimentKind::Ewfield => ewfield(plan, workers),
        ExperimentKind::Decomp => decomp(plan, workers),
        ExperimentKind::Tails => tails(plan, workers),
    }
}

fn record(rep: &mut ExperimentReport, n: usize, vals: &[Vec<f64>]) {
    for (r, v) in vals.iter().enumerate() {
        rep.replicas.push(ReplicaRecord {
            replica: r as u64,
            n,
            values: v.clone(),
        });
    }
}

fn column(vals: &[Vec<f64>], k: usize) -> Vec<f64> {
    vals.iter().map(|v| v[k]).collect()
}

fn normal(mu: f64, sd: f64) -> Result<Normal> {
    Normal::new(mu, sd).map_err(|e| Error::Numerical(format!("normal law: {e}")))
}

/// `E[Z^2]` and order variances: MC against the exact identities.
fn moments(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(plan, &["Z", "X1", "X2"]);
    let base = Environment::new(plan.law, plan.master_seed);
    let mut all_ok = true;
    let mut details = Vec::new();
    for &n in &plan.n_grid {
        let beta = beta_of(plan.beta_hat, n)?;
        let vals = map_replicas(plan.n_replicas, workers, |r| {
            let env = base.replica(r);
            let z = compute_z(&env, beta, &WindowSpec::Full { n }, [0, 0])?;
            let x = chaos_eval(&env, beta, [0, 0], n, 2)?;
            Ok(vec![z.value, x[1], x[2]])
        })?;
        record(&mut rep, n, &vals);
        let s2 = sigma_n(plan.law, beta)?.value.powi(2);
        let exact = overlap_mgf_exact(n, s2.ln_1p(), default_radius(n))?.value;
        rep.exact(n, "ez2_exact", exact);
        for (k, r) in residual_sequence(plan.law, beta, n, 4)?.iter().enumerate().skip(1) {
            rep.exact(n, &format!("chaos_residual_k{k}"), *r);
        }
        let mut var_exact = [0.0; 3];
        for k in 1..=2usize {
            if beta > 0.0 {
                var_exact[k] = order_variance_exact(plan.law, beta, n, k)?;
            }
            rep.exact(n, &format!("var_x{k}_exact"), var_exact[k]);
        }
        if plan.n_replicas < 3 {
            continue;
        }
        let z = column(&vals, 0);
        rep.row(n, "mean_z", &mean_se(&z));
        let ez2 = second_moment_known_mean(&z, 1.0);
        rep.row(n, "ez2_mc", &ez2);
        rep.exact(n, "ez2_zscore", ez2.z_score(exact));
        details.push(format!("N={n}: E[Z^2] {:.5}({:.5}) vs {exact:.5}", ez2.estimate, ez2.std_error));
        all_ok &= ez2.within(exact, 3.0);
        for k in 1..=2usize {
            let xk = column(&vals, k);
            let v = variance_se(&xk);
            rep.row(n, &format!("mean_x{k}"), &mean_se(&xk));
            rep.row(n, &format!("var_x{k}_mc"), &v);
            rep.exact(n, &format!("var_x{k}_zscore"), v.z_score(var_exact[k]));
            details.push(format!(
                "N={n}: Var X{k} {:.5}({:.5}) vs {:.5}",
                v.estimate, v.std_error, var_exact[k]
            ));
            all_ok &= v.within(var_exact[k], 3.0);
        }
    }
    rep.verdict("moments_within_3se", all_ok, details.join("; "));
    Ok(rep)
}

/// Overlap law: `pi L_N / log N` against `Exp(1)`. The gated distance
/// uses `L_N + U`, `U` uniform on `[0, 1)`, so that the lattice atoms of
/// `L_N` do not dominate the comparison with a continuous law.
fn overlap(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(plan, &["L", "scaled", "scaled_jittered"]);
    let exp1 = Exp::new(1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut ks_all = Vec::new();
    for &n in &plan.n_grid {
        let scale = std::f64::consts::PI / (n as f64).ln();
        let vals = map_replicas(plan.n_replicas, workers, |r| {
            let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(replica_seed(plan.master_seed, r), n as u64));
            let l = sample_overlap(n, &mut rng).value as f64;
            let u: f64 = rng.random();
            Ok(vec![l, l * scale, (l + u) * scale])
        })?;
        record(&mut rep, n, &vals);
        if plan.n_replicas < KS_MIN_SAMPLES {
            continue;
        }
        rep.row(n, "mean_scaled", &mean_se(&column(&vals, 1)));
        let se = ks_scale(plan.n_replicas);
        let raw = ks_distance(&column(&vals, 1), |x| exp1.cdf(x))?;
        let jit = ks_distance(&column(&vals, 2), |x| exp1.cdf(x))?;
        rep.row(n, "ks_exp_raw", &EstimatorResult::with_se(raw, se, plan.n_replicas));
        let r = EstimatorResult::with_se(jit, se, plan.n_replicas);
        rep.row(n, "ks_exp", &r);
        ks_all.push(r);
    }
    if !ks_all.is_empty() && ks_all.len() == plan.n_grid.len() {
        let t = TrendReport::new("ks_exp", &plan.n_grid, &ks_all);
        let last = *t.values.last().unwrap();
        rep.verdict(
            "overlap_ks",
            t.decreasing && last <= 0.15,
            format!("{}; decreasing and final <= 0.15", fmt_trend(&t)),
        );
        rep.trends.push(t);
    }
    Ok(rep)
}

fn log_z_replicas(plan: &ReplicaPlan, workers: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    let base = Environment::new(plan.law, plan.master_seed);
    let beta = beta_of(plan.beta_hat, n)?;
    map_replicas(plan.n_replicas, workers, |r| {
        let z = compute_z(&base.replica(r), beta, &WindowSpec::Full { n }, [0, 0])?;
        Ok(vec![z.log_value, z.lost_mass])
    })
}

/// One-point law of `log Z_N` against `N(-sigma^2/2, sigma^2)`.
fn onepoint(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(plan, &["logZ", "lost_mass"]);
    let s2 = sigma_hat_sq(plan.beta_hat)?;
    let limit = normal(-0.5 * s2, s2.sqrt())?;
    let mut ks_all = Vec::new();
    let mut var_ratio = None;
    for &n in &plan.n_grid {
        let vals = log_z_replicas(plan, workers, n)?;
        record(&mut rep, n, &vals);
        rep.exact(n, "sigma_sq_limit", s2);
        if plan.n_replicas < KS_MIN_SAMPLES {
            continue;
        }
        let l = column(&vals, 0);
        rep.row(n, "mean_logz", &mean_se(&l));
        let v = variance_se(&l);
        rep.row(n, "var_logz", &v);
        let q = ratio(&v, &EstimatorResult::exact(s2));
        rep.row(n, "var_ratio", &q);
        var_ratio = Some(q.estimate);
        let ks = EstimatorResult::with_se(
            ks_distance(&l, |x| limit.cdf(x))?,
            ks_scale(plan.n_replicas),
            plan.n_replicas,
        );
        rep.row(n, "ks_normal", &ks);
        ks_all.push(ks);
    }
    if !ks_all.is_empty() && ks_all.len() == plan.n_grid.len() {
        let t = TrendReport::new("ks_normal", &plan.n_grid, &ks_all);
        rep.verdict("onepoint_ks_decreasing", t.decreasing, fmt_trend(&t));
        rep.trends.push(t);
        let q = var_ratio.unwrap_or(f64::NAN);
        rep.verdict(
            "onepoint_variance",
            (q - 1.0).abs() <= 0.25,
            format!("variance ratio {q:.4} at the largest N, tolerance 25%"),
        );
    }
    Ok(rep)
}

/// Minimum replica count for a tail fit.
pub const TAIL_MIN_REPLICAS: usize = 10_000;
/// Tail grid: `t = 0, 0.1, ..., 6`.
pub fn tail_grid() -> Vec<f64> {
    (0..=60).map(|i| 0.1 * i as f64).collect()
}

/// Left tail of `log Z_N` and the negative moment `E[Z^-2]`.
fn tails(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(plan, &["logZ", "lost_mass"]);
    let mut inv = Vec::new();
    let mut env_ok = true;
    let mut details = Vec::new();
    for &n in &plan.n_grid {
        let vals = log_z_replicas(plan, workers, n)?;
        record(&mut rep, n, &vals);
        if plan.n_replicas < 2 {
            continue;
        }
        let l = column(&vals, 0);
        let m = mean_se(&l.iter().map(|x| (-2.0 * x).exp()).collect::<Vec<_>>());
        rep.row(n, "inv_z2_moment", &m);
        inv.push(m.estimate);
        if plan.n_replicas >= TAIL_MIN_REPLICAS {
            let fit = fit_left_tail(&l, &tail_grid(), 20)?;
            rep.exact(n, "tail_c1", fit.c1);
            rep.exact(n, "tail_c2", fit.c2);
            rep.exact(n, "tail_exponent", fit.exponent);
            rep.exact(n, "tail_worst_ratio", fit.worst_ratio);
            env_ok &= fit.worst_ratio <= 1.5;
            details.push(format!(
                "N={n}: exponent {:.3}, worst exceedance/envelope {:.3}",
                fit.exponent, fit.worst_ratio
            ));
            rep.tail_fits.push((n, fit));
        }
    }
    if !rep.tail_fits.is_empty() {
        rep.verdict("tail_envelope", env_ok, details.join("; "));
    }
    if inv.len() == plan.n_grid.len() && !inv.is_empty() {
        let (lo, hi) = inv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        rep.verdict(
            "inverse_moment_bounded",
            hi / lo <= 2.0,
            format!("E[Z^-2] max/min = {:.4}", hi / lo),
        );
    }
    Ok(rep)
}

/// `sum_k (b^2/M)^{k-1} #{(M, i_2..i_k) with pairwise gaps >= 2}` by
/// direct enumeration of ordered tuples.
pub fn matched_tuple_weight(beta_hat: f64, m: usize) -> f64 {
    let b2m = beta_hat * beta_hat / m as f64;
    let mut total = 0.0;
    let mut stack = vec![(vec![m], 1.0f64)];
    while let Some((t, w)) = stack.pop() {
        total += w;
        for i in 1..=m {
            if t.iter().all(|&j| i.abs_diff(j) >= 2) {
                let mut u = t.clone();
                u.push(i);
                stack.push((u, w * b2m));
            }
        }
    }
    total
}

/// Continuum value of the truncated field variance: the `i_1 = M` block
/// integrates the heat flow over `u in (N^{-1/M}, 1]`, which gives
/// `2 (sigma_phi^2(1/2) - sigma_phi^2(u0/2))`.
pub fn matched_truncation_prediction(beta_hat: f64, phi: &TestFunction, n: usize, m: usize) -> Result<f64> {
    let u0 = (n as f64).powf(-1.0 / m as f64);
    let outer = 2.0 * (sigma_phi_sq(phi, 0.5)? - sigma_phi_sq(phi, 0.5 * u0)?);
    Ok(outer * matched_tuple_weight(beta_hat, m))
}

/// Variance of the averaged log field against the EW prediction.
fn ewfield(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(plan, &["raw_pairing"]);
    let pred = predict(plan.beta_hat, &plan.phi, Target::Polymer)?;
    let base = Environment::new(plan.law, plan.master_seed);
    let std_normal = normal(0.0, 1.0)?;
    let mut ratios = Vec::new();
    let mut ks_ok = true;
    let mut ks_detail = Vec::new();
    for &n in &plan.n_grid {
        let beta = beta_n(plan.beta_hat, n)?;
        let vals = map_replicas(plan.n_replicas, workers, |r| {
            Ok(vec![log_field_pairing(&base.replica(r), beta, &plan.phi, n, 1.0)?])
        })?;
        record(&mut rep, n, &vals);
        rep.exact(n, "prediction", pred.predicted_variance);
        if !plan.phi.is_zero() {
            let chaos = ew_variance_prediction_via_chaos(n, plan.beta_hat, THETA_M, &plan.phi)?;
            let matched = matched_truncation_prediction(plan.beta_hat, &plan.phi, n, THETA_M)?;
            rep.exact(n, "chaos_prediction", chaos);
            rep.exact(n, "matched_prediction", matched);
            rep.exact(n, "chaos_over_matched", chaos / matched);
        }
        if plan.n_replicas < KS_MIN_SAMPLES {
            continue;
        }
        let p = averaged_log_field(&column(&vals, 0), beta)?;
        let v = variance_se(&p);
        rep.row(n, "var_pairing", &v);
        let q = ratio(&v, &EstimatorResult::exact(pred.predicted_variance));
        rep.row(n, "var_ratio", &q);
        ratios.push(q);
        if v.estimate > 0.0 {
            let sd = v.estimate.sqrt();
            let m = mean(&p);
            let z: Vec<f64> = p.iter().map(|x| (x - m) / sd).collect();
            let ks = ks_distance(&z, |x| std_normal.cdf(x))?;
            rep.row(n, "ks_normal", &EstimatorResult::with_se(ks, ks_scale(p.len()), p.len()));
            ks_ok &= ks <= 0.1;
            ks_detail.push(format!("N={n}: {ks:.4}"));
        }
    }
    if !ratios.is_empty() && ratios.len() == plan.n_grid.len() {
        let t = TrendReport::toward("var_ratio_gap", &plan.n_grid, &ratios, 1.0);
        let last = ratios.last().unwrap().estimate;
        rep.verdict(
            "ew_variance",
            t.decreasing && (0.7..=1.3).contains(&last),
            format!(
                "ratios {}; |ratio - 1| decreasing, final in [0.7, 1.3]",
                ratios.iter().map(|r| format!("{:.4}", r.estimate)).collect::<Vec<_>>().join(", ")
            ),
        );
        rep.trends.push(t);
        rep.verdict("ew_normality", ks_ok, format!("KS distances {}; each <= 0.1", ks_detail.join(", ")));
    }
    Ok(rep)
}

fn phi_sweeps(
    env: &Environment,
    beta: f64,
    spec: &WindowSpec,
    phi: &TestFunction,
    n: usize,
) -> Result<Vec<SweepField>> {
    let radius = phi.support_radius() * (n as f64).sqrt();
    [Parity::Even, Parity::Odd]
        .into_iter()
        .map(|p| sweep_log_z(env, beta, spec, p, sweep_half_width(radius, p)))
        .collect()
}

/// Averages of the decomposition terms for one environment:
/// `[O_N, log Z^A, Zhat^A / Z^A, Z^{B>=} - 1, ratio - (Z^{B>=} - 1)]`,
/// each as `(1/N) sum_x phi(x / sqrt N) (.)`.
pub fn decomposition_averages(env: &Environment, beta: f64, phi: &TestFunction, n: usize, gamma: f64) -> Result<Vec<f64>> {
    let full = phi_sweeps(env, beta, &WindowSpec::Full { n }, phi, n)?;
    let bgeq = phi_sweeps(env, beta, &WindowSpec::BGeq { n, gamma }, phi, n)?;
    let sq = (n as f64).sqrt();
    let mut acc = [Neumaier::new(), Neumaier::new(), Neumaier::new(), Neumaier::new()];
    for (f, b) in full.iter().zip(&bgeq) {
        for ((x, l), &lb) in f.iter().zip(&b.log_z) {
            let w = phi.eval([x[0] as f64 / sq, x[1] as f64 / sq]);
            if w == 0.0 {
                continue;
            }
            let la = compute_z(env, beta, &WindowSpec::A { n, x, gamma }, x)?.log_value;
            let (r, o) = ratio_and_o_from_logs(l, la);
            acc[0].add(w * o);
            acc[1].add(w * la);
            acc[2].add(w * r);
            acc[3].add(w * lb.exp_m1());
        }
    }
    let nf = n as f64;
    let v: Vec<f64> = acc.iter().map(|a| a.value() / nf).collect();
    Ok(vec![v[0], v[1], v[2], v[3], v[2] - v[3]])
}

/// Decomposition diagnostics across the `N` grid.
fn decomp(plan: &ReplicaPlan, workers: usize) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(plan, &["avg_O", "avg_logZA", "avg_ratio", "avg_ZB_minus_1", "gap"]);
    let base = Environment::new(plan.law, plan.master_seed);
    let mut stats: [Vec<EstimatorResult>; 3] = Default::default();
    let mut zb_ok = true;
    let mut zb_detail = Vec::new();
    for &n in &plan.n_grid {
        let beta = beta_of(plan.beta_hat, n)?;
        let vals = map_replicas(plan.n_replicas, workers, |r| {
            decomposition_averages(&base.replica(r), beta, &plan.phi, n, plan.gamma)
        })?;
        record(&mut rep, n, &vals);
        if plan.n_replicas < 3 {
            continue;
        }
        let ln = (n as f64).ln();
        let scale = |r: EstimatorResult, c: f64| EstimatorResult::with_se(r.estimate * c, r.std_error * c, r.n);
        let o = scale(variance_se(&column(&vals, 0)), ln);
        let la = scale(variance_se(&column(&vals, 1)), ln);
        let gap = scale(
            mean_se(&column(&vals, 4).iter().map(|g| g.abs()).collect::<Vec<_>>()),
            ln.sqrt(),
        );
        let zb = mean_se(&column(&vals, 3));
        rep.row(n, "o_field_var_logn", &o);
        rep.row(n, "logza_field_var_logn", &la);
        rep.row(n, "l1_gap_sqrt_logn", &gap);
        rep.row(n, "zb_minus_1_mean", &zb);
        zb_ok &= zb.within(0.0, 3.0);
        zb_detail.push(format!("N={n}: {:.3e}({:.3e})", zb.estimate, zb.std_error));
        stats[0].push(o);
        stats[1].push(la);
        stats[2].push(gap);
    }
    if !stats[0].is_empty() && stats[0].len() == plan.n_grid.len() {
        for (name, s) in ["o_field_var_logn", "logza_field_var_logn", "l1_gap_sqrt_logn"].iter().zip(&stats) {
            let t = TrendReport::new(name, &plan.n_grid, s);
            rep.verdict(&format!("{name}_decreasing"), t.decreasing, fmt_trend(&t));
            rep.trends.push(t);
        }
        rep.verdict("zb_centered", zb_ok, zb_detail.join(", "));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderLaw;

    #[test]
    fn empty_plan_gives_empty_table() {
        let plan = ReplicaPlan::new(ExperimentKind::Onepoint, vec![16], 0, 3).with_beta_hat(0.4);
        let rep = run_experiment(&plan, 1).unwrap();
        assert!(rep.replicas.is_empty());
        assert!(rep.verdicts.is_empty());
    }

    #[test]
    fn output_is_independent_of_workers() {
        for kind in [ExperimentKind::Moments, ExperimentKind::Overlap, ExperimentKind::Onepoint] {
            let plan = ReplicaPlan::new(kind, vec![16, 32], 120, 7).with_beta_hat(0.4);
            let a = run_experiment(&plan, 1).unwrap();
            let b = run_experiment(&plan, 3).unwrap();
            assert_eq!(a.results_csv(), b.results_csv());
            assert_eq!(a.replicas_csv(), b.replicas_csv());
            assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
        }
    }

    #[test]
    fn mean_of_z_is_one() {
        let plan = ReplicaPlan::new(ExperimentKind::Moments, vec![64], 2000, 21)
            .with_beta_hat(0.5)
            .with_law(DisorderLaw::Rademacher);
        let rep = run_experiment(&plan, 0).unwrap();
        let m = rep.get(64, "mean_z").unwrap();
        assert!((m.estimate - 1.0).abs() <= 3.0 * m.se, "{m:?}");
        for k in 1..=2 {
            let x = rep.get(64, &format!("mean_x{k}")).unwrap();
            assert!(x.estimate.abs() <= 4.0 * x.se);
        }
    }

    #[test]
    fn matched_weight_enumeration() {
        // M = 4: tuples (4), (4,1), (4,2), (4,1,... none with gap) -> 1 + 2 b^2/4
        let b = 0.5;
        let w = matched_tuple_weight(b, 4);
        assert!((w - (1.0 + 2.0 * b * b / 4.0)).abs() < 1e-15);
        // M = 6: singles {1..4} -> 4, pairs from {1..4} with gap >= 2: (1,3),(1,4),(2,4) ordered x2
        let w6 = matched_tuple_weight(b, 6);
        let x = b * b / 6.0;
        assert!((w6 - (1.0 + 4.0 * x + 6.0 * x * x)).abs() < 1e-15);
    }

    #[test]
    fn zero_disorder_decomposition() {
        let env = Environment::new(DisorderLaw::Gaussian, 1);
        let v = decomposition_averages(&env, 0.0, &TestFunction::bump(0.5), 64, 0.2).unwrap();
        for x in v {
            assert!(x.abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn zero_test_function_field() {
        let plan = ReplicaPlan::new(ExperimentKind::Ewfield, vec![16], 100, 2)
            .with_beta_hat(0.4)
            .with_phi(TestFunction::bump(0.5).scaled(0.0));
        let rep = run_experiment(&plan, 1).unwrap();
        assert_eq!(rep.get(16, "var_pairing").unwrap().estimate, 0.0);
    }
}
