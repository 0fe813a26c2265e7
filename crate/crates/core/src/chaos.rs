//! Polynomial chaos of the point-to-plane partition function.
//!
//! `Z = sum_k X_k` with `X_k` the sum over `k`-point time-ordered sets of
//! `sigma_N^k prod xi` weighted by walk kernels. The ladder
//! `V_{k,n+1} = P V_{k,n} + sigma xi_{n+1} P V_{k-1,n}` computes all
//! orders up to `K` together; `X_k = sum_y V_{k,N}(y)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::disorder::{log_mgf, sigma_n, DisorderLaw, Environment, Weigher};
use crate::error::{domain, Error, Result};
use crate::limit_theory::TestFunction;
use crate::partition::grid::{schedule_for, Grid, NoDisorder, LOST_MASS_TOL};
use crate::partition::{sweep_half_width, Parity};
use crate::sum::Neumaier;
use crate::walk_kernels::{expected_overlap, return_probabilities};

/// Largest order the ladder evaluates.
pub const MAX_ORDER: usize = 4;

/// Source of `sigma_N xi(n, y)` along rows of rotated coordinates.
pub trait XiSource {
    /// Writes `sigma xi(n, u, v0 + 2j)`; returns `false` if the row is zero.
    fn fill(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) -> bool;
}

/// `sigma_N xi = exp(beta omega - lambda) - 1` from an environment.
pub struct EnvXi {
    weigher: Weigher,
}

impl EnvXi {
    pub fn new(env: &Environment, beta: f64) -> Result<Self> {
        Ok(EnvXi {
            weigher: env.weigher(beta, log_mgf(env.law, beta)?),
        })
    }
}

impl XiSource for EnvXi {
    fn fill(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) -> bool {
        self.weigher.fill_row(n, u, v0, out);
        for x in out.iter_mut() {
            *x -= 1.0;
        }
        true
    }
}

/// Explicit values of `sigma xi` at finitely many space-time points,
/// zero elsewhere.
#[derive(Clone, Debug, Default)]
pub struct TableXi {
    values: HashMap<(i64, i64, i64), f64>,
}

impl TableXi {
    pub fn new() -> Self {
        TableXi::default()
    }

    pub fn set(&mut self, n: i64, x: [i64; 2], sigma_xi: f64) {
        self.values.insert((n, x[0], x[1]), sigma_xi);
    }

    pub fn get(&self, n: i64, x: [i64; 2]) -> f64 {
        self.values.get(&(n, x[0], x[1])).copied().unwrap_or(0.0)
    }
}

impl XiSource for TableXi {
    fn fill(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) -> bool {
        let mut any = false;
        for (j, o) in out.iter_mut().enumerate() {
            let v = v0 + 2 * j as i64;
            *o = self.get(n, [(u + v) / 2, (u - v) / 2]);
            any |= *o != 0.0;
        }
        any
    }
}

/// Ladder of slices `V_{k,n}`, `k = 0..=K`, started at `(0, x)`.
#[derive(Clone, Debug)]
pub struct ChaosLadder {
    pub k_max: usize,
    pub start: [i64; 2],
    n: i64,
    sched: Vec<usize>,
    layers: Vec<Grid>,
    xi: Vec<f64>,
}

impl ChaosLadder {
    pub fn new(x: [i64; 2], horizon: usize, k_max: usize) -> Result<Self> {
        if k_max > MAX_ORDER {
            return domain(format!("chaos order {k_max} above the supported {MAX_ORDER}"));
        }
        let s = schedule_for(horizon, LOST_MASS_TOL);
        let cap = s.max();
        let mut layers = vec![Grid::new(cap); k_max + 1];
        let (u, v) = (x[0] + x[1], x[0] - x[1]);
        layers[0].reset_point(u, v);
        for g in layers.iter_mut().skip(1) {
            g.reset_point(u, v);
            g.row_mut(0)[0] = 0.0;
        }
        Ok(ChaosLadder {
            k_max,
            start: x,
            n: 0,
            sched: s.h.clone(),
            layers,
            xi: vec![0.0; cap + 1],
        })
    }

    pub fn time(&self) -> i64 {
        self.n
    }

    pub fn advance(&mut self, src: &dyn XiSource) -> Result<()> {
        let k = self.n as usize;
        if k + 1 >= self.sched.len() {
            return domain("chaos ladder is past its horizon");
        }
        let h = self.sched[k + 1];
        self.n += 1;
        for g in self.layers.iter_mut() {
            g.step(h, self.n, &NoDisorder);
        }
        let (cu, cv) = self.layers[0].center();
        let v0 = cv - h as i64;
        let scales: Vec<f64> = self.layers.iter().map(|g| g.log_scale()).collect();
        for i in 0..=h {
            let u = cu - h as i64 + 2 * i as i64;
            let xi = &mut self.xi[..h + 1];
            if !src.fill(self.n, u, v0, xi) {
                continue;
            }
            for k in (1..=self.k_max).rev() {
                let f = (scales[k - 1] - scales[k]).exp();
                let (lo, hi) = self.layers.split_at_mut(k);
                let prev = lo[k - 1].row(i);
                let cur = hi[0].row_mut(i);
                for ((c, p), s) in cur.iter_mut().zip(prev).zip(xi.iter()) {
                    *c += f * s * p;
                }
            }
        }
        Ok(())
    }

    /// `X_k = sum_y V_{k,n}(y)` at the current time.
    pub fn orders(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|g| g.stored_total() * g.log_scale().exp())
            .collect()
    }
}

/// Runs a ladder for `n` steps against `src`.
pub fn ladder_eval(src: &dyn XiSource, x: [i64; 2], n: usize, k_max: usize) -> Result<Vec<f64>> {
    let mut l = ChaosLadder::new(x, n, k_max)?;
    for _ in 0..n {
        l.advance(src)?;
    }
    Ok(l.orders())
}

/// `X_0, ..., X_K` of `Z_N(x)` in the environment `env`.
pub fn chaos_eval(env: &Environment, beta: f64, x: [i64; 2], n: usize, k_max: usize) -> Result<Vec<f64>> {
    ladder_eval(&EnvXi::new(env, beta)?, x, n, k_max)
}

/// `S_k = sum_{0 < n_1 < ... < n_k <= N} prod q_{2(n_i - n_{i-1})}(0)` for
/// `k = 0..=k_max` (`S_0 = 1`).
pub fn order_sums(n: usize, k_max: usize) -> Vec<f64> {
    let p = return_probabilities(n);
    let mut out = vec![1.0];
    // d[m] = sum over chains ending exactly at m
    let mut d: Vec<f64> = vec![0.0; n + 1];
    d[0] = 1.0;
    for _ in 1..=k_max {
        let mut nd = vec![0.0; n + 1];
        for m in 1..=n {
            let mut acc = Neumaier::new();
            for l in 0..m {
                if d[l] != 0.0 {
                    acc.add(d[l] * p[m - l]);
                }
            }
            nd[m] = acc.value();
        }
        out.push(nd[1..].iter().copied().collect::<Neumaier>().value());
        d = nd;
    }
    out
}

/// `E[X_k^2] = sigma_N^{2k} S_k`.
pub fn order_variance_exact(law: DisorderLaw, beta: f64, n: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return domain("order must be at least 1");
    }
    let s2 = sigma_n(law, beta)?.value.powi(2);
    Ok(s2.powi(k as i32) * order_sums(n, k)[k])
}

/// `E[Z_N^2] = sum_k sigma^{2k} S_k` as one renewal pass.
pub fn second_moment_renewal(law: DisorderLaw, beta: f64, n: usize) -> Result<f64> {
    let s2 = sigma_n(law, beta)?.value.powi(2);
    let p = return_probabilities(n);
    let mut d = vec![0.0f64; n + 1];
    d[0] = 1.0;
    for m in 1..=n {
        let mut acc = Neumaier::new();
        for l in 0..m {
            acc.add(d[l] * p[m - l]);
        }
        d[m] = s2 * acc.value();
    }
    Ok(d.iter().copied().collect::<Neumaier>().value())
}

/// `E[(Z - sum_{k<=K} X_k)^2] = E[Z^2] - 1 - sum_{k=1}^K E[X_k^2]`.
pub fn residual_l2(law: DisorderLaw, beta: f64, n: usize, k: usize) -> Result<f64> {
    Ok(residual_sequence(law, beta, n, k)?[k])
}

/// Residuals for `K = 0..=k_max`.
pub fn residual_sequence(law: DisorderLaw, beta: f64, n: usize, k_max: usize) -> Result<Vec<f64>> {
    let s2 = sigma_n(law, beta)?.value.powi(2);
    let ez2 = second_moment_renewal(law, beta, n)?;
    let sums = order_sums(n, k_max);
    let mut acc = Neumaier::new();
    acc.add(ez2);
    let mut out = Vec::with_capacity(k_max + 1);
    for (j, s) in sums.iter().enumerate() {
        acc.add(-s2.powi(j as i32) * s);
        let r = acc.value();
        if r < -1e-9 {
            return Err(Error::Numerical(format!(
                "negative chaos residual {r:.3e} at N = {n}, K = {j}"
            )));
        }
        out.push(r.max(0.0));
    }
    Ok(out)
}

/// Tuple `(i_1, ..., i_k)` in `{1..M}^k` with pairwise gaps at least 2.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaBlockSpec {
    pub m: usize,
    pub indices: Vec<usize>,
}

impl ThetaBlockSpec {
    pub fn new(m: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return domain("theta block needs at least one index");
        }
        if let Some(&i) = indices.iter().find(|&&i| i == 0 || i > m) {
            return domain(format!("index {i} outside 1..={m}"));
        }
        for a in 0..indices.len() {
            for b in a + 1..indices.len() {
                if indices[a].abs_diff(indices[b]) < 2 {
                    return domain(format!(
                        "indices {} and {} are closer than 2",
                        indices[a], indices[b]
                    ));
                }
            }
        }
        Ok(ThetaBlockSpec { m, indices })
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    /// `i_1 > max(i_2, ..., i_k)`.
    pub fn dominated(&self) -> bool {
        self.indices[1..].iter().all(|&i| i < self.indices[0])
    }
}

fn floor_pow(n: usize, e: f64) -> i64 {
    let p = (n as f64).powf(e);
    let r = p.round();
    if (p - r).abs() <= 1e-9 * r.max(1.0) {
        r as i64
    } else {
        p.floor() as i64
    }
}

/// Integer `Delta` in `I_i = (N^{(i-1)/M}, N^{i/M}]`, as `lo < Delta <= hi`.
pub fn interval_bounds(n: usize, m: usize, i: usize) -> (i64, i64) {
    let lo = floor_pow(n, (i - 1) as f64 / m as f64);
    let hi = floor_pow(n, i as f64 / m as f64);
    (lo, hi)
}

/// `||P^t phi_N||^2` for `t = 0..=n`, `phi_N(x) = phi(x / sqrt N)`.
pub fn heat_flow_norms(phi: &TestFunction, n: usize) -> Result<Vec<f64>> {
    phi.validate()?;
    let sq = (n as f64).sqrt();
    let radius = phi.support_radius() * sq;
    let sched = schedule_for(n, LOST_MASS_TOL).h.clone();
    let mut norms = vec![0.0f64; n + 1];
    for parity in [Parity::Even, Parity::Odd] {
        let h0 = sweep_half_width(radius, parity);
        let mut g = Grid::new(h0 + sched.iter().copied().max().unwrap_or(0));
        g.reset_box(0, 0, h0, 0.0);
        for i in 0..=h0 {
            let (u, v0) = g.coords(i, 0);
            for (j, val) in g.row_mut(i).iter_mut().enumerate() {
                let v = v0 + 2 * j as i64;
                let x = [((u + v) / 2) as f64 / sq, ((u - v) / 2) as f64 / sq];
                *val = phi.eval(x);
            }
        }
        let norm = |g: &Grid| {
            let mut acc = Neumaier::new();
            for i in 0..=g.half_width() {
                acc.add(g.row(i).iter().map(|x| x * x).sum());
            }
            acc.value() * (2.0 * g.log_scale()).exp()
        };
        norms[0] += norm(&g);
        for t in 1..=n {
            g.step(h0 + sched[t], t as i64, &NoDisorder);
            norms[t] += norm(&g);
        }
    }
    Ok(norms)
}

/// Per-interval factors of the block variances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaTables {
    pub n: usize,
    pub m: usize,
    /// `(1/N^2) sum_{t in I_i} ||P^t phi_N||^2`, index `i - 1`.
    pub outer: Vec<f64>,
    /// `(M / R_N) sum_{Delta in I_i} q_{2 Delta}(0)`, index `i - 1`.
    pub inner: Vec<f64>,
}

pub fn theta_tables(n: usize, m: usize, phi: &TestFunction) -> Result<ThetaTables> {
    if m == 0 || n < 2 {
        return domain("theta blocks need M >= 1 and N >= 2");
    }
    let norms = heat_flow_norms(phi, n)?;
    let q = return_probabilities(n);
    let rn = expected_overlap(n);
    let nf = n as f64;
    let mut outer = Vec::with_capacity(m);
    let mut inner = Vec::with_capacity(m);
    for i in 1..=m {
        let (lo, hi) = interval_bounds(n, m, i);
        let range = (lo + 1) as usize..=hi as usize;
        outer.push(norms[range.clone()].iter().copied().collect::<Neumaier>().value() / (nf * nf));
        inner.push(q[range].iter().copied().collect::<Neumaier>().value() * m as f64 / rn);
    }
    Ok(ThetaTables { n, m, outer, inner })
}

impl ThetaTables {
    /// `Var[Theta_{i_1..i_k}] = outer(i_1) prod_{j >= 2} inner(i_j)`.
    pub fn variance(&self, spec: &ThetaBlockSpec) -> Result<f64> {
        if spec.m != self.m {
            return domain(format!("spec has M = {}, tables M = {}", spec.m, self.m));
        }
        let mut v = self.outer[spec.indices[0] - 1];
        for &i in &spec.indices[1..] {
            v *= self.inner[i - 1];
        }
        Ok(v)
    }

    /// `sum_k (beta_hat^2 / M)^{k-1} sum_{i_1 = M} Var[Theta]`.
    pub fn ew_prediction(&self, beta_hat: f64) -> f64 {
        let m = self.m;
        // e[j]: sum over j-subsets of {1..M-2} with gaps >= 2 of prod inner
        let avail = m.saturating_sub(2);
        let mut e_prev2 = vec![0.0f64; m + 1];
        let mut e_prev = vec![0.0f64; m + 1];
        e_prev2[0] = 1.0;
        e_prev[0] = 1.0;
        for i in 1..=avail {
            let mut e = e_prev.clone();
            for j in 1..=m {
                e[j] += self.inner[i - 1] * e_prev2[j - 1];
            }
            e_prev2 = std::mem::replace(&mut e_prev, e);
        }
        let b2m = beta_hat * beta_hat / m as f64;
        let mut total = Neumaier::new();
        let mut fact = 1.0;
        let mut pw = 1.0;
        for j in 0..m {
            if j > 0 {
                fact *= j as f64;
                pw *= b2m;
            }
            total.add(pw * fact * e_prev[j]);
        }
        self.outer[m - 1] * total.value()
    }
}

pub fn theta_block_variance(n: usize, spec: &ThetaBlockSpec, phi: &TestFunction) -> Result<f64> {
    theta_tables(n, spec.m, phi)?.variance(spec)
}

pub fn ew_variance_prediction_via_chaos(n: usize, beta_hat: f64, m: usize, phi: &TestFunction) -> Result<f64> {
    if m < 3 {
        return domain("the chaos prediction needs M >= 3");
    }
    Ok(theta_tables(n, m, phi)?.ew_prediction(beta_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{compute_z, WindowSpec};
    use crate::walk_kernels::{beta_n, overlap_mgf_exact};

    const STEPS: [[i64; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];

    /// Orders of `4^-N sum_paths prod_n (1 + s(n, S_n))` by enumeration.
    fn brute_orders(src: &TableXi, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n + 1];
        let paths = 4usize.pow(n as u32);
        for code in 0..paths {
            let mut y = [0i64, 0];
            let mut e = vec![0.0; n + 1];
            e[0] = 1.0;
            let mut c = code;
            for t in 1..=n {
                let d = STEPS[c % 4];
                c /= 4;
                y = [y[0] + d[0], y[1] + d[1]];
                let s = src.get(t as i64, y);
                for k in (1..=t).rev() {
                    e[k] += s * e[k - 1];
                }
            }
            for k in 0..=n {
                out[k] += e[k] / paths as f64;
            }
        }
        out
    }

    fn random_table(seed: u64, n: usize, r: i64, law: DisorderLaw, beta: f64) -> TableXi {
        let env = Environment::new(law, seed);
        let lam = log_mgf(law, beta).unwrap();
        let mut t = TableXi::new();
        for s in 1..=n as i64 {
            for a in -r..=r {
                for b in -r..=r {
                    t.set(s, [a, b], (beta * env.omega(s, [a, b]) - lam).exp_m1());
                }
            }
        }
        t
    }

    #[test]
    fn ladder_matches_enumeration_and_z() {
        for seed in 0..5 {
            for n in 1..=4usize {
                let beta = 0.6;
                let t = random_table(seed, n, n as i64, DisorderLaw::Gaussian, beta);
                let got = ladder_eval(&t, [0, 0], n, 4).unwrap();
                let want = brute_orders(&t, n);
                for k in 0..=n {
                    assert!((got[k] - want[k]).abs() < 1e-12, "n={n} k={k}");
                }
                let env = Environment::new(DisorderLaw::Gaussian, seed);
                let z = compute_z(&env, beta, &WindowSpec::Full { n }, [0, 0]).unwrap();
                let x = chaos_eval(&env, beta, [0, 0], n, 4).unwrap();
                assert!((x.iter().sum::<f64>() - z.value).abs() < 1e-12);
                // restricted to a 3x3 box
                let small = random_table(seed, n, 1, DisorderLaw::Rademacher, beta);
                let got = ladder_eval(&small, [0, 0], n, 4).unwrap();
                let want = brute_orders(&small, n);
                for k in 0..=n {
                    assert!((got[k] - want[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_disorder_ladder() {
        let t = TableXi::new();
        let x = ladder_eval(&t, [3, 1], 50, 3).unwrap();
        assert!((x[0] - 1.0).abs() < 2e-9);
        assert!(x[1..].iter().all(|&v| v == 0.0));
        assert!(ChaosLadder::new([0, 0], 10, MAX_ORDER + 1).is_err());
    }

    #[test]
    fn order_sums_against_nested_loops() {
        let q = return_probabilities(20);
        for n in [1usize, 2, 5, 12, 20] {
            let s = order_sums(n, 3);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut s3 = 0.0;
            for a in 1..=n {
                s1 += q[a];
                for b in a + 1..=n {
                    s2 += q[a] * q[b - a];
                    for c in b + 1..=n {
                        s3 += q[a] * q[b - a] * q[c - b];
                    }
                }
            }
            assert!((s[1] - s1).abs() < 1e-12 && (s[2] - s2).abs() < 1e-12 && (s[3] - s3).abs() < 1e-12);
        }
        let beta = 0.3;
        let s2 = sigma_n(DisorderLaw::Gaussian, beta).unwrap().value.powi(2);
        let v1 = order_variance_exact(DisorderLaw::Gaussian, beta, 100, 1).unwrap();
        assert!((v1 - s2 * expected_overlap(100)).abs() < 1e-15);
        assert!(order_variance_exact(DisorderLaw::Gaussian, beta, 100, 0).is_err());
    }

    #[test]
    fn first_order_variance_at_intermediate_scale() {
        let n = 4096;
        let b = beta_n(0.5, n).unwrap();
        let v = order_variance_exact(DisorderLaw::Gaussian, b, n, 1).unwrap();
        // sigma_N^2 R_N = (e^{beta_N^2} - 1) R_N, slightly above beta_hat^2
        assert!(v > 0.25 && v < 0.25 * (1.0 + b * b));
    }

    #[test]
    fn residuals_decrease_geometrically() {
        // renewal second moment against the two-replica lattice DP
        for law in DisorderLaw::ALL {
            let b = beta_n(0.7, 256).unwrap();
            let gamma = sigma_n(law, b).unwrap().value.powi(2).ln_1p();
            let dp = overlap_mgf_exact(256, gamma, 256).unwrap().value;
            let ren = second_moment_renewal(law, b, 256).unwrap();
            assert!((dp - ren).abs() < 1e-12 * dp, "{law:?}");
        }
        let n = 1024;
        let b = beta_n(0.5, n).unwrap();
        let r = residual_sequence(DisorderLaw::Gaussian, b, n, 6).unwrap();
        let ez2 = second_moment_renewal(DisorderLaw::Gaussian, b, n).unwrap();
        assert!((r[0] - (ez2 - 1.0)).abs() < 1e-12);
        assert_eq!(r[3], residual_l2(DisorderLaw::Gaussian, b, n, 3).unwrap());
        for k in 1..r.len() {
            assert!(r[k] < r[k - 1]);
            let ratio = r[k] / r[k - 1];
            assert!(ratio > 0.1 && ratio < 0.5, "k={k} ratio {ratio}");
        }
    }

    #[test]
    fn theta_spec_validation() {
        assert!(ThetaBlockSpec::new(5, vec![5, 3, 1]).unwrap().dominated());
        assert!(!ThetaBlockSpec::new(5, vec![3, 5, 1]).unwrap().dominated());
        assert!(ThetaBlockSpec::new(5, vec![5, 4]).is_err());
        assert!(ThetaBlockSpec::new(5, vec![6]).is_err());
        assert!(ThetaBlockSpec::new(5, vec![]).is_err());
    }

    #[test]
    fn intervals_tile_the_time_axis() {
        for (n, m) in [(4096usize, 6usize), (1024, 5), (256, 4), (1000, 3)] {
            let mut prev = 1;
            for i in 1..=m {
                let (lo, hi) = interval_bounds(n, m, i);
                assert_eq!(lo, prev);
                prev = hi;
            }
            assert_eq!(prev, n as i64);
        }
    }

    #[test]
    fn heat_flow_conserves_sum_and_contracts() {
        let phi = TestFunction::gaussian(1.0);
        let n = 64;
        let norms = heat_flow_norms(&phi, n).unwrap();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        // ||phi_N||^2 / N ~ int phi^2 = 1 / (4 pi)
        let want = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((norms[0] / n as f64 - want).abs() < 1e-3 * want);
    }

    #[test]
    fn ew_prediction_small_beta_is_first_block() {
        let phi = TestFunction::gaussian(1.0);
        let t = theta_tables(256, 4, &phi).unwrap();
        let p0 = t.ew_prediction(1e-9);
        assert!((p0 - t.outer[3]).abs() < 1e-15);
        let spec = ThetaBlockSpec::new(4, vec![4, 2]).unwrap();
        assert!((t.variance(&spec).unwrap() - t.outer[3] * t.inner[1]).abs() < 1e-18);
        // brute-force tuple sum for M = 4: {4}, {4,2}, {4,1}; (4,2,...) none
        let b = 0.5f64;
        let want = t.outer[3] * (1.0 + b * b / 4.0 * (t.inner[0] + t.inner[1]));
        assert!((t.ew_prediction(b) - want).abs() < 1e-15);
        assert!(ew_variance_prediction_via_chaos(256, 0.5, 2, &phi).is_err());
    }
}
