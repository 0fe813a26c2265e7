//! Disorder laws, their log-moment generating functions and a
//! counter-based environment `omega(n, x)`.
//!
//! Every value is a pure function of `(seed, n, x)`: two windows cut from
//! the same seed see the same numbers on their overlap, and nothing
//! depends on the order in which sites or replicas are visited.
//!
//! Sites are addressed internally by rotated coordinates `u = x1 + x2`,
//! `v = x1 - x2` (the walk moves by +-1 in each of `u`, `v`), with one
//! hash key per `(n, u)` row and a counter along `v`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fastmath::{self, mix, unit_closed0, unit_open0, GOLDEN};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const TIME_MUL: u64 = 0xD1B5_4A32_D192_ED03;
const ROW_MUL: u64 = 0xABC9_8388_FB8F_AC03;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisorderLaw {
    /// Standard normal.
    Gaussian,
    /// Symmetric +-1.
    Rademacher,
    /// Uniform on [-sqrt 3, sqrt 3].
    Uniform,
}

impl DisorderLaw {
    pub const ALL: [DisorderLaw; 3] = [
        DisorderLaw::Gaussian,
        DisorderLaw::Rademacher,
        DisorderLaw::Uniform,
    ];

    pub fn has_closed_form_mgf(self) -> bool {
        true
    }

    /// Concentration class assumed by the left-tail estimates. Recorded
    /// only; the tail bound itself is checked empirically.
    pub fn concentration_class(self) -> &'static str {
        match self {
            DisorderLaw::Gaussian => "gaussian",
            DisorderLaw::Rademacher | DisorderLaw::Uniform => "bounded",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DisorderLaw::Gaussian => "gaussian",
            DisorderLaw::Rademacher => "rademacher",
            DisorderLaw::Uniform => "uniform",
        }
    }
}

impl fmt::Display for DisorderLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DisorderLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(DisorderLaw::Gaussian),
            "rademacher" | "pm1" => Ok(DisorderLaw::Rademacher),
            "uniform" => Ok(DisorderLaw::Uniform),
            other => Err(Error::Config(format!(
                "unknown disorder law '{other}' (expected gaussian, rademacher or uniform)"
            ))),
        }
    }
}

/// `lambda(beta) = log E[exp(beta * omega)]`.
pub fn log_mgf(law: DisorderLaw, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return domain(format!("beta must be finite, got {beta}"));
    }
    let b = beta.abs();
    Ok(match law {
        DisorderLaw::Gaussian => 0.5 * beta * beta,
        // log cosh b without overflow
        DisorderLaw::Rademacher => b + (-2.0 * b).exp().ln_1p() - std::f64::consts::LN_2,
        DisorderLaw::Uniform => {
            let y = SQRT3 * b;
            if y < 1.0 {
                // sinh(y)/y - 1 = sum_k y^{2k} / (2k+1)!
                let y2 = y * y;
                let (mut term, mut e) = (1.0f64, 0.0f64);
                for k in 1..=12 {
                    let k = k as f64;
                    term *= y2 / ((2.0 * k) * (2.0 * k + 1.0));
                    e += term;
                }
                e.ln_1p()
            } else {
                y - (2.0 * y).ln() + (-(-2.0 * y).exp_m1()).ln()
            }
        }
    })
}

/// `sigma_N = sqrt(exp(lambda(2 beta) - 2 lambda(beta)) - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaN {
    pub beta: f64,
    pub value: f64,
}

impl SigmaN {
    /// `sigma_N / beta`, tending to 1 as beta -> 0.
    pub fn ratio(&self) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else {
            self.value / self.beta.abs()
        }
    }
}

/// Exponent `lambda(2 beta) - 2 lambda(beta)` of the two-replica tilt.
pub fn pair_exponent(law: DisorderLaw, beta: f64) -> Result<f64> {
    let g = log_mgf(law, 2.0 * beta)? - 2.0 * log_mgf(law, beta)?;
    Ok(g.max(0.0))
}

pub fn sigma_n(law: DisorderLaw, beta: f64) -> Result<SigmaN> {
    let g = pair_exponent(law, beta)?;
    Ok(SigmaN {
        beta,
        value: g.exp_m1().sqrt(),
    })
}

/// Normalised disorder variable `xi = (exp(beta omega - lambda) - 1) / sigma_N`.
pub fn xi(law: DisorderLaw, beta: f64, omega: f64) -> Result<f64> {
    let s = sigma_n(law, beta)?;
    if s.value <= 0.0 {
        return domain("xi undefined: sigma_N = 0");
    }
    Ok((beta * omega - log_mgf(law, beta)?).exp_m1() / s.value)
}

/// Seed of replica `r` under master seed `m`.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    mix(master ^ mix(replica.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Environment of one replica: `omega(n, x)` for all `n >= 1`, `x in Z^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Environment {
    pub law: DisorderLaw,
    pub seed: u64,
}

/// Precomputed constants for filling rows of `exp(beta omega - shift)`.
#[derive(Clone, Copy, Debug)]
pub struct Weigher {
    env: Environment,
    beta: f64,
    shift: f64,
    plus: f64,
    minus: f64,
}

impl Environment {
    pub fn new(law: DisorderLaw, seed: u64) -> Self {
        Environment { law, seed }
    }

    /// Environment of replica `r` derived from this one's seed.
    pub fn replica(&self, r: u64) -> Self {
        Environment {
            law: self.law,
            seed: replica_seed(self.seed, r),
        }
    }

    #[inline]
    fn row_key(&self, n: i64, u: i64) -> u64 {
        let h = mix(self.seed ^ (n as u64).wrapping_mul(TIME_MUL));
        mix(h ^ (u as u64).wrapping_mul(ROW_MUL))
    }

    /// Disorder at time `n`, site `x`.
    pub fn omega(&self, n: i64, x: [i64; 2]) -> f64 {
        let (u, v) = (x[0] + x[1], x[0] - x[1]);
        self.omega_uv(n, u, v)
    }

    /// Disorder at rotated coordinates `(u, v)`, `u = v mod 2`.
    pub fn omega_uv(&self, n: i64, u: i64, v: i64) -> f64 {
        let rk = self.row_key(n, u);
        let k = v.div_euclid(2);
        match self.law {
            DisorderLaw::Rademacher => {
                let w = mix(rk.wrapping_add(((k >> 6) as u64).wrapping_mul(GOLDEN)));
                if (w >> (k & 63)) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            DisorderLaw::Uniform => {
                let w = mix(rk.wrapping_add((k as u64).wrapping_mul(GOLDEN)));
                uniform_from(w)
            }
            DisorderLaw::Gaussian => {
                let p = k >> 1;
                let base = rk.wrapping_add(((2 * p) as u64).wrapping_mul(GOLDEN));
                let r = (-2.0 * fastmath::ln(unit_open0(mix(base)))).sqrt();
                let a = unit_closed0(mix(base.wrapping_add(GOLDEN)));
                r * fastmath::cos_2pi(a - 0.25 * (k & 1) as f64)
            }
        }
    }

    /// `out[j] = omega(n, u, v0 + 2 j)`.
    pub fn fill_omega_row(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) {
        let rk = self.row_key(n, u);
        let k0 = v0.div_euclid(2);
        match self.law {
            DisorderLaw::Rademacher => fill_bits(rk, k0, out, 1.0, -1.0),
            DisorderLaw::Uniform => {
                for (j, o) in out.iter_mut().enumerate() {
                    let k = k0 + j as i64;
                    *o = uniform_from(mix(rk.wrapping_add((k as u64).wrapping_mul(GOLDEN))));
                }
            }
            DisorderLaw::Gaussian => fill_gaussian(rk, k0, out, |w| w),
        }
    }

    /// Row filler for `exp(beta omega - shift)`.
    pub fn weigher(&self, beta: f64, shift: f64) -> Weigher {
        Weigher {
            env: *self,
            beta,
            shift,
            plus: (beta - shift).exp(),
            minus: (-beta - shift).exp(),
        }
    }
}

impl Weigher {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    /// `out[j] = exp(beta * omega(n, u, v0 + 2 j) - shift)`.
    pub fn fill_row(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) {
        let rk = self.env.row_key(n, u);
        let k0 = v0.div_euclid(2);
        let (beta, shift) = (self.beta, self.shift);
        match self.env.law {
            DisorderLaw::Rademacher => fill_bits(rk, k0, out, self.plus, self.minus),
            DisorderLaw::Uniform => {
                for (j, o) in out.iter_mut().enumerate() {
                    let k = k0 + j as i64;
                    let w = uniform_from(mix(rk.wrapping_add((k as u64).wrapping_mul(GOLDEN))));
                    *o = fastmath::exp(beta.mul_add(w, -shift));
                }
            }
            DisorderLaw::Gaussian => {
                fill_gaussian(rk, k0, out, |w| fastmath::exp(beta.mul_add(w, -shift)))
            }
        }
    }

    /// Single-site version of [`Weigher::fill_row`].
    pub fn weight(&self, n: i64, u: i64, v: i64) -> f64 {
        let w = self.env.omega_uv(n, u, v);
        match self.env.law {
            DisorderLaw::Rademacher => {
                if w > 0.0 {
                    self.plus
                } else {
                    self.minus
                }
            }
            _ => fastmath::exp(self.beta.mul_add(w, -self.shift)),
        }
    }
}

#[inline(always)]
fn uniform_from(w: u64) -> f64 {
    let u = ((w >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    SQRT3 * (2.0 * u - 1.0)
}

fn fill_bits(rk: u64, k0: i64, out: &mut [f64], one: f64, zero: f64) {
    let d = one - zero;
    let mut j = 0usize;
    let mut k = k0;
    while j < out.len() {
        let q = k >> 6;
        let b0 = (k & 63) as u32;
        let word = mix(rk.wrapping_add((q as u64).wrapping_mul(GOLDEN))) >> b0;
        let cnt = ((64 - b0) as usize).min(out.len() - j);
        for (t, o) in out[j..j + cnt].iter_mut().enumerate() {
            *o = d.mul_add(((word >> t) & 1) as f64, zero);
        }
        j += cnt;
        k += cnt as i64;
    }
}

/// Box-Muller over pairs of sites `(2p, 2p + 1)`: the even site takes the
/// cosine branch, the odd one the sine branch.
fn fill_gaussian(rk: u64, k0: i64, out: &mut [f64], f: impl Fn(f64) -> f64) {
    const PAIRS: usize = 64;
    let mut rad = [0.0f64; PAIRS];
    let mut even = [0.0f64; PAIRS];
    let mut odd = [0.0f64; PAIRS];
    let mut buf = [0.0f64; 2 * PAIRS];
    if out.is_empty() {
        return;
    }
    let k_end = k0 + out.len() as i64;
    let mut p = k0 >> 1;
    let p_end = ((k_end - 1) >> 1) + 1;
    while p < p_end {
        let np = ((p_end - p) as usize).min(PAIRS);
        let b0 = rk.wrapping_add(((2 * p) as u64).wrapping_mul(GOLDEN));
        let step = GOLDEN.wrapping_mul(2);
        for (i, (r, a)) in rad[..np].iter_mut().zip(even[..np].iter_mut()).enumerate() {
            let base = b0.wrapping_add(step.wrapping_mul(i as u64));
            *r = unit_open0(mix(base));
            *a = unit_closed0(mix(base.wrapping_add(GOLDEN)));
        }
        for ((r, e), o) in rad[..np].iter_mut().zip(even[..np].iter_mut()).zip(odd[..np].iter_mut()) {
            let rr = (-2.0 * fastmath::ln(*r)).sqrt();
            let a = *e;
            *e = f(rr * fastmath::cos_2pi(a));
            *o = f(rr * fastmath::cos_2pi(a - 0.25));
        }
        for (i, (e, o)) in even[..np].iter().zip(&odd[..np]).enumerate() {
            buf[2 * i] = *e;
            buf[2 * i + 1] = *o;
        }
        // sites covered: 2p .. 2(p + np)
        let lo = (2 * p).max(k0);
        let hi = (2 * (p + np as i64)).min(k_end);
        let src = (lo - 2 * p) as usize;
        let dst = (lo - k0) as usize;
        let cnt = (hi - lo) as usize;
        out[dst..dst + cnt].copy_from_slice(&buf[src..src + cnt]);
        p += np as i64;
    }
}

/// Space-time window of a materialised field: times `t0..=t1`, sites in
/// `[x1_lo, x1_hi] x [x2_lo, x2_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldWindow {
    pub t0: i64,
    pub t1: i64,
    pub x1: (i64, i64),
    pub x2: (i64, i64),
}

impl FieldWindow {
    pub fn new(t0: i64, t1: i64, x1: (i64, i64), x2: (i64, i64)) -> Self {
        FieldWindow { t0, t1, x1, x2 }
    }

    /// Times `1..=n` on the box `|x|_inf <= radius`.
    pub fn cube(n: i64, radius: i64) -> Self {
        FieldWindow::new(1, n, (-radius, radius), (-radius, radius))
    }

    fn dims(&self) -> (usize, usize, usize) {
        let nt = (self.t1 - self.t0 + 1).max(0) as usize;
        let n1 = (self.x1.1 - self.x1.0 + 1).max(0) as usize;
        let n2 = (self.x2.1 - self.x2.0 + 1).max(0) as usize;
        (nt, n1, n2)
    }

    pub fn volume(&self) -> usize {
        let (a, b, c) = self.dims();
        a * b * c
    }

    pub fn contains(&self, n: i64, x: [i64; 2]) -> bool {
        (self.t0..=self.t1).contains(&n)
            && (self.x1.0..=self.x1.1).contains(&x[0])
            && (self.x2.0..=self.x2.1).contains(&x[1])
    }
}

/// Largest field `sample_field` will materialise (values).
pub const FIELD_BUDGET: usize = 1 << 27;

/// Materialised window of one environment.
#[derive(Clone, Debug)]
pub struct DisorderField {
    pub law: DisorderLaw,
    pub seed: u64,
    pub window: FieldWindow,
    values: Vec<f64>,
}

pub fn sample_field(law: DisorderLaw, window: FieldWindow, seed: u64) -> Result<DisorderField> {
    let vol = window.volume();
    if vol > FIELD_BUDGET {
        return Err(Error::Resource(format!(
            "field window of {vol} values exceeds budget {FIELD_BUDGET}"
        )));
    }
    let env = Environment::new(law, seed);
    let mut values = Vec::with_capacity(vol);
    for n in window.t0..=window.t1 {
        for a in window.x1.0..=window.x1.1 {
            for b in window.x2.0..=window.x2.1 {
                values.push(env.omega(n, [a, b]));
            }
        }
    }
    Ok(DisorderField {
        law,
        seed,
        window,
        values,
    })
}

impl DisorderField {
    pub fn environment(&self) -> Environment {
        Environment::new(self.law, self.seed)
    }

    fn index(&self, n: i64, x: [i64; 2]) -> Option<usize> {
        if !self.window.contains(n, x) {
            return None;
        }
        let (_, n1, n2) = self.window.dims();
        let t = (n - self.window.t0) as usize;
        let a = (x[0] - self.window.x1.0) as usize;
        let b = (x[1] - self.window.x2.0) as usize;
        Some((t * n1 + a) * n2 + b)
    }

    pub fn get(&self, n: i64, x: [i64; 2]) -> Option<f64> {
        self.index(n, x).map(|i| self.values[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise `xi` transform, same layout as [`DisorderField::values`].
    pub fn xi_transform(&self, beta: f64) -> Result<Vec<f64>> {
        let s = sigma_n(self.law, beta)?;
        if s.value <= 0.0 {
            return domain("xi undefined: sigma_N = 0");
        }
        let lam = log_mgf(self.law, beta)?;
        Ok(self
            .values
            .iter()
            .map(|&w| (beta * w - lam).exp_m1() / s.value)
            .collect())
    }

    /// Debug dump: `n,x1,x2,omega`.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "n,x1,x2,omega")?;
        let mut i = 0;
        for n in self.window.t0..=self.window.t1 {
            for a in self.window.x1.0..=self.window.x1.1 {
                for b in self.window.x2.0..=self.window.x2.1 {
                    writeln!(w, "{n},{a},{b},{:.17e}", self.values[i])?;
                    i += 1;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        (m, var, m4)
    }

    #[test]
    fn log_mgf_examples() {
        assert!((log_mgf(DisorderLaw::Gaussian, 0.7).unwrap() - 0.245).abs() < 1e-15);
        assert!((log_mgf(DisorderLaw::Rademacher, 1.0).unwrap() - 1f64.cosh().ln()).abs() < 1e-15);
        for law in DisorderLaw::ALL {
            assert_eq!(log_mgf(law, 0.0).unwrap(), 0.0);
        }
        assert!(log_mgf(DisorderLaw::Gaussian, f64::NAN).is_err());
    }

    #[test]
    fn uniform_mgf_branches_agree() {
        // log(sinh(y)/y), y = sqrt(3) b, 40-digit reference values
        let table = [
            (1e-4, 4.9999999950000000095e-9),
            (5e-4, 1.2499999687500014881e-7),
            (5.77e-4, 1.664644944579143994e-7),
            (6e-4, 1.7999999352000044434e-7),
            (1e-3, 4.9999995000000952381e-7),
            (0.01, 4.9999500009523595243e-5),
            (0.3, 0.044601805263488307949),
        ];
        for (b, want) in table {
            let got = log_mgf(DisorderLaw::Uniform, b).unwrap();
            assert!((got - want).abs() <= 1e-13 * want, "{b}: {got} {want}");
        }
        for b in [2.0f64, 40.0] {
            let y = SQRT3 * b;
            let want = (y.sinh() / y).ln();
            assert!((log_mgf(DisorderLaw::Uniform, b).unwrap() - want).abs() <= 1e-13 * want);
        }
        // no overflow where sinh does
        let big = log_mgf(DisorderLaw::Uniform, 500.0).unwrap();
        assert!(big.is_finite() && big > 0.0);
        let big = log_mgf(DisorderLaw::Rademacher, 800.0).unwrap();
        assert!((big - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        let s = sigma_n(DisorderLaw::Gaussian, 0.3).unwrap();
        assert!((s.value - (0.09f64.exp() - 1.0).sqrt()).abs() < 1e-15);
        assert_eq!(sigma_n(DisorderLaw::Gaussian, 0.0).unwrap().value, 0.0);
        let s = sigma_n(DisorderLaw::Gaussian, 0.01).unwrap();
        assert!((s.value - 0.010_000_25).abs() < 1e-8, "{}", s.value);
        assert!((s.ratio() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sigma_ratio_tends_to_one() {
        for law in DisorderLaw::ALL {
            let mut prev = f64::INFINITY;
            for &b in &[0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
                let d = (sigma_n(law, b).unwrap().ratio() - 1.0).abs();
                assert!(d <= prev + 1e-15, "{law} {b}");
                prev = d;
            }
            assert!(prev < 1e-5);
        }
    }

    #[test]
    fn xi_of_zero_field() {
        let b = 0.4;
        let got = xi(DisorderLaw::Gaussian, b, 0.0).unwrap();
        let want = ((-b * b / 2.0f64).exp() - 1.0) / ((b * b).exp() - 1.0).sqrt();
        assert!((got - want).abs() < 1e-14);
        assert!(got < 0.0);
    }

    #[test]
    fn laws_are_standardised() {
        for law in DisorderLaw::ALL {
            let env = Environment::new(law, 0xC0FFEE);
            let mut row = vec![0.0; 1000];
            let mut all = Vec::with_capacity(1_000_000);
            for n in 1..=1000 {
                env.fill_omega_row(n, n % 7 - 3, -999, &mut row);
                all.extend_from_slice(&row);
            }
            let (m, v, m4) = moments(all.iter().copied());
            let n = all.len() as f64;
            assert!(m.abs() < 4.0 * (v / n).sqrt(), "{law} mean {m}");
            let se_var = ((m4 - v * v) / n).sqrt();
            assert!((v - 1.0).abs() < 4.0 * se_var, "{law} var {v}");
        }
    }

    #[test]
    fn normalised_weights_have_unit_mean() {
        for law in DisorderLaw::ALL {
            for &beta in &[0.1, 0.5] {
                let lam = log_mgf(law, beta).unwrap();
                let wg = Environment::new(law, 99).weigher(beta, lam);
                let mut row = vec![0.0; 1000];
                let mut all = Vec::with_capacity(1_000_000);
                for n in 1..=1000 {
                    wg.fill_row(n, 1, -1001, &mut row);
                    all.extend_from_slice(&row);
                }
                let (m, v, _) = moments(all.iter().copied());
                assert!((m - 1.0).abs() < 4.0 * (v / all.len() as f64).sqrt(), "{law} {beta} {m}");
            }
        }
    }

    #[test]
    fn xi_is_standardised() {
        let field = sample_field(DisorderLaw::Gaussian, FieldWindow::cube(40, 79), 5).unwrap();
        assert_eq!(field.values().len(), 40 * 159 * 159);
        let xs = field.xi_transform(0.6).unwrap();
        let (m, v, m4) = moments(xs.iter().copied());
        let n = xs.len() as f64;
        assert!(m.abs() < 4.0 * (v / n).sqrt(), "{m}");
        assert!((v - 1.0).abs() < 4.0 * ((m4 - v * v) / n).sqrt(), "{v}");
    }

    #[test]
    fn rows_agree_with_single_sites() {
        for law in DisorderLaw::ALL {
            let env = Environment::new(law, 42).replica(3);
            let wg = env.weigher(0.37, 0.2);
            for &(n, u, v0, len) in &[(1i64, 0i64, -6i64, 7usize), (5, -3, -131, 200), (9, 4, 10, 1), (2, 1, 63, 130)] {
                let mut om = vec![0.0; len];
                let mut w = vec![0.0; len];
                env.fill_omega_row(n, u, v0, &mut om);
                wg.fill_row(n, u, v0, &mut w);
                for j in 0..len {
                    let v = v0 + 2 * j as i64;
                    let x = [(u + v) / 2, (u - v) / 2];
                    assert_eq!(om[j], env.omega(n, x), "{law} omega {n} {u} {v}");
                    assert_eq!(w[j], wg.weight(n, u, v), "{law} weight {n} {u} {v}");
                    let direct = (0.37 * om[j] - 0.2).exp();
                    assert!((w[j] - direct).abs() < 1e-14 * direct);
                }
            }
        }
    }

    #[test]
    fn windows_are_restrictions() {
        let a = sample_field(DisorderLaw::Uniform, FieldWindow::new(1, 6, (-4, 4), (-4, 4)), 7).unwrap();
        let b = sample_field(DisorderLaw::Uniform, FieldWindow::new(3, 9, (0, 9), (-2, 2)), 7).unwrap();
        for n in 3..=6 {
            for x1 in 0..=4 {
                for x2 in -2..=2 {
                    assert_eq!(a.get(n, [x1, x2]), b.get(n, [x1, x2]));
                }
            }
        }
        let again = sample_field(DisorderLaw::Uniform, a.window, 7).unwrap();
        assert_eq!(a.values(), again.values());
        assert!(a.get(0, [0, 0]).is_none());
    }

    #[test]
    fn replicas_differ() {
        let env = Environment::new(DisorderLaw::Gaussian, 1);
        let x: Vec<f64> = (0..64).map(|r| env.replica(r).omega(1, [0, 1])).collect();
        let mut s = x.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        assert_eq!(s.len(), 64);
    }

    #[test]
    fn oversized_window_is_refused() {
        let w = FieldWindow::cube(10_000, 1000);
        assert!(matches!(sample_field(DisorderLaw::Gaussian, w, 0), Err(Error::Resource(_))));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let f = sample_field(DisorderLaw::Rademacher, FieldWindow::cube(2, 1), 3).unwrap();
        let mut out = Vec::new();
        f.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 1 + 18);
        assert!(s.starts_with("n,x1,x2,omega\n1,-1,-1,"));
    }
}
