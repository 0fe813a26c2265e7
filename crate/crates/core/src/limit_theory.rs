//! Limit objects: the one-point log-normal law, the covariance kernel
//! `K_t(d) = (1/4pi) E1(d^2 / 4t)` of the additive stochastic heat
//! equation, and `sigma_phi^2(t) = <phi, K_t phi>` by grid quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = int_x^inf e^{-s}/s ds` for `x > 0`.
pub fn exp_int_e1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        // -gamma - ln x - sum_k (-x)^k / (k k!)
        let mut sum = 0.0;
        let mut fact_pow = 1.0;
        let mut k = 1.0;
        loop {
            fact_pow *= -x / k;
            let term = fact_pow / k;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) || k > 60.0 {
                break;
            }
            k += 1.0;
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz on e^{-x} / (x + 1 - 1^2/(x + 3 - 2^2/(x + 5 - ...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / an.mul_add(d, b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// `K_t(d) = int_0^t (1/4 pi u) e^{-d^2/4u} du = (1/4 pi) E1(d^2 / 4t)`;
/// `+inf` at `d = 0`.
pub fn kernel_k(t: f64, d: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("K_t needs t > 0, got {t}"));
    }
    if !(d >= 0.0) {
        return domain(format!("distance must be >= 0, got {d}"));
    }
    Ok(exp_int_e1(d * d / (4.0 * t)) / (4.0 * PI))
}

/// Average of `K_t` over a disc of area `h^2` centred at the origin.
fn kernel_cell_average(t: f64, h: f64) -> f64 {
    let rho2 = h * h / PI;
    let y = rho2 / (4.0 * t);
    t * (y * exp_int_e1(y) + 1.0 - (-y).exp()) / (h * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Heat kernel `g_s(x) = e^{-|x|^2/2s} / (2 pi s)` cut at `|x| = 6 sqrt(s)`.
    GaussianBump { scale: f64 },
    /// `exp(-1 / (1 - |x|^2/r^2))` on `|x| < r`.
    CompactBump { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub shape: Shape,
    pub amplitude: f64,
}

const GAUSS_CUT: f64 = 6.0;

impl TestFunction {
    pub fn gaussian(scale: f64) -> Self {
        TestFunction {
            shape: Shape::GaussianBump { scale },
            amplitude: 1.0,
        }
    }

    pub fn bump(radius: f64) -> Self {
        TestFunction {
            shape: Shape::CompactBump { radius },
            amplitude: 1.0,
        }
    }

    pub fn scaled(self, a: f64) -> Self {
        TestFunction {
            amplitude: self.amplitude * a,
            ..self
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let p = match self.shape {
            Shape::GaussianBump { scale } => scale,
            Shape::CompactBump { radius } => radius,
        };
        if !(p > 0.0) || !p.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::Config(format!("invalid test function {self}")));
        }
        Ok(())
    }

    /// Radius outside which `phi` vanishes.
    pub fn support_radius(&self) -> f64 {
        match self.shape {
            Shape::GaussianBump { scale } => GAUSS_CUT * scale.sqrt(),
            Shape::CompactBump { radius } => radius,
        }
    }

    /// Natural length scale, used to pick quadrature spacings.
    pub fn length_scale(&self) -> f64 {
        match self.shape {
            Shape::GaussianBump { scale } => scale.sqrt(),
            Shape::CompactBump { radius } => radius,
        }
    }

    /// Mass of the untruncated profile cut away (zero for the bump).
    pub fn truncated_tail_mass(&self) -> f64 {
        match self.shape {
            Shape::GaussianBump { .. } => self.amplitude.abs() * (-0.5 * GAUSS_CUT * GAUSS_CUT).exp(),
            Shape::CompactBump { .. } => 0.0,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let rs = self.support_radius();
        if r2 > rs * rs || self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude
            * match self.shape {
                Shape::GaussianBump { scale } => (-r2 / (2.0 * scale)).exp() / (2.0 * PI * scale),
                Shape::CompactBump { radius } => {
                    let q = r2 / (radius * radius);
                    if q >= 1.0 {
                        0.0
                    } else {
                        (-1.0 / (1.0 - q)).exp()
                    }
                }
            }
    }

    /// Values on the grid `(i h, j h)`, `|i|, |j| <= m`, with
    /// `m = ceil(support / h)`; row-major, side `2m + 1`.
    pub fn sample_grid(&self, h: f64) -> (Vec<f64>, usize) {
        let m = (self.support_radius() / h).ceil() as i64;
        let side = (2 * m + 1) as usize;
        let mut v = Vec::with_capacity(side * side);
        for i in -m..=m {
            for j in -m..=m {
                v.push(self.eval([i as f64 * h, j as f64 * h]));
            }
        }
        (v, side)
    }

    /// Riemann sum of `|phi|` with spacing `h`.
    pub fn l1_riemann(&self, h: f64) -> f64 {
        let (v, _) = self.sample_grid(h);
        crate::sum::sum(v.iter().map(|x| x.abs())) * h * h
    }

    pub fn sup_norm(&self) -> f64 {
        self.amplitude.abs()
            * match self.shape {
                Shape::GaussianBump { scale } => 1.0 / (2.0 * PI * scale),
                Shape::CompactBump { .. } => (-1.0f64).exp(),
            }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.shape {
            Shape::GaussianBump { scale } => format!("gauss:{scale}"),
            Shape::CompactBump { radius } => format!("bump:{radius}"),
        };
        if self.amplitude == 1.0 {
            write!(f, "{base}")
        } else {
            write!(f, "{base}*{}", self.amplitude)
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// `gauss:S`, `bump:R`, optionally followed by `*A`; `zero`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(TestFunction::gaussian(1.0).scaled(0.0));
        }
        let (body, amp) = match s.split_once('*') {
            Some((b, a)) => (
                b,
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad amplitude in test function '{s}'")))?,
            ),
            None => (s, 1.0),
        };
        let (kind, val) = body
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("test function '{s}' must look like gauss:S or bump:R")))?;
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad parameter in test function '{s}'")))?;
        let phi = match kind.trim() {
            "gauss" | "g" => TestFunction::gaussian(v),
            "bump" => TestFunction::bump(v),
            other => return Err(Error::Config(format!("unknown test function kind '{other}'"))),
        }
        .scaled(amp);
        phi.validate()?;
        Ok(phi)
    }
}

fn fft2(data: &mut [Complex<f64>], p: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let fft = if inverse {
        planner.plan_fft_inverse(p)
    } else {
        planner.plan_fft_forward(p)
    };
    for row in data.chunks_mut(p) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); p];
    for j in 0..p {
        for i in 0..p {
            col[i] = data[i * p + j];
        }
        fft.process(&mut col);
        for i in 0..p {
            data[i * p + j] = col[i];
        }
    }
}

/// `<phi, K_t phi>` with grid spacing `h`: point values of `K_t` off the
/// diagonal, the exact disc average of `K_t` on the diagonal cell.
pub fn sigma_phi_sq_with(phi: &TestFunction, t: f64, h: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("sigma_phi^2 needs t > 0, got {t}"));
    }
    phi.validate()?;
    if phi.is_zero() {
        return Ok(0.0);
    }
    let (v, side) = phi.sample_grid(h);
    let p = (2 * side).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); p * p];
    for i in 0..side {
        for j in 0..side {
            buf[i * p + j] = Complex::new(v[i * side + j], 0.0);
        }
    }
    let mut planner = FftPlanner::new();
    fft2(&mut buf, p, false, &mut planner);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    fft2(&mut buf, p, true, &mut planner);
    let norm = 1.0 / (p * p) as f64;
    let s = side as i64;
    let mut acc = crate::sum::Neumaier::new();
    for dx in -(s - 1)..s {
        for dy in -(s - 1)..s {
            let c = buf[dx.rem_euclid(p as i64) as usize * p + dy.rem_euclid(p as i64) as usize].re * norm;
            let k = if dx == 0 && dy == 0 {
                kernel_cell_average(t, h)
            } else {
                let d = h * ((dx * dx + dy * dy) as f64).sqrt();
                exp_int_e1(d * d / (4.0 * t)) / (4.0 * PI)
            };
            acc.add(c * k);
        }
    }
    Ok(acc.value() * h.powi(4))
}

/// `<phi, K_t phi>`, refining the grid until halving `h` changes the value
/// by at most `1e-3` relative.
pub fn sigma_phi_sq(phi: &TestFunction, t: f64) -> Result<f64> {
    let mut h = phi.length_scale() / 8.0;
    let mut prev = sigma_phi_sq_with(phi, t, h)?;
    if prev == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..3 {
        h *= 0.5;
        let next = sigma_phi_sq_with(phi, t, h)?;
        if ((next - prev) / next).abs() <= 1e-3 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "sigma_phi^2 quadrature for {phi} at t = {t} did not settle"
    )))
}

/// `sigma_hat^2 = log(1 / (1 - beta_hat^2))`.
pub fn sigma_hat_sq(beta_hat: f64) -> Result<f64> {
    check_subcritical(beta_hat)?;
    Ok(-(-beta_hat * beta_hat).ln_1p())
}

/// `c_hat^2 = 1 / (1 - beta_hat^2)`.
pub fn c_hat_sq(beta_hat: f64) -> Result<f64> {
    check_subcritical(beta_hat)?;
    Ok(1.0 / (1.0 - beta_hat * beta_hat))
}

fn check_subcritical(beta_hat: f64) -> Result<()> {
    if !(beta_hat > 0.0 && beta_hat < 1.0) {
        return domain(format!(
            "predictions need beta_hat in (0, 1), got {beta_hat} (no weak-disorder limit at or above 1)"
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Fluctuations of `log Z` at time `t = 1`: `c^2 sigma_phi^2(K_1)`.
    Kpz,
    /// The averaged polymer field: `2 c^2 sigma_phi^2(K_{1/2})`.
    Polymer,
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kpz" => Ok(Target::Kpz),
            "polymer" => Ok(Target::Polymer),
            _ => Err(Error::Config(format!("unknown target '{s}' (kpz or polymer)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub beta_hat: f64,
    pub sigma_hat_sq: f64,
    pub c_hat: f64,
    pub c_hat_sq: f64,
    pub t: f64,
    pub sigma_phi_sq: f64,
    pub predicted_variance: f64,
    pub target: Target,
    pub phi_spec: String,
}

pub fn predict(beta_hat: f64, phi: &TestFunction, target: Target) -> Result<PredictionSet> {
    let c2 = c_hat_sq(beta_hat)?;
    let (t, factor) = match target {
        Target::Kpz => (1.0, 1.0),
        Target::Polymer => (0.5, 2.0),
    };
    let s2 = sigma_phi_sq(phi, t)?;
    Ok(PredictionSet {
        beta_hat,
        sigma_hat_sq: sigma_hat_sq(beta_hat)?,
        c_hat: c2.sqrt(),
        c_hat_sq: c2,
        t,
        sigma_phi_sq: s2,
        predicted_variance: factor * c2 * s2,
        target,
        phi_spec: phi.to_string(),
    })
}

/// Draw of `sigma_hat Z - sigma_hat^2 / 2`.
pub fn sample_one_point_limit(beta_hat: f64, rng: &mut impl Rng) -> Result<f64> {
    let s2 = sigma_hat_sq(beta_hat)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(s2.sqrt() * z - 0.5 * s2)
}

/// Draw of `<v^{(c)}(t), phi> ~ N(0, c^2 sigma_phi^2)`.
pub fn sample_limit_pairing(c: f64, sigma_phi_sq: f64, rng: &mut impl Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    c * sigma_phi_sq.max(0.0).sqrt() * z
}
