//! Optimal hypercontractivity constants of one disorder variable.
//!
//! `c_p` is the smallest `c` with `||a + xi / c||_p <= ||a + xi||_2` for
//! all real `a`, `xi` centered with unit variance.

use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::disorder::DisorderLaw;
use crate::error::{domain, Result};

/// Half-width of the `a` grid.
pub const A_MAX: f64 = 20.0;
/// Default number of grid points on `[-A, A]`.
pub const A_STEPS: usize = 801;
/// Relative slack for rounding in the norm comparison.
const SLACK: f64 = 1e-12;

/// `E|a + s xi|^p` for the unit-variance version of `law`.
pub fn abs_moment(law: DisorderLaw, a: f64, s: f64, p: f64) -> f64 {
    match law {
        DisorderLaw::Rademacher => 0.5 * ((a + s).abs().powf(p) + (a - s).abs().powf(p)),
        DisorderLaw::Uniform => {
            // xi uniform on [-sqrt 3, sqrt 3]; integrate |x|^p in x = a + b u
            let b = s * 3f64.sqrt();
            if b == 0.0 {
                return a.abs().powf(p);
            }
            let f = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
            (f(a + b) - f(a - b)) / (2.0 * b)
        }
        DisorderLaw::Gaussian => gaussian_abs_moment(a, s, p),
    }
}

/// `E|X|^p`, `X ~ N(mu, s^2)`, via Kummer's transformation of 1F1:
/// `s^p 2^{p/2} Gamma((p+1)/2) / sqrt(pi) * e^{-y} 1F1((p+1)/2; 1/2; y)`,
/// `y = mu^2 / (2 s^2)`. All series terms are positive.
fn gaussian_abs_moment(mu: f64, s: f64, p: f64) -> f64 {
    if s == 0.0 {
        return mu.abs().powf(p);
    }
    let y = mu * mu / (2.0 * s * s);
    let pre = p * s.ln() + 0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
        - 0.5 * std::f64::consts::PI.ln();
    if y == 0.0 {
        return pre.exp();
    }
    if y > 200.0 {
        return gaussian_abs_moment_far(mu.abs(), s, p);
    }
    let a = 0.5 * (p + 1.0);
    let ly = y.ln();
    // log terms: -y + sum_{j<k} ln((a+j)/(1/2+j)) + k ln y - ln k!
    let mut lt = -y;
    let mut logs = vec![lt];
    let mut k = 0.0f64;
    let mut peak = lt;
    loop {
        lt += ((a + k) / (0.5 + k)).ln() + ly - (k + 1.0).ln();
        k += 1.0;
        logs.push(lt);
        peak = peak.max(lt);
        if k > y && lt < peak - 40.0 {
            break;
        }
    }
    let sum: f64 = logs.iter().map(|l| (l - peak).exp()).sum();
    (pre + peak + sum.ln()).exp()
}

/// Binomial expansion of `E (mu + s Z)^p` for `mu >> s`; the negative
/// half-line carries mass below `e^{-200}`.
fn gaussian_abs_moment_far(mu: f64, s: f64, p: f64) -> f64 {
    let r2 = (s / mu).powi(2);
    let mut term = 1.0;
    let mut total = 1.0;
    let mut j = 0.0f64;
    loop {
        // C(p, 2j+2) (2j+1)!! / (C(p, 2j) (2j-1)!!) (s/mu)^2
        term *= (p - 2.0 * j) * (p - 2.0 * j - 1.0) / (2.0 * j + 2.0) * r2;
        j += 1.0;
        total += term;
        if term.abs() < 1e-17 * total.abs() || j > 200.0 {
            break;
        }
    }
    mu.powf(p) * total
}

/// `||a + xi / c||_p`.
pub fn lp_norm(law: DisorderLaw, a: f64, c: f64, p: f64) -> f64 {
    abs_moment(law, a, 1.0 / c, p).powf(1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HyperCheck {
    pub holds: bool,
    /// Smallest relative margin `1 - ||a + xi/c||_p / ||a + xi||_2` on the grid.
    pub worst_margin: f64,
    pub worst_a: f64,
    /// `1 - (p - 1) / c^2`, the large-`|a|` condition.
    pub asymptotic_margin: f64,
}

pub fn hyper_holds(law: DisorderLaw, c: f64, p: f64, a_range: f64, a_steps: usize) -> Result<HyperCheck> {
    if !(c >= 1.0) || !c.is_finite() {
        return domain(format!("c must be a finite number >= 1, got {c}"));
    }
    if !(p > 2.0) || !p.is_finite() {
        return domain(format!("p must exceed 2, got {p}"));
    }
    if a_steps < 2 || !(a_range > 0.0) {
        return domain("the a grid needs a positive range and at least two points");
    }
    let mut worst = f64::INFINITY;
    let mut worst_a = 0.0;
    for i in 0..a_steps {
        let a = -a_range + 2.0 * a_range * i as f64 / (a_steps - 1) as f64;
        let lhs = lp_norm(law, a, c, p);
        let rhs = (a * a + 1.0).sqrt();
        let m = 1.0 - lhs / rhs;
        if m < worst {
            worst = m;
            worst_a = a;
        }
    }
    let asym = 1.0 - (p - 1.0) / (c * c);
    Ok(HyperCheck {
        holds: worst >= -SLACK && asym >= 0.0,
        worst_margin: worst,
        worst_a,
        asymptotic_margin: asym,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperEstimate {
    pub law: DisorderLaw,
    pub p: f64,
    pub c_p: f64,
    pub a_range: f64,
    pub a_steps: usize,
    pub certificate: HyperCheck,
}

/// Bisection for `c_p` on `[1, 4]`.
pub fn estimate_cp(law: DisorderLaw, p: f64, tol: f64) -> Result<HyperEstimate> {
    if !(p > 2.0 && p <= 4.0) {
        return domain(format!("p must lie in (2, 4], got {p}"));
    }
    if !(tol > 0.0) {
        return domain("tolerance must be positive");
    }
    let check = |c: f64| hyper_holds(law, c, p, A_MAX, A_STEPS);
    let (mut lo, mut hi) = (1.0, 4.0);
    let top = check(hi)?;
    if !top.holds || check(lo)?.holds {
        return Err(crate::Error::Numerical(format!(
            "bisection bracket [1, 4] invalid for {} at p = {p}",
            law.name()
        )));
    }
    let mut cert = top;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let r = check(mid)?;
        if r.holds {
            hi = mid;
            cert = r;
        } else {
            lo = mid;
        }
    }
    Ok(HyperEstimate {
        law,
        p,
        c_p: hi,
        a_range: A_MAX,
        a_steps: A_STEPS,
        certificate: cert,
    })
}

/// Random multilinear polynomial in `n_vars` Rademacher signs.
#[derive(Clone, Debug, PartialEq)]
pub struct Multilinear {
    pub n_vars: usize,
    /// Coefficient of the monomial with variable set `mask`.
    pub coef: Vec<f64>,
}

impl Multilinear {
    pub fn zero(n_vars: usize) -> Self {
        Multilinear {
            n_vars,
            coef: vec![0.0; 1 << n_vars],
        }
    }

    /// Coefficients `N(0,1)` on a random subset of monomials of degree `<= degree`.
    pub fn random(n_vars: usize, degree: usize, rng: &mut impl Rng) -> Self {
        let mut m = Multilinear::zero(n_vars);
        let density: f64 = rng.random_range(0.05..1.0);
        for (mask, c) in m.coef.iter_mut().enumerate() {
            if (mask.count_ones() as usize) <= degree && rng.random::<f64>() < density {
                *c = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        m
    }

    /// `E[X_k^2] = sum_{|S| = k} a_S^2`.
    pub fn order_second_moments(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars + 1];
        for (mask, c) in self.coef.iter().enumerate() {
            out[mask.count_ones() as usize] += c * c;
        }
        out
    }

    /// Values on all `2^n` sign patterns (bit set = -1), by a Walsh-Hadamard pass.
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.coef.clone();
        let n = v.len();
        let mut h = 1;
        while h < n {
            for i in (0..n).step_by(2 * h) {
                for j in i..i + h {
                    let (x, y) = (v[j], v[j + h]);
                    v[j] = x + y;
                    v[j + h] = x - y;
                }
            }
            h *= 2;
        }
        v
    }

    /// Exact `E|X|^p` under uniform signs.
    pub fn abs_moment(&self, p: f64) -> f64 {
        let v = self.values();
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentBoundReport {
    pub p: f64,
    pub c_p: f64,
    pub instances: usize,
    pub satisfied: usize,
    /// Largest `E|X|^p / (sum c^{2k} E X_k^2)^{p/2}` seen.
    pub worst_ratio: f64,
}

/// `E|sum X_k|^p <= (sum_k c^{2k} E[X_k^2])^{p/2}` on explicit instances.
pub fn check_moment_bound(p: f64, c_p: f64, instances: &[Multilinear]) -> MomentBoundReport {
    let mut satisfied = 0;
    let mut worst: f64 = 0.0;
    for inst in instances {
        let lhs = inst.abs_moment(p);
        let rhs: f64 = inst
            .order_second_moments()
            .iter()
            .enumerate()
            .map(|(k, m)| c_p.powi(2 * k as i32) * m)
            .sum::<f64>()
            .powf(p / 2.0);
        if lhs <= rhs * (1.0 + 1e-12) {
            satisfied += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    MomentBoundReport {
        p,
        c_p,
        instances: instances.len(),
        satisfied,
        worst_ratio: worst,
    }
}

/// Draws `count` instances on up to 12 signs and degree `<= 3` and checks
/// them exactly. Only Rademacher moments are enumerable.
pub fn verify_moment_bound(
    law: DisorderLaw,
    p: f64,
    c_p: f64,
    count: usize,
    rng: &mut impl Rng,
) -> Result<MomentBoundReport> {
    if law != DisorderLaw::Rademacher {
        return domain("exact moment enumeration is available for Rademacher signs only");
    }
    let instances: Vec<Multilinear> = (0..count)
        .map(|_| {
            let n = rng.random_range(1..=12usize);
            let d = rng.random_range(1..=3usize).min(n);
            Multilinear::random(n, d, rng)
        })
        .collect();
    Ok(check_moment_bound(p, c_p, &instances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_moment_closed_forms() {
        // E|Z|^3 = 2 sqrt(2/pi); E(mu + Z)^4 = mu^4 + 6 mu^2 + 3
        let m3 = gaussian_abs_moment(0.0, 1.0, 3.0);
        assert!((m3 - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-13);
        // both branches agree across the switch
        for p in [2.3, 3.0, 3.7] {
            let lo = gaussian_abs_moment(19.9, 1.0, p);
            let hi = gaussian_abs_moment_far(19.9, 1.0, p);
            assert!((lo - hi).abs() < 1e-12 * lo, "p={p}");
        }
        for mu in [0.3, 2.0, 7.5, 19.0, 40.0, 1e4] {
            let m4 = gaussian_abs_moment(mu, 1.0, 4.0);
            let want = mu.powi(4) + 6.0 * mu * mu + 3.0;
            assert!((m4 - want).abs() < 1e-12 * want, "mu={mu}");
            let m2 = gaussian_abs_moment(mu, 0.5, 2.0);
            assert!((m2 - (mu * mu + 0.25)).abs() < 1e-12 * (mu * mu + 0.25));
        }
    }

    #[test]
    fn uniform_moment_closed_form() {
        let p = 2.0;
        for a in [0.0, 0.4, 5.0] {
            let m = abs_moment(DisorderLaw::Uniform, a, 0.7, p);
            assert!((m - (a * a + 0.49)).abs() < 1e-12 * (1.0 + a * a));
        }
        // E|xi|^4 = 9/5 for the uniform law on [-sqrt3, sqrt3]
        assert!((abs_moment(DisorderLaw::Uniform, 0.0, 1.0, 4.0) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn holds_examples() {
        for law in DisorderLaw::ALL {
            for p in [2.5, 3.0, 4.0] {
                assert!(hyper_holds(law, 1e6, p, A_MAX, 201).unwrap().holds);
            }
        }
        assert!(!hyper_holds(DisorderLaw::Gaussian, 1.2, 3.0, A_MAX, 201).unwrap().holds);
        assert!(hyper_holds(DisorderLaw::Rademacher, 1.01, 2.0 + 1e-6, A_MAX, 201).unwrap().holds);
        assert!(hyper_holds(DisorderLaw::Gaussian, 0.9, 3.0, A_MAX, 11).is_err());
        assert!(hyper_holds(DisorderLaw::Gaussian, 1.5, 2.0, A_MAX, 11).is_err());
    }

    #[test]
    fn gaussian_constants() {
        for p in [2.5, 3.0, 4.0] {
            let e = estimate_cp(DisorderLaw::Gaussian, p, 1e-5).unwrap();
            assert!((e.c_p - (p - 1.0).sqrt()).abs() < 1e-3, "p={p}: {}", e.c_p);
        }
        assert!(estimate_cp(DisorderLaw::Gaussian, 4.5, 1e-3).is_err());
    }

    #[test]
    fn constants_monotone_in_p() {
        for law in DisorderLaw::ALL {
            let c: Vec<f64> = [2.1, 2.5, 3.0, 4.0]
                .iter()
                .map(|&p| estimate_cp(law, p, 1e-5).unwrap().c_p)
                .collect();
            assert!(c.windows(2).all(|w| w[0] <= w[1]), "{law:?} {c:?}");
            assert!(c.iter().all(|&x| x >= 1.0));
        }
    }

    #[test]
    fn walsh_values_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Multilinear::random(5, 3, &mut rng);
        let v = m.values();
        for (sig, &val) in v.iter().enumerate() {
            let direct: f64 = m
                .coef
                .iter()
                .enumerate()
                .map(|(mask, c)| if (mask & sig).count_ones() % 2 == 1 { -c } else { *c })
                .sum();
            assert!((direct - val).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_bound_edge_cases() {
        // single order-1 term: ||xi||_p <= c ||xi||_2 with ||xi||_p = 1 for signs
        let mut single = Multilinear::zero(3);
        single.coef[0b010] = 2.0;
        let r = check_moment_bound(3.0, 1.0, &[single]);
        assert_eq!(r.satisfied, 1);
        let r = check_moment_bound(3.0, 1.5, &[Multilinear::zero(4)]);
        assert_eq!(r.satisfied, 1);
        assert_eq!(r.worst_ratio, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(verify_moment_bound(DisorderLaw::Gaussian, 3.0, 1.5, 1, &mut rng).is_err());
    }

    #[test]
    fn random_instances_satisfy_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [2.5, 3.0, 4.0] {
            let c = estimate_cp(DisorderLaw::Rademacher, p, 1e-4).unwrap().c_p;
            let r = verify_moment_bound(DisorderLaw::Rademacher, p, c, 100, &mut rng).unwrap();
            assert_eq!(r.satisfied, 100, "p={p} worst {}", r.worst_ratio);
        }
    }
}
