//! Simple random walk on Z^2: transition kernels, the expected overlap
//! `R_N`, and the two-replica overlap (sampling and exact MGF).

use rand::RngCore;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::sum::Neumaier;

/// Default cap on the number of stored kernel entries (8 bytes each).
pub const KERNEL_BUDGET: usize = 1 << 26;

/// `q_n(x)` for `n <= n_max`, `|x|_inf <= radius`, one parity class per `n`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    n_max: usize,
    radius: usize,
    slices: Vec<Vec<f64>>,
    lost: Vec<f64>,
}

impl KernelTable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Sites with `x1 + x2` of fixed parity have linear indices of that
    /// parity, so halving the index is injective within a class.
    fn index(&self, x: [i64; 2]) -> Option<usize> {
        let r = self.radius as i64;
        if x[0].abs() > r || x[1].abs() > r {
            return None;
        }
        let lin = (x[0] + r) as usize * self.side() + (x[1] + r) as usize;
        Some(lin / 2)
    }

    /// `q_n(x)`; zero off the parity class, outside the box or past `n_max`.
    pub fn get(&self, n: usize, x: [i64; 2]) -> f64 {
        if n > self.n_max || (n as i64 + x[0] + x[1]).rem_euclid(2) != 0 {
            return 0.0;
        }
        self.index(x).map_or(0.0, |i| self.slices[n][i])
    }

    /// Mass that left the box by time `n` (0 when `radius >= n`).
    pub fn lost_mass(&self, n: usize) -> f64 {
        self.lost[n]
    }

    pub fn total_mass(&self, n: usize) -> f64 {
        self.slices[n].iter().copied().collect::<Neumaier>().value()
    }

    /// CSV dump of one slice: `n,x1,x2,prob`.
    pub fn write_csv(&self, n: usize, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "n,x1,x2,prob")?;
        let r = self.radius as i64;
        for a in -r..=r {
            for b in -r..=r {
                if (n as i64 + a + b).rem_euclid(2) == 0 {
                    writeln!(w, "{n},{a},{b},{:.17e}", self.get(n, [a, b]))?;
                }
            }
        }
        Ok(())
    }
}

/// Builds `q_n` by `q_{n+1}(x) = (1/4) sum_{y ~ x} q_n(y)` on `|x|_inf <= radius`.
///
/// With `radius < n_max` the walk is absorbed at the boundary and the
/// absorbed mass is recorded; this must be requested explicitly.
pub fn build_kernel_table(n_max: usize, radius: usize, allow_truncation: bool) -> Result<KernelTable> {
    build_kernel_table_with_budget(n_max, radius, allow_truncation, KERNEL_BUDGET)
}

pub fn build_kernel_table_with_budget(
    n_max: usize,
    radius: usize,
    allow_truncation: bool,
    budget: usize,
) -> Result<KernelTable> {
    if radius < n_max && !allow_truncation {
        return domain(format!(
            "radius {radius} < n_max {n_max} truncates the walk; pass allow_truncation"
        ));
    }
    let side = 2 * radius + 1;
    let per_slice = (side * side).div_ceil(2);
    let entries = per_slice.saturating_mul(n_max + 1);
    if entries > budget {
        return Err(Error::Resource(format!(
            "kernel table needs {entries} entries, budget is {budget}"
        )));
    }
    let mut t = KernelTable {
        n_max,
        radius,
        slices: Vec::with_capacity(n_max + 1),
        lost: Vec::with_capacity(n_max + 1),
    };
    let r = radius as i64;
    let mut first = vec![0.0; per_slice];
    first[t.index([0, 0]).expect("origin in box")] = 1.0;
    t.slices.push(first);
    t.lost.push(0.0);
    for n in 1..=n_max {
        let prev = &t.slices[n - 1];
        let mut next = vec![0.0; per_slice];
        for a in -r..=r {
            for b in -r..=r {
                if (n as i64 + a + b).rem_euclid(2) != 0 {
                    continue;
                }
                let mut s = 0.0;
                for y in [[a + 1, b], [a - 1, b], [a, b + 1], [a, b - 1]] {
                    if let Some(i) = t.index(y) {
                        s += prev[i];
                    }
                }
                next[t.index([a, b]).unwrap()] = 0.25 * s;
            }
        }
        t.slices.push(next);
        let lost = (1.0 - t.total_mass(n)).max(0.0);
        t.lost.push(if radius >= n { 0.0 } else { lost });
    }
    Ok(t)
}

/// Return probabilities `q_{2n}(0)` for `n = 0..=n_max`.
///
/// In the rotated coordinates `x1 + x2`, `x1 - x2` the two components are
/// independent one-dimensional +-1 walks, so `q_{2n}(0)` is the square of
/// the one-dimensional return probability `p_n = binom(2n, n) / 4^n`, which
/// obeys `p_n = p_{n-1} (2n - 1) / (2n)`.
pub fn return_probabilities(n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut p = 1.0f64;
    out.push(1.0);
    for n in 1..=n_max {
        p *= (2 * n - 1) as f64 / (2 * n) as f64;
        out.push(p * p);
    }
    out
}

/// `R_N = sum_{n=1}^N q_{2n}(0)`.
pub fn expected_overlap(n: usize) -> f64 {
    return_probabilities(n)[1..].iter().copied().collect::<Neumaier>().value()
}

/// `R_n` for `n = 0..=n_max`.
pub fn expected_overlap_table(n_max: usize) -> Vec<f64> {
    let q = return_probabilities(n_max);
    let mut acc = Neumaier::new();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(0.0);
    for &x in &q[1..] {
        acc.add(x);
        out.push(acc.value());
    }
    out
}

/// `beta_N = beta_hat / sqrt(R_N)`.
pub fn beta_n(beta_hat: f64, n: usize) -> Result<f64> {
    if !(beta_hat > 0.0) || !beta_hat.is_finite() {
        return domain(format!("beta_hat must be positive, got {beta_hat}"));
    }
    if n == 0 {
        return domain("horizon N must be at least 1");
    }
    Ok(beta_hat / expected_overlap(n).sqrt())
}

/// Law of one step of `S - S'` for independent walks `S`, `S'`.
#[derive(Clone, Debug, Serialize)]
pub struct DifferenceStepLaw {
    pub steps: Vec<([i64; 2], f64)>,
}

impl DifferenceStepLaw {
    pub fn simple() -> Self {
        let e = [[1, 0], [-1, 0], [0, 1], [0, -1]];
        let mut steps: Vec<([i64; 2], f64)> = Vec::new();
        for a in e {
            for b in e {
                let d = [a[0] - b[0], a[1] - b[1]];
                match steps.iter_mut().find(|(s, _)| *s == d) {
                    Some((_, p)) => *p += 1.0 / 16.0,
                    None => steps.push((d, 1.0 / 16.0)),
                }
            }
        }
        steps.sort_by_key(|(s, _)| (s[0], s[1]));
        DifferenceStepLaw { steps }
    }

    pub fn prob(&self, d: [i64; 2]) -> f64 {
        self.steps.iter().find(|(s, _)| *s == d).map_or(0.0, |(_, p)| *p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OverlapSample {
    pub n: usize,
    pub value: usize,
}

/// Number of times `1 <= k <= n` at which two independent walks from the
/// origin meet.
pub fn sample_overlap(n: usize, rng: &mut impl RngCore) -> OverlapSample {
    // rotated coordinates of S - S'; each step moves each by -2, 0 or 2
    let (mut a, mut b) = (0i64, 0i64);
    let mut count = 0;
    let mut bits = 0u64;
    for k in 0..n {
        if k % 16 == 0 {
            bits = rng.next_u64();
        }
        let s = bits & 15;
        bits >>= 4;
        a += (s & 1) as i64 - ((s >> 1) & 1) as i64;
        b += ((s >> 2) & 1) as i64 - ((s >> 3) & 1) as i64;
        if a == 0 && b == 0 {
            count += 1;
        }
    }
    OverlapSample { n, value: count }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapMgf {
    pub value: f64,
    /// Weighted mass that left the box; already included in `value`,
    /// counted as if it never returned to the origin.
    pub lost_mass: f64,
}

/// Radius used for exact DPs when none is given.
pub fn default_radius(n: usize) -> usize {
    if n <= 512 {
        n
    } else {
        let nf = n as f64;
        (4.0 * (nf * nf.ln().max(1.0)).sqrt()).ceil() as usize
    }
}

/// `E[exp(gamma L_N)]` by forward DP over the difference walk.
///
/// The walk is tracked in halved rotated coordinates, where it is a pair
/// of independent lazy walks with steps -1, 0, 1 (probabilities 1/4, 1/2,
/// 1/4), on `|a|, |b| <= radius`.
pub fn overlap_mgf_exact(n: usize, gamma: f64, radius: usize) -> Result<OverlapMgf> {
    if !gamma.is_finite() {
        return domain("gamma must be finite");
    }
    let r = radius.min(n);
    let side = 2 * r + 3;
    let c = r + 1; // storage index of the origin
    let mut x = vec![0.0f64; side * side];
    let mut y = vec![0.0f64; side * side];
    x[c * side + c] = 1.0;
    let eg = gamma.exp();
    let mut lost = Neumaier::new();
    let mut h = 0usize;
    for _ in 0..n {
        let h2 = (h + 1).min(r);
        let before = total(&x, side, c, h);
        // along b
        for a in c - h..=c + h {
            let row = &x[a * side..(a + 1) * side];
            let out = &mut y[a * side..(a + 1) * side];
            for b in c - h2..=c + h2 {
                out[b] = 0.25 * (row[b - 1] + row[b + 1]) + 0.5 * row[b];
            }
        }
        // along a
        for a in c - h2..=c + h2 {
            for b in c - h2..=c + h2 {
                x[a * side + b] =
                    0.25 * (y[(a - 1) * side + b] + y[(a + 1) * side + b]) + 0.5 * y[a * side + b];
            }
        }
        h = h2;
        let after = total(&x, side, c, h);
        lost.add((before - after).max(0.0));
        x[c * side + c] *= eg;
        if x[c * side + c] > 1e300 {
            return Err(Error::Overflow(format!(
                "overlap MGF DP overflowed at gamma = {gamma}"
            )));
        }
    }
    let value = total(&x, side, c, h) + lost.value();
    if !value.is_finite() {
        return Err(Error::Overflow(format!("overlap MGF is not finite at gamma = {gamma}")));
    }
    Ok(OverlapMgf {
        value,
        lost_mass: lost.value(),
    })
}

fn total(x: &[f64], side: usize, c: usize, h: usize) -> f64 {
    let mut acc = Neumaier::new();
    for a in c - h..=c + h {
        acc.add(x[a * side + c - h..=a * side + c + h].iter().sum());
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_step_values() {
        let t = build_kernel_table(2, 2, false).unwrap();
        assert_eq!(t.get(1, [1, 0]), 0.25);
        assert_eq!(t.get(1, [0, 0]), 0.0);
        assert_eq!(t.get(2, [0, 0]), 0.25);
        assert_eq!(t.get(2, [1, 1]), 0.125);
        assert_eq!(t.get(2, [2, 0]), 0.0625);
    }

    #[test]
    fn truncation_needs_consent() {
        assert!(build_kernel_table(10, 5, false).is_err());
        let t = build_kernel_table(10, 5, true).unwrap();
        assert!(t.lost_mass(10) > 0.0);
        assert_eq!(t.lost_mass(5), 0.0);
        assert!((t.total_mass(10) + t.lost_mass(10) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(
            build_kernel_table_with_budget(100, 100, false, 1000),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn table_properties_up_to_64() {
        let t = build_kernel_table(64, 64, false).unwrap();
        for n in 0..=64usize {
            assert!((t.total_mass(n) - 1.0).abs() < 1e-12, "mass at {n}");
            for a in -12i64..=12 {
                for b in -12i64..=12 {
                    let q = t.get(n, [a, b]);
                    if (n as i64 + a + b) % 2 != 0 {
                        assert_eq!(q, 0.0);
                    }
                    for s in [[-a, -b], [b, a], [-a, b], [a, -b], [-b, a]] {
                        assert!((q - t.get(n, s)).abs() <= 1e-15 * q);
                    }
                }
            }
        }
    }

    #[test]
    fn return_probabilities_match_table() {
        let t = build_kernel_table(40, 40, false).unwrap();
        let q = return_probabilities(20);
        for n in 0..=20 {
            assert!((q[n] - t.get(2 * n, [0, 0])).abs() < 1e-15, "{n}");
        }
    }

    #[test]
    fn overlap_small_values() {
        assert_eq!(expected_overlap(1), 0.25);
        assert_eq!(expected_overlap(2), 0.25 + 36.0 / 256.0);
        assert_eq!(beta_n(1.0, 1).unwrap(), 2.0);
        assert!(beta_n(0.0, 10).is_err());
        assert!(beta_n(-1.0, 10).is_err());
        assert!(beta_n(0.5, 0).is_err());
    }

    #[test]
    fn overlap_is_logarithmic() {
        let r = expected_overlap(100_000);
        let l = (100_000f64).ln() / std::f64::consts::PI;
        assert!((r / l - 1.0).abs() < 0.15);
        let tab = expected_overlap_table(100_000);
        for n in [1usize, 10, 100, 1000, 10_000, 100_000] {
            assert!((tab[n] - (n as f64).ln() / std::f64::consts::PI).abs() <= 1.0);
        }
        assert!(tab.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn beta_n_asymptotic_form() {
        let n = 10_000;
        let b = beta_n(0.5, n).unwrap();
        let asym = 0.5 * (std::f64::consts::PI / (n as f64).ln()).sqrt();
        assert!((b / asym - 1.0).abs() < 0.1);
    }

    #[test]
    fn difference_law() {
        let d = DifferenceStepLaw::simple();
        assert_eq!(d.steps.len(), 9);
        assert!((d.steps.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(d.prob([0, 0]), 0.25);
        assert_eq!(d.prob([2, 0]), 1.0 / 16.0);
        assert_eq!(d.prob([1, -1]), 0.125);
        assert_eq!(d.prob([0, -2]), d.prob([2, 0]));
    }

    #[test]
    fn sampler_edge_cases_and_one_step_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_overlap(0, &mut rng).value, 0);
        let m = 200_000;
        let hits = (0..m).filter(|_| sample_overlap(1, &mut rng).value == 1).count();
        let p = hits as f64 / m as f64;
        assert!((p - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / m as f64).sqrt());
        for _ in 0..100 {
            let s = sample_overlap(50, &mut rng);
            assert!(s.value <= 50);
        }
    }

    #[test]
    fn mgf_small_cases() {
        assert!((overlap_mgf_exact(300, 0.0, 300).unwrap().value - 1.0).abs() < 1e-12);
        let g = 0.7f64;
        let v = overlap_mgf_exact(1, g, 1).unwrap().value;
        assert!((v - (3.0 + g.exp()) / 4.0).abs() < 1e-15);
        // two steps: L_2 law from the table: P(X_1=0)=1/4, P(X_2=0)=q_4(0)
        let q = return_probabilities(2);
        let p11 = 0.25 * 0.25;
        let p10 = 0.25 - p11;
        let p01 = q[2] - p11;
        let p00 = 1.0 - p11 - p10 - p01;
        let want = p00 + (p10 + p01) * g.exp() + p11 * (2.0 * g).exp();
        assert!((overlap_mgf_exact(2, g, 2).unwrap().value - want).abs() < 1e-15);
    }

    #[test]
    fn mgf_escape_is_reported() {
        let full = overlap_mgf_exact(200, 0.05, 200).unwrap();
        let cut = overlap_mgf_exact(200, 0.05, 10).unwrap();
        assert!(full.lost_mass < 1e-12);
        assert!(cut.lost_mass > 0.0);
        assert!((overlap_mgf_exact(200, 0.0, 10).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_radius_rule() {
        assert_eq!(default_radius(512), 512);
        assert_eq!(default_radius(1024), (4.0 * (1024.0 * 1024f64.ln()).sqrt()).ceil() as usize);
    }
}
