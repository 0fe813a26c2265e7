//! Transfer-matrix engine on one parity class of Z^2.
//!
//! Sites are stored in rotated coordinates `u = x1 + x2`, `v = x1 - x2`.
//! At each time only the sites of the reachable parity are kept, on a
//! square `u = cu - h + 2i`, `v = cv - h + 2j`, `0 <= i, j <= h`. One walk
//! step maps compact `(i, j)` to a 2x2 block of the previous slice, so a
//! step is a row sum followed by a pairwise column sum, done in place.
//! Consecutive half-widths differ by exactly one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::sum::Neumaier;

/// Source of the per-site factors applied after a walk step.
pub trait RowWeights {
    /// Writes `w(n, u, v0 + 2j) / 4` into `out`; returns `false` when all
    /// factors are exactly `1/4` (nothing is written then).
    fn fill(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) -> bool;
}

/// Plain walk step.
pub struct NoDisorder;

impl RowWeights for NoDisorder {
    fn fill(&self, _: i64, _: i64, _: i64, _: &mut [f64]) -> bool {
        false
    }
}

const RESCALE_HI: f64 = 1e100;
const RESCALE_LO: f64 = 1e-100;

#[derive(Clone, Debug)]
pub struct Grid {
    cap: usize,
    stride: usize,
    data: Vec<f64>,
    h: usize,
    cu: i64,
    cv: i64,
    log_scale: f64,
    tmp: Vec<f64>,
    wbuf: Vec<f64>,
}

impl Grid {
    /// Grid able to hold half-widths up to `cap`.
    pub fn new(cap: usize) -> Self {
        let stride = cap + 3;
        Grid {
            cap,
            stride,
            data: vec![0.0; stride * stride],
            h: 0,
            cu: 0,
            cv: 0,
            log_scale: 0.0,
            tmp: vec![0.0; stride],
            wbuf: vec![0.0; stride],
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn half_width(&self) -> usize {
        self.h
    }

    pub fn center(&self) -> (i64, i64) {
        (self.cu, self.cv)
    }

    /// Values are `stored * exp(log_scale)`.
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        (i + 1) * self.stride + j + 1
    }

    fn clear_box(&mut self) {
        let h = self.h;
        for i in 0..=h + 1 {
            let s = (i + 1) * self.stride;
            self.data[s..s + h + 3].fill(0.0);
        }
    }

    /// Point mass at rotated `(u, v)`.
    pub fn reset_point(&mut self, u: i64, v: i64) {
        self.clear_box();
        self.h = 0;
        self.cu = u;
        self.cv = v;
        self.log_scale = 0.0;
        let k = self.at(0, 0);
        self.data[k] = 1.0;
    }

    /// Constant `value` on the square of half-width `h` around `(cu, cv)`.
    pub fn reset_box(&mut self, cu: i64, cv: i64, h: usize, value: f64) {
        assert!(h <= self.cap, "half-width {h} above capacity {}", self.cap);
        self.clear_box();
        self.h = h;
        self.cu = cu;
        self.cv = cv;
        self.log_scale = 0.0;
        for i in 0..=h {
            let k = self.at(i, 0);
            self.data[k..k + h + 1].fill(value);
        }
    }

    /// Rotated coordinates of compact `(i, j)`.
    pub fn coords(&self, i: usize, j: usize) -> (i64, i64) {
        let h = self.h as i64;
        (self.cu - h + 2 * i as i64, self.cv - h + 2 * j as i64)
    }

    /// Compact index of rotated `(u, v)` if it lies on the current slice.
    pub fn index_of(&self, u: i64, v: i64) -> Option<(usize, usize)> {
        let h = self.h as i64;
        let (a, b) = (u - self.cu + h, v - self.cv + h);
        if a < 0 || b < 0 || a % 2 != 0 || b % 2 != 0 || a > 2 * h || b > 2 * h {
            return None;
        }
        Some((a as usize / 2, b as usize / 2))
    }

    /// Stored value (multiply by `exp(log_scale)` for the true one).
    pub fn stored(&self, i: usize, j: usize) -> f64 {
        self.data[self.at(i, j)]
    }

    /// True value at rotated `(u, v)`; zero off the slice.
    pub fn value(&self, u: i64, v: i64) -> f64 {
        self.index_of(u, v)
            .map_or(0.0, |(i, j)| self.stored(i, j) * self.log_scale.exp())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.at(i, 0);
        &self.data[k..k + self.h + 1]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let k = self.at(i, 0);
        let h = self.h;
        &mut self.data[k..k + h + 1]
    }

    /// `sum` of stored values; the true total is `sum * exp(log_scale)`.
    pub fn stored_total(&self) -> f64 {
        let mut acc = Neumaier::new();
        for i in 0..=self.h {
            acc.add(self.row(i).iter().sum());
        }
        acc.value()
    }

    /// `log` of the total mass.
    pub fn log_total(&self) -> f64 {
        self.stored_total().ln() + self.log_scale
    }

    /// One walk step to half-width `h_new` (which must be `h +- 1`),
    /// followed by the factors of `w` at time `n`.
    pub fn step(&mut self, h_new: usize, n: i64, w: &dyn RowWeights) {
        let h_old = self.h;
        assert!(
            h_new + 1 == h_old || h_new == h_old + 1,
            "half-width must change by one ({h_old} -> {h_new})"
        );
        assert!(h_new <= self.cap, "half-width {h_new} above capacity {}", self.cap);
        let grow = h_new > h_old;
        let m = h_new + 1;
        let stride = self.stride;
        let width = h_old + 3;
        // new compact (i, j) reads old compact rows/cols (i + s, i + s + 1),
        // s = -1 when growing and 0 when shrinking
        let off = if grow { 0 } else { 1 };
        let hn = h_new as i64;
        let v0 = self.cv - hn;
        let cu = self.cu;
        let mut row_max = 0.0f64;
        let body = |i: usize, data: &mut [f64], tmp: &mut [f64], wbuf: &mut [f64]| {
            let r0 = (i + off) * stride;
            let (a, b) = data.split_at_mut(r0 + stride);
            let o0 = &a[r0..r0 + width];
            let o1 = &b[..width];
            for ((t, x), y) in tmp[..width].iter_mut().zip(o0).zip(o1) {
                *t = x + y;
            }
            let u = cu - hn + 2 * i as i64;
            let weighted = w.fill(n, u, v0, &mut wbuf[..m]);
            let dst = (i + 1) * stride + 1;
            let out = &mut data[dst..dst + m];
            let t0 = &tmp[off..off + m];
            let t1 = &tmp[off + 1..off + 1 + m];
            let mut mx = 0.0f64;
            if weighted {
                for (((o, a), b), c) in out.iter_mut().zip(t0).zip(t1).zip(&wbuf[..m]) {
                    *o = (a + b) * c;
                    mx = mx.max(*o);
                }
            } else {
                for ((o, a), b) in out.iter_mut().zip(t0).zip(t1) {
                    *o = (a + b) * 0.25;
                    mx = mx.max(*o);
                }
            }
            mx
        };
        if grow {
            for i in (0..m).rev() {
                row_max = row_max.max(body(i, &mut self.data, &mut self.tmp, &mut self.wbuf));
            }
        } else {
            for i in 0..m {
                row_max = row_max.max(body(i, &mut self.data, &mut self.tmp, &mut self.wbuf));
            }
            // stale compact row h_old and column h_old
            let s = (h_old + 1) * stride;
            self.data[s..s + h_old + 2].fill(0.0);
            for i in 0..m {
                self.data[(i + 1) * stride + h_old + 1] = 0.0;
            }
        }
        self.h = h_new;
        if row_max > RESCALE_HI || (row_max < RESCALE_LO && row_max > 0.0) {
            self.rescale(row_max);
        }
    }

    fn rescale(&mut self, max: f64) {
        // power of two so the rescaling is exact
        let e = max.log2().round();
        let f = (-e).exp2();
        for i in 0..=self.h {
            for x in self.row_mut(i) {
                *x *= f;
            }
        }
        self.log_scale += e * std::f64::consts::LN_2;
    }
}

/// Half-widths `h_0 = 0, h_1, ..., h_len` following
/// `min(t, ceil(c sqrt t))` within one unit.
pub fn growth_schedule(len: usize, c: f64) -> Vec<usize> {
    let target = |t: usize| ((c * (t as f64).sqrt()).ceil() as usize).min(t);
    let mut h = Vec::with_capacity(len + 1);
    h.push(0usize);
    for t in 1..=len {
        let prev = h[t - 1];
        h.push(if prev < target(t) { prev + 1 } else { prev - 1 });
    }
    h
}

/// Probability that a two-dimensional walk from the centre leaves the
/// boxes of `sched` (offset by `base`) before the end. The two rotated
/// coordinates are independent one-dimensional walks killed outside the
/// same interval, so this is `1 - p^2` with `p` the one-dimensional
/// survival probability.
pub fn lost_mass(sched: &[usize], base: usize) -> f64 {
    let cap = base + sched.iter().copied().max().unwrap_or(0);
    let mut a = vec![0.0f64; cap + 3];
    // start: middle site of the base square's centre row
    let h0 = base + sched[0];
    a[1 + h0 / 2] = 1.0;
    let mut h = h0;
    for &g in &sched[1..] {
        let hn = base + g;
        let grow = hn > h;
        let off = if grow { 0 } else { 1 };
        if grow {
            for i in (0..=hn).rev() {
                a[i + 1] = 0.5 * (a[i + off] + a[i + off + 1]);
            }
        } else {
            for i in 0..=hn {
                a[i + 1] = 0.5 * (a[i + off] + a[i + off + 1]);
            }
            a[h + 1] = 0.0;
        }
        h = hn;
    }
    let p = a[1..=h + 1].iter().copied().collect::<Neumaier>().value();
    (1.0 - p * p).max(0.0)
}

/// Default bound on the mass lost at the box boundary (at beta = 0).
pub const LOST_MASS_TOL: f64 = 1e-9;

/// Box schedule for one horizon together with its boundary loss.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub h: Vec<usize>,
    pub lost: f64,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.h.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.h.len() == 1
    }

    pub fn max(&self) -> usize {
        self.h.iter().copied().max().unwrap_or(0)
    }
}

/// Schedule of length `len` with the smallest constant whose lost mass is
/// at most `tol`, cached per `(len, tol)`.
pub fn schedule_for(len: usize, tol: f64) -> Arc<Schedule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Schedule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, tol.to_bits());
    if let Some(s) = cache.lock().expect("schedule cache").get(&key) {
        return Arc::clone(s);
    }
    let lost_at = |c: f64| lost_mass(&growth_schedule(len, c), 0);
    let c = if lost_at(2.0) <= tol {
        2.0
    } else if lost_at(16.0) > tol {
        f64::INFINITY
    } else {
        let (mut lo, mut hi) = (2.0f64, 16.0f64);
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if lost_at(mid) <= tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let h = growth_schedule(len, c);
    let lost = lost_mass(&h, 0);
    let sched = Arc::new(Schedule { h, lost });
    cache
        .lock()
        .expect("schedule cache")
        .insert(key, Arc::clone(&sched));
    sched
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk_kernels::build_kernel_table;

    struct Const(f64);
    impl RowWeights for Const {
        fn fill(&self, _: i64, _: i64, _: i64, out: &mut [f64]) -> bool {
            out.fill(self.0 * 0.25);
            true
        }
    }

    fn to_xy(u: i64, v: i64) -> [i64; 2] {
        [(u + v) / 2, (u - v) / 2]
    }

    #[test]
    fn forward_steps_reproduce_kernel() {
        let n = 30;
        let table = build_kernel_table(n, n, false).unwrap();
        let mut g = Grid::new(n + 2);
        g.reset_point(0, 0);
        for t in 1..=n {
            g.step(t, t as i64, &NoDisorder);
            for i in 0..=t {
                for j in 0..=t {
                    let (u, v) = g.coords(i, j);
                    assert!((g.stored(i, j) - table.get(t, to_xy(u, v))).abs() < 1e-16);
                }
            }
        }
        assert!((g.stored_total() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn shrinking_keeps_outside_zero() {
        let mut g = Grid::new(12);
        g.reset_point(3, -1);
        let sched = [0usize, 1, 2, 3, 2, 3, 2, 1, 2, 3, 4, 3];
        for (t, &h) in sched.iter().enumerate().skip(1) {
            g.step(h, t as i64, &NoDisorder);
            let hh = g.half_width();
            for i in 0..g.stride {
                for j in 0..g.stride {
                    let inside = (1..=hh + 1).contains(&i) && (1..=hh + 1).contains(&j);
                    if !inside {
                        assert_eq!(g.data[i * g.stride + j], 0.0, "t={t} ({i},{j})");
                    }
                }
            }
        }
        // truncated walk: compare with a table absorbed on the same squares
        let total = g.stored_total();
        assert!(total < 1.0 && total > 0.0);
    }

    #[test]
    fn lost_mass_matches_grid() {
        let sched = growth_schedule(400, 3.0);
        let mut g = Grid::new(*sched.iter().max().unwrap());
        g.reset_point(0, 0);
        for (t, &h) in sched.iter().enumerate().skip(1) {
            g.step(h, t as i64, &NoDisorder);
        }
        let lost = lost_mass(&sched, 0);
        assert!(lost > 1e-6);
        assert!((1.0 - g.stored_total() - lost).abs() < 1e-13);
    }

    #[test]
    fn schedule_meets_tolerance() {
        for n in [10usize, 100, 1000, 5000] {
            let sc = schedule_for(n, LOST_MASS_TOL);
            let s = &sc.h;
            assert_eq!(sc.len(), n);
            assert!(sc.lost <= LOST_MASS_TOL);
            assert_eq!(sc.lost, lost_mass(s, 0));
            assert!(s.windows(2).all(|w| w[0].abs_diff(w[1]) == 1));
            assert!(s.iter().enumerate().all(|(t, &h)| h <= t && (h + t) % 2 == 0));
        }
        let hmax = schedule_for(4096, LOST_MASS_TOL).max() as f64;
        assert!(hmax < 7.5 * 64.0 && hmax > 5.0 * 64.0, "{hmax}");
    }

    #[test]
    fn rescaling_is_exact_and_tracked() {
        let mut g = Grid::new(60);
        g.reset_point(0, 0);
        let w = Const(1e9);
        for t in 1..=30 {
            g.step(t, t as i64, &w);
        }
        let want = 30.0 * 1e9f64.ln();
        assert!((g.log_total() - want).abs() < 1e-9, "{}", g.log_total());
        assert!(g.log_scale() > 0.0);
        let w = Const(1e-9);
        for t in 31..=60 {
            g.step(t, t as i64, &w);
        }
        assert!(g.log_total().abs() < 1e-9);
    }

    #[test]
    fn index_roundtrip() {
        let mut g = Grid::new(8);
        g.reset_box(5, 1, 4, 1.0);
        for i in 0..=4 {
            for j in 0..=4 {
                let (u, v) = g.coords(i, j);
                assert_eq!(g.index_of(u, v), Some((i, j)));
            }
        }
        assert_eq!(g.index_of(5, 2), None);
        assert_eq!(g.index_of(5 + 6, 1), None);
        assert_eq!(g.value(5, 1), 1.0);
    }
}
