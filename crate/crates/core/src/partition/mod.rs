//! Windowed point-to-plane partition functions by transfer matrices.
//!
//! `Z_Λ(x) = E_x[exp(sum_{(n, S_n) in Λ} (beta omega(n, S_n) - lambda(beta)))]`
//! over `N` steps of the simple random walk. Forward runs start from a
//! point mass; [`sweep_log_z`] runs the recursion backwards from the
//! final slice and yields `Z(x)` for every start in a square at once.

pub mod grid;
pub mod window;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::disorder::{log_mgf, Environment};
use crate::error::{domain, Error, Result};
use crate::limit_theory::TestFunction;
use crate::sum::Neumaier;

pub use grid::{Grid, NoDisorder, RowWeights, Schedule, LOST_MASS_TOL};
pub use window::{radius_a, scale_a, time_a, time_bgeq, Window, WindowSpec, WindowWeights};

use grid::schedule_for;

/// `Z` of one start point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionValue {
    pub value: f64,
    pub log_value: f64,
    pub window: WindowSpec,
    pub start: [i64; 2],
    /// Mass the truncated box loses at `beta = 0` (upper bound).
    pub lost_mass: f64,
}

/// Forward time slice `W_n(y)` started from a point.
#[derive(Clone, Debug)]
pub struct TransferState {
    n: i64,
    t0: i64,
    grid: Grid,
    sched: Arc<Schedule>,
}

fn check_lost(s: &Schedule) -> Result<()> {
    if s.lost > LOST_MASS_TOL {
        return Err(Error::Numerical(format!(
            "box truncation loses {:.3e} of the walk mass",
            s.lost
        )));
    }
    Ok(())
}

fn to_uv(x: [i64; 2]) -> (i64, i64) {
    (x[0] + x[1], x[0] - x[1])
}

fn to_x(u: i64, v: i64) -> [i64; 2] {
    [(u + v) / 2, (u - v) / 2]
}

impl TransferState {
    /// `W_{t0} = delta_x`, able to run `steps` steps.
    pub fn new(t0: i64, x: [i64; 2], steps: usize) -> Result<Self> {
        let sched = schedule_for(steps, LOST_MASS_TOL);
        check_lost(&sched)?;
        let mut grid = Grid::new(sched.max());
        let (u, v) = to_uv(x);
        grid.reset_point(u, v);
        Ok(TransferState {
            n: t0,
            t0,
            grid,
            sched,
        })
    }

    pub fn time(&self) -> i64 {
        self.n
    }

    pub fn steps_left(&self) -> usize {
        self.sched.len() - (self.n - self.t0) as usize
    }

    /// One step to time `n + 1` with the factors of `w` at that time.
    pub fn advance(&mut self, w: &dyn RowWeights) -> Result<()> {
        let k = (self.n - self.t0) as usize;
        if k >= self.sched.len() {
            return domain("transfer state is past its horizon");
        }
        self.n += 1;
        self.grid.step(self.sched.h[k + 1], self.n, w);
        Ok(())
    }

    pub fn log_mass(&self) -> f64 {
        self.grid.log_total()
    }

    pub fn value_at(&self, y: [i64; 2]) -> f64 {
        let (u, v) = to_uv(y);
        self.grid.value(u, v)
    }

    pub fn lost_mass(&self) -> f64 {
        self.sched.lost
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

fn quarter_weigher(env: &Environment, beta: f64) -> Result<crate::disorder::Weigher> {
    let lam = log_mgf(env.law, beta)?;
    Ok(env.weigher(beta, lam + std::f64::consts::LN_2 * 2.0))
}

/// `Z_Λ(x)` for the window `window` (horizon taken from the window).
pub fn compute_z(env: &Environment, beta: f64, window: &WindowSpec, x: [i64; 2]) -> Result<PartitionValue> {
    window.validate()?;
    let n = window.horizon();
    let w = window.resolve();
    let weights = WindowWeights::new(quarter_weigher(env, beta)?, &w);
    // after the last window time only the walk moves, which conserves mass
    let last = w.last_time().min(n as i64) as usize;
    let mut st = TransferState::new(0, x, last)?;
    for _ in 0..last {
        st.advance(&weights)?;
    }
    let log_value = st.log_mass();
    Ok(PartitionValue {
        value: log_value.exp(),
        log_value,
        window: *window,
        start: x,
        lost_mass: st.lost_mass(),
    })
}

/// `Z = Z^A + Ẑ^A` from one environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    pub z: PartitionValue,
    pub z_a: PartitionValue,
    pub z_hat: f64,
}

pub fn decompose_a(env: &Environment, beta: f64, x: [i64; 2], n: usize, gamma: f64) -> Result<Decomposition> {
    let z = compute_z(env, beta, &WindowSpec::Full { n }, x)?;
    let z_a = compute_z(env, beta, &WindowSpec::A { n, x, gamma }, x)?;
    Ok(Decomposition {
        z,
        z_a,
        z_hat: z.value - z_a.value,
    })
}

/// `r = Ẑ^A / Z^A` and `O_N = log Z - log Z^A - r`.
pub fn remainder_ratio_and_o(d: &Decomposition) -> (f64, f64) {
    let r = d.z_hat / d.z_a.value;
    (r, d.z.log_value - d.z_a.log_value - r)
}

/// Same quantities from `log Z` and `log Z^A` directly.
pub fn ratio_and_o_from_logs(log_z: f64, log_z_a: f64) -> (f64, f64) {
    let r = (log_z - log_z_a).exp_m1();
    (r, log_z - log_z_a - r)
}

/// Point-to-point partition function: sum over chaos sets inside `A^x`
/// whose last point is `(t, w)`, i.e.
/// `E_x[prod_{n<t, (n,S_n) in A} f ; S_t = w] * (f(t, w) - 1)`.
pub fn point_to_point_z(
    env: &Environment,
    beta: f64,
    x: [i64; 2],
    (t, w): (i64, [i64; 2]),
    gamma: f64,
    n: usize,
) -> Result<f64> {
    if t == 0 && w == x {
        return Ok(1.0);
    }
    let spec = WindowSpec::A { n, x, gamma };
    spec.validate()?;
    let win = spec.resolve();
    if !win.contains(t, w) {
        return domain(format!("({t}, {w:?}) is outside the A window of {x:?}"));
    }
    let weights = WindowWeights::new(quarter_weigher(env, beta)?, &win);
    let steps = t as usize;
    let mut st = TransferState::new(0, x, steps)?;
    for _ in 1..steps {
        st.advance(&weights)?;
    }
    st.advance(&NoDisorder)?;
    let lam = log_mgf(env.law, beta)?;
    let sxi = (beta * env.omega(t, w) - lam).exp_m1();
    Ok(st.value_at(w) * sxi)
}

/// Partition function of the walk started at `(r, z)` with disorder on
/// times `r+1..=N`.
pub fn point_to_plane_z(env: &Environment, beta: f64, (r, z): (i64, [i64; 2]), n: usize) -> Result<PartitionValue> {
    if r < 0 || r > n as i64 {
        return domain(format!("start time {r} outside 0..={n}"));
    }
    let steps = n - r as usize;
    let full = WindowSpec::Full { n }.resolve();
    let weights = WindowWeights::new(quarter_weigher(env, beta)?, &full);
    let mut st = TransferState::new(r, z, steps)?;
    for _ in 0..steps {
        st.advance(&weights)?;
    }
    let log_value = st.log_mass();
    Ok(PartitionValue {
        value: log_value.exp(),
        log_value,
        window: WindowSpec::Full { n },
        start: z,
        lost_mass: st.lost_mass(),
    })
}

/// Parity class of start points: `x1 + x2` even or odd.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// `log Z(x)` on a square of start points of one parity.
#[derive(Clone, Debug)]
pub struct SweepField {
    pub parity: Parity,
    /// Rotated half-width of the square of starts.
    pub h: usize,
    /// Row-major `(h+1)^2`; entry `(i, j)` belongs to `u = -h + 2i`,
    /// `v = -h + 2j`.
    pub log_z: Vec<f64>,
    pub lost_mass: f64,
}

impl SweepField {
    pub fn site(&self, i: usize, j: usize) -> [i64; 2] {
        let h = self.h as i64;
        to_x(-h + 2 * i as i64, -h + 2 * j as i64)
    }

    /// `(x, log Z(x))` for every start.
    pub fn iter(&self) -> impl Iterator<Item = ([i64; 2], f64)> + '_ {
        let m = self.h + 1;
        self.log_z
            .iter()
            .enumerate()
            .map(move |(k, &l)| (self.site(k / m, k % m), l))
    }
}

/// Smallest half-width of the right parity whose square contains every
/// `x` with `|x|_2 <= radius`.
pub fn sweep_half_width(radius: f64, parity: Parity) -> usize {
    // |u|, |v| <= sqrt(2) |x|
    let need = (radius * std::f64::consts::SQRT_2).floor().max(0.0) as usize;
    let want = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    if need % 2 == want {
        need
    } else {
        need + 1
    }
}

/// Backward recursion `V_{N+1} = 1`, `V_n = f_n P V_{n+1}`, `Z = P V_1`
/// for all starts `x` of one parity with `|u|, |v| <= h`.
/// Only translation-invariant windows are accepted.
pub fn sweep_log_z(env: &Environment, beta: f64, window: &WindowSpec, parity: Parity, h: usize) -> Result<SweepField> {
    window.validate()?;
    if !window.is_translation_invariant() {
        return domain(format!("window {} depends on the start point", window.name()));
    }
    match (parity, h % 2) {
        (Parity::Even, 0) | (Parity::Odd, 1) => {}
        _ => return domain("half-width parity does not match the class"),
    }
    let n = window.horizon();
    let sched = schedule_for(n + 1, LOST_MASS_TOL);
    check_lost(&sched)?;
    let win = window.resolve();
    let weights = WindowWeights::new(quarter_weigher(env, beta)?, &win);
    let mut grid = Grid::new(h + sched.max());
    // time n + 1 - k carries half-width h + sched[k]
    grid.reset_box(0, 0, h + sched.h[n + 1], 1.0);
    for t in (1..=n).rev() {
        grid.step(h + sched.h[t], t as i64, &weights);
    }
    grid.step(h, 0, &NoDisorder);
    let ls = grid.log_scale();
    let mut log_z = Vec::with_capacity((h + 1) * (h + 1));
    for i in 0..=h {
        log_z.extend(grid.row(i).iter().map(|&z| z.ln() + ls));
    }
    Ok(SweepField {
        parity,
        h,
        log_z,
        lost_mass: sched.lost,
    })
}

/// `(1/N) sum_x phi(x / sqrt N) g(log Z(x))` over the starts of a sweep.
pub fn pair_with(field: &SweepField, phi: &TestFunction, n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let sq = (n as f64).sqrt();
    let mut acc = Neumaier::new();
    for (x, l) in field.iter() {
        let w = phi.eval([x[0] as f64 / sq, x[1] as f64 / sq]);
        if w != 0.0 {
            acc.add(w * g(l));
        }
    }
    acc.value() / n as f64
}

/// Uncentered `(1/N) sum_x log Z_{floor(tN)}(x) phi(x / sqrt N)` for one
/// environment, from one backward sweep per parity class.
pub fn log_field_pairing(env: &Environment, beta: f64, phi: &TestFunction, n: usize, t: f64) -> Result<f64> {
    phi.validate()?;
    if phi.is_zero() {
        return Ok(0.0);
    }
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("field time {t} must be positive"));
    }
    let horizon = (t * n as f64).floor() as usize;
    if horizon == 0 {
        return domain("field horizon floor(tN) is zero");
    }
    let radius = phi.support_radius() * (n as f64).sqrt();
    let mut total = 0.0;
    for parity in [Parity::Even, Parity::Odd] {
        let h = sweep_half_width(radius, parity);
        let f = sweep_log_z(env, beta, &WindowSpec::Full { n: horizon }, parity, h)?;
        total += pair_with(&f, phi, n, |l| l);
    }
    Ok(total)
}

/// `<H_N, phi>` per replica: raw pairings centered by their replica mean
/// and divided by `beta_N`.
pub fn averaged_log_field(raw: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return domain("field normalization needs beta > 0");
    }
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let m = raw.iter().copied().collect::<Neumaier>().value() / raw.len() as f64;
    Ok(raw.iter().map(|r| (r - m) / beta).collect())
}
