//! Space-time windows restricting where disorder is sampled.

use serde::{Deserialize, Serialize};

use crate::disorder::Weigher;
use crate::error::{domain, Result};

use super::grid::RowWeights;

/// `a_N = (log N)^{-(1 - gamma)}`.
pub fn scale_a(n: usize, gamma: f64) -> f64 {
    (n as f64).ln().powf(-(1.0 - gamma))
}

/// Last time of the A and C windows: `floor(N^{1 - a_N})`.
pub fn time_a(n: usize, gamma: f64) -> i64 {
    let t = (n as f64).powf(1.0 - scale_a(n, gamma));
    if t.is_finite() {
        (t.floor() as i64).clamp(0, n as i64)
    } else {
        0
    }
}

/// Last excluded time of `B^>=`: `floor(N^{1 - 9 a_N / 40})`.
pub fn time_bgeq(n: usize, gamma: f64) -> i64 {
    let t = (n as f64).powf(1.0 - 9.0 * scale_a(n, gamma) / 40.0);
    if t.is_finite() {
        (t.floor() as i64).clamp(0, n as i64)
    } else {
        0
    }
}

/// Radius of the A ball: `N^{1/2 - a_N / 4}`.
pub fn radius_a(n: usize, gamma: f64) -> f64 {
    (n as f64).powf(0.5 - scale_a(n, gamma) / 4.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowSpec {
    Full { n: usize },
    A { n: usize, x: [i64; 2], gamma: f64 },
    BGeq { n: usize, gamma: f64 },
    B { n: usize, gamma: f64 },
    C { n: usize, x: [i64; 2], gamma: f64 },
    /// Complement of `A` inside `{1..N} x Z^2`, i.e. `B` together with `C`.
    ComplementA { n: usize, x: [i64; 2], gamma: f64 },
}

impl WindowSpec {
    pub fn horizon(&self) -> usize {
        match *self {
            WindowSpec::Full { n }
            | WindowSpec::A { n, .. }
            | WindowSpec::BGeq { n, .. }
            | WindowSpec::B { n, .. }
            | WindowSpec::C { n, .. }
            | WindowSpec::ComplementA { n, .. } => n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WindowSpec::Full { .. } => "full",
            WindowSpec::A { .. } => "A",
            WindowSpec::BGeq { .. } => "Bgeq",
            WindowSpec::B { .. } => "B",
            WindowSpec::C { .. } => "C",
            WindowSpec::ComplementA { .. } => "complement_A",
        }
    }

    /// True when membership does not depend on a start point.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(
            self,
            WindowSpec::Full { .. } | WindowSpec::BGeq { .. } | WindowSpec::B { .. }
        )
    }

    pub fn resolve(&self) -> Window {
        let all = |lo: i64, hi: i64| Region { lo, hi, ball: Ball::All };
        let ball = |n: usize, x: [i64; 2], gamma: f64, inside: bool| {
            let r = radius_a(n, gamma);
            Ball::Disc {
                u: x[0] + x[1],
                v: x[0] - x[1],
                two_r2: 2.0 * r * r,
                inside,
            }
        };
        let regions = match *self {
            WindowSpec::Full { n } => vec![all(0, n as i64)],
            WindowSpec::A { n, x, gamma } => vec![Region {
                lo: 0,
                hi: time_a(n, gamma),
                ball: ball(n, x, gamma, true),
            }],
            WindowSpec::BGeq { n, gamma } => vec![all(time_bgeq(n, gamma), n as i64)],
            WindowSpec::B { n, gamma } => vec![all(time_a(n, gamma), n as i64)],
            WindowSpec::C { n, x, gamma } => vec![Region {
                lo: 0,
                hi: time_a(n, gamma),
                ball: ball(n, x, gamma, false),
            }],
            WindowSpec::ComplementA { n, x, gamma } => vec![
                Region {
                    lo: 0,
                    hi: time_a(n, gamma),
                    ball: ball(n, x, gamma, false),
                },
                all(time_a(n, gamma), n as i64),
            ],
        };
        Window { regions }
    }

    pub fn contains(&self, n: i64, z: [i64; 2]) -> bool {
        self.resolve().contains(n, z)
    }

    /// Checks the parameters (`N >= 1`, finite `gamma < 1`).
    pub fn validate(&self) -> Result<()> {
        let gamma = match *self {
            WindowSpec::Full { .. } => None,
            WindowSpec::A { gamma, .. }
            | WindowSpec::BGeq { gamma, .. }
            | WindowSpec::B { gamma, .. }
            | WindowSpec::C { gamma, .. }
            | WindowSpec::ComplementA { gamma, .. } => Some(gamma),
        };
        if self.horizon() == 0 {
            return domain("window horizon must be at least 1");
        }
        if let Some(g) = gamma {
            if !g.is_finite() || g >= 1.0 {
                return domain(format!("gamma must be finite and below 1, got {g}"));
            }
            if self.horizon() < 2 {
                return domain("a_N needs N >= 2");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ball {
    All,
    /// `|z - x|^2 < r^2`, written in rotated coordinates as
    /// `du^2 + dv^2 < 2 r^2`.
    Disc {
        u: i64,
        v: i64,
        two_r2: f64,
        inside: bool,
    },
}

/// Times `lo < n <= hi`, sites selected by `ball`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Region {
    lo: i64,
    hi: i64,
    ball: Ball,
}

/// Sites of one row that lie in the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowMask {
    Empty,
    All,
    /// Indices `a..b`.
    Inside(usize, usize),
    /// Everything except `a..b`.
    Outside(usize, usize),
}

/// Resolved window: a union of regions with disjoint time ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    regions: Vec<Region>,
}

impl Window {
    pub fn contains(&self, n: i64, z: [i64; 2]) -> bool {
        let (u, v) = (z[0] + z[1], z[0] - z[1]);
        self.regions.iter().any(|r| {
            n > r.lo
                && n <= r.hi
                && match r.ball {
                    Ball::All => true,
                    Ball::Disc {
                        u: cu,
                        v: cv,
                        two_r2,
                        inside,
                    } => {
                        let d = (u - cu).pow(2) + (v - cv).pow(2);
                        ((d as f64) < two_r2) == inside
                    }
                }
        })
    }

    /// Last time carrying disorder (0 if none).
    pub fn last_time(&self) -> i64 {
        self.regions
            .iter()
            .filter(|r| r.hi > r.lo)
            .map(|r| r.hi)
            .max()
            .unwrap_or(0)
    }

    /// Mask of the row `u` at time `n` for sites `v0 + 2j`, `j < len`.
    pub fn row_mask(&self, n: i64, u: i64, v0: i64, len: usize) -> RowMask {
        let Some(r) = self.regions.iter().find(|r| n > r.lo && n <= r.hi) else {
            return RowMask::Empty;
        };
        match r.ball {
            Ball::All => RowMask::All,
            Ball::Disc {
                u: cu,
                v: cv,
                two_r2,
                inside,
            } => {
                let (a, b) = disc_span(u - cu, cv - v0, two_r2, len);
                match (inside, a < b) {
                    (true, false) => RowMask::Empty,
                    (true, true) if a == 0 && b == len => RowMask::All,
                    (true, true) => RowMask::Inside(a, b),
                    (false, false) => RowMask::All,
                    (false, true) if a == 0 && b == len => RowMask::Empty,
                    (false, true) => RowMask::Outside(a, b),
                }
            }
        }
    }
}

/// Indices `a..b` of `j in 0..len` with `du^2 + (2j - dv)^2 < two_r2`
/// where `dv = cv - v0`.
fn disc_span(du: i64, dv: i64, two_r2: f64, len: usize) -> (usize, usize) {
    let du2 = du * du;
    if du2 as f64 >= two_r2 {
        return (0, 0);
    }
    let ok = |k: i64| ((k * k + du2) as f64) < two_r2;
    let mut k = (two_r2 - du2 as f64).max(0.0).sqrt() as i64 + 1;
    while k > 0 && !ok(k) {
        k -= 1;
    }
    // v0 + 2j in [cv - k, cv + k]
    let lo = (dv - k + 1).div_euclid(2);
    let hi = (dv + k).div_euclid(2) + 1;
    let a = lo.clamp(0, len as i64) as usize;
    let b = hi.clamp(0, len as i64) as usize;
    (a, b.max(a))
}

/// Quarter-scaled factors `exp(beta omega - lambda) / 4` inside the
/// window and `1/4` outside.
pub struct WindowWeights<'a> {
    weigher: Weigher,
    window: &'a Window,
}

impl<'a> WindowWeights<'a> {
    /// `weigher` must use `shift = lambda(beta) + ln 4`.
    pub fn new(weigher: Weigher, window: &'a Window) -> Self {
        WindowWeights { weigher, window }
    }
}

impl RowWeights for WindowWeights<'_> {
    fn fill(&self, n: i64, u: i64, v0: i64, out: &mut [f64]) -> bool {
        match self.window.row_mask(n, u, v0, out.len()) {
            RowMask::Empty => false,
            RowMask::All => {
                self.weigher.fill_row(n, u, v0, out);
                true
            }
            RowMask::Inside(a, b) => {
                out.fill(0.25);
                self.weigher.fill_row(n, u, v0 + 2 * a as i64, &mut out[a..b]);
                true
            }
            RowMask::Outside(a, b) => {
                self.weigher.fill_row(n, u, v0, out);
                out[a..b].fill(0.25);
                true
            }
        }
    }
}
