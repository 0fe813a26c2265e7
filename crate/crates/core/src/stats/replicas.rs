//! Replica plans and deterministic parallel execution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::disorder::DisorderLaw;
use crate::error::{Error, Result};
use crate::limit_theory::TestFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Moments,
    Overlap,
    Onepoint,
    Ewfield,
    Decomp,
    Tails,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Moments,
        ExperimentKind::Overlap,
        ExperimentKind::Onepoint,
        ExperimentKind::Ewfield,
        ExperimentKind::Decomp,
        ExperimentKind::Tails,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Moments => "moments",
            ExperimentKind::Overlap => "overlap",
            ExperimentKind::Onepoint => "onepoint",
            ExperimentKind::Ewfield => "ewfield",
            ExperimentKind::Decomp => "decomp",
            ExperimentKind::Tails => "tails",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Default cap on site updates per experiment.
pub const DEFAULT_BUDGET: f64 = 2e13;

/// Everything a replica computation depends on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaPlan {
    pub kind: ExperimentKind,
    pub n_replicas: usize,
    pub master_seed: u64,
    pub n_grid: Vec<usize>,
    pub beta_hat: f64,
    pub law: DisorderLaw,
    pub gamma: f64,
    pub phi: TestFunction,
    /// Upper bound on site updates (`sites x N x replicas`).
    pub budget: f64,
}

impl ReplicaPlan {
    pub fn new(kind: ExperimentKind, n_grid: Vec<usize>, n_replicas: usize, master_seed: u64) -> Self {
        ReplicaPlan {
            kind,
            n_replicas,
            master_seed,
            n_grid,
            beta_hat: 0.5,
            law: DisorderLaw::Gaussian,
            gamma: 0.2,
            phi: TestFunction::gaussian(1.0),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_beta_hat(mut self, b: f64) -> Self {
        self.beta_hat = b;
        self
    }

    pub fn with_law(mut self, law: DisorderLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_gamma(mut self, g: f64) -> Self {
        self.gamma = g;
        self
    }

    pub fn with_phi(mut self, phi: TestFunction) -> Self {
        self.phi = phi;
        self
    }

    /// Rough count of lattice site updates the plan performs.
    pub fn site_updates(&self) -> f64 {
        let per_n = |n: usize| -> f64 {
            let nf = n as f64;
            // a walk box of half-width ~ 7 sqrt(t) in rotated coordinates
            let point = 49.0 * nf * nf / 2.0;
            match self.kind {
                ExperimentKind::Overlap => nf,
                ExperimentKind::Moments => 4.0 * point,
                ExperimentKind::Onepoint | ExperimentKind::Tails => point,
                ExperimentKind::Ewfield | ExperimentKind::Decomp => {
                    let h = self.phi.support_radius() * nf.sqrt() * std::f64::consts::SQRT_2;
                    let sweep = nf * (2.0 * h + 14.0 * nf.sqrt()).powi(2) / 2.0;
                    let extra = if self.kind == ExperimentKind::Decomp {
                        // one forward run of the A window per site; it stops at time_a
                        let ta = crate::partition::time_a(n, self.gamma).max(1) as f64;
                        std::f64::consts::PI * (h * h / 2.0) * 49.0 * ta * ta / 2.0
                    } else {
                        0.0
                    };
                    2.0 * sweep * if self.kind == ExperimentKind::Decomp { 2.0 } else { 1.0 } + extra
                }
            }
        };
        self.n_grid.iter().map(|&n| per_n(n)).sum::<f64>() * self.n_replicas as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid: at least one horizon is required".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("n_grid: horizon {n} is below 2")));
        }
        if !(self.beta_hat >= 0.0) || !self.beta_hat.is_finite() {
            return Err(Error::Config(format!("beta_hat: {} is not a finite nonnegative number", self.beta_hat)));
        }
        if !(self.gamma < 1.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma: {} must be finite and below 1", self.gamma)));
        }
        self.phi.validate()?;
        let cost = self.site_updates();
        if cost > self.budget {
            return Err(Error::Resource(format!(
                "plan needs about {cost:.3e} site updates, budget is {:.3e}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Applies `f` to replica ids `0..n` on `workers` threads (0 = all cores)
/// and returns the results in id order.
#[cfg(feature = "parallel")]
pub fn map_replicas<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 1 {
        return (0..n as u64).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    pool.install(|| (0..n as u64).into_par_iter().map(&f).collect())
}

/// Sequential fallback; `workers` is ignored.
#[cfg(not(feature = "parallel"))]
pub fn map_replicas<T, F>(n: usize, _workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_canonical() {
        let f = |r: u64| -> Result<u64> { Ok(r * r + 1) };
        let a = map_replicas(100, 1, f).unwrap();
        let b = map_replicas(100, 4, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 50);
        assert!(map_replicas(0, 3, f).unwrap().is_empty());
    }

    #[test]
    fn errors_propagate() {
        let r = map_replicas(10, 2, |r| if r == 6 { Err(Error::Numerical("x".into())) } else { Ok(r) });
        assert!(r.is_err());
    }

    #[test]
    fn plan_validation() {
        let p = ReplicaPlan::new(ExperimentKind::Onepoint, vec![64], 10, 1);
        p.validate().unwrap();
        let mut big = ReplicaPlan::new(ExperimentKind::Ewfield, vec![1 << 20], 1000, 1);
        assert!(matches!(big.validate(), Err(Error::Resource(_))));
        big.budget = f64::INFINITY;
        big.validate().unwrap();
        assert!(ReplicaPlan::new(ExperimentKind::Onepoint, vec![], 10, 1).validate().is_err());
        assert!(ReplicaPlan::new(ExperimentKind::Onepoint, vec![64], 10, 1)
            .with_gamma(1.5)
            .validate()
            .is_err());
        assert_eq!("decomp".parse::<ExperimentKind>().unwrap(), ExperimentKind::Decomp);
    }
}
