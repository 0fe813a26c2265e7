//! Replica harness, estimators and the experiment battery.

pub mod estimators;
pub mod experiments;
pub mod replicas;

pub use estimators::{
    fit_left_tail, ks_distance, ks_statistic, mean_se, variance_se, EstimatorResult, TailFit, TrendReport,
};
pub use experiments::{run_experiment, ExperimentReport, ReplicaRecord, ResultRow, Verdict};
pub use replicas::{map_replicas, ExperimentKind, ReplicaPlan};
