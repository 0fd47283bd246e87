//! Sup-norm bootstrap inference for covariance operators of functional data.
//!
//! Two-sample and change-point tests for equality (`Δ = 0`) and for relevant
//! differences (`sup |C₁ − C₂| ≤ Δ`) of covariance operators, computed on a
//! grid with a multiplier block bootstrap. The [`simulate`] and
//! [`experiments`] modules generate benchmark data and tally Monte Carlo
//! rejection frequencies.

pub mod basis;
pub mod bootstrap;
pub mod change_point;
pub mod csv_io;
pub mod error;
pub mod experiments;
pub mod fda;
pub mod report;
pub mod simulate;
pub mod two_sample;

pub use bootstrap::{block_sums, derive_seed, quantile, BootstrapDraws};
pub use change_point::{
    change_point_test, classical_cp_test, relevant_cp_test, ChangePointAnalysis,
    ChangePointConfig,
};
pub use csv_io::{read_curves, write_curves};
pub use error::{Error, Result};
pub use experiments::{run_experiment, ExperimentPlan, ExperimentResult};
pub use fda::{center_sample, empirical_covariance, sup_norm_diff, Curve, CurveSample, Divisor, Grid, Surface};
pub use report::{BootstrapTest, TestKind, TestReport};
pub use simulate::{Family, ScenarioSpec};
pub use two_sample::{
    classical_two_sample_test, relevant_two_sample_test, two_sample_test, TwoSampleAnalysis,
    TwoSampleConfig,
};
