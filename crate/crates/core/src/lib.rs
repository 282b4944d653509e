//! Interval-based dose finding for two-drug combination trials restricted to a
//! prespecified subset of the dose grid.
//!
//! The crate covers the full pipeline: escalation boundaries and decision tables,
//! per-cohort dose assignment for the BOIN-C, BOIN-CS, BOIN-CE and BOIN-CB
//! variants, isotonic estimation and final selection, a Bayesian logistic model
//! used as a tie-breaker, and a Monte Carlo simulator with reporting.

pub mod blrm;
pub mod boundaries;
pub mod engine;
pub mod error;
pub mod grid;
pub mod isotonic;
pub mod params;
pub mod posterior;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod simulator;
pub mod state;

pub use blrm::{BlrmContext, BlrmFit, BlrmPrior, McmcConfig};
pub use boundaries::{decision_table, lambda_boundaries, DecisionTable, IntervalCall};
pub use engine::{advance, check_stop, commit, decide_next, Action, Decision, TieBreak};
pub use error::{Error, Result};
pub use grid::{masks, Combo, DoseGrid, SubsetMask};
pub use isotonic::{fit_isotonic, select_mtc, IsotonicFit};
pub use params::{Design, DesignConfig, DesignParams, MtcTieRule};
pub use posterior::BetaPosterior;
pub use report::{render_figure, render_table, Metric};
pub use scenario::Scenario;
pub use simulator::{run_matrix, run_study, run_trial, OperatingCharacteristics, StudyConfig, StudyReport, TrialResult};
pub use state::{TrialState, TrialStatus};
