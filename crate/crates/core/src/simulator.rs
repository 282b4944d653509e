//! Monte Carlo operating characteristics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blrm::BlrmContext;
use crate::engine::{advance, Decision};
use crate::error::{invalid, Result};
use crate::grid::{Combo, SubsetMask};
use crate::isotonic::{fit_isotonic, select_mtc};
use crate::params::DesignParams;
use crate::scenario::Scenario;
use crate::seed::child_seed;
use crate::state::{CohortEntry, TrialState, TrialStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub selection: Option<Combo>,
    pub total_n: u32,
    pub total_dlt: u32,
    /// Patients treated where the true DLT rate exceeds the acceptable band.
    pub pts_over_tox: u32,
    pub path: Vec<CohortEntry>,
    pub stop_reason: TrialStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    /// Percent of trials selecting a target combination.
    pub pcs: f64,
    /// Percent selecting a combination with true rate inside the acceptable band.
    pub pas: f64,
    /// Percent selecting above the acceptable band.
    pub over_sel: f64,
    /// Percent selecting below the acceptable band.
    pub under_sel: f64,
    /// Percent with no selection.
    pub none_sel: f64,
    pub mean_n: f64,
    pub mean_dlt: f64,
    pub mean_pts_over_tox: f64,
    pub replications: usize,
}

impl OperatingCharacteristics {
    pub fn from_trials(scenario: &Scenario, trials: &[TrialResult]) -> Self {
        let r = trials.len().max(1) as f64;
        let pct = |k: usize| 100.0 * k as f64 / r;
        let count = |f: &dyn Fn(Combo) -> bool| trials.iter().filter(|t| t.selection.is_some_and(f)).count();
        let mean = |f: &dyn Fn(&TrialResult) -> u32| trials.iter().map(|t| f(t) as f64).sum::<f64>() / r;
        OperatingCharacteristics {
            pcs: pct(count(&|c| scenario.is_mtc(c))),
            pas: pct(count(&|c| scenario.is_acceptable(c))),
            over_sel: pct(count(&|c| scenario.is_overly_toxic(c))),
            under_sel: pct(count(&|c| !scenario.is_acceptable(c) && !scenario.is_overly_toxic(c))),
            none_sel: pct(trials.iter().filter(|t| t.selection.is_none()).count()),
            mean_n: mean(&|t| t.total_n),
            mean_dlt: mean(&|t| t.total_dlt),
            mean_pts_over_tox: mean(&|t| t.pts_over_tox),
            replications: trials.len(),
        }
    }
}

fn check_inputs(scenario: &Scenario, mask: &SubsetMask, params: &DesignParams) -> Result<()> {
    params.validate()?;
    if !mask.matches(&scenario.grid) {
        return Err(invalid("mask does not match the scenario grid"));
    }
    Ok(())
}

/// Run one trial with cohort outcomes supplied by `outcome(at, cohort_size, rng)`.
///
/// The same `rng` feeds outcomes, tie-breaks and the final selection, in that
/// order of use. Decisions are kept when `keep_decisions` is set.
pub fn run_trial_with<R, F>(
    scenario: &Scenario,
    mask: &SubsetMask,
    params: &DesignParams,
    blrm: Option<&BlrmContext>,
    rng: &mut R,
    keep_decisions: bool,
    mut outcome: F,
) -> Result<TrialResult>
where
    R: Rng + ?Sized,
    F: FnMut(Combo, u32, &mut R) -> u32,
{
    check_inputs(scenario, mask, params)?;
    let grid = &scenario.grid;
    let mut state = TrialState::new(grid);
    let mut decisions = Vec::new();
    while state.status.is_running() {
        let dlt = outcome(state.current, params.cohort_size, rng);
        let (next, decision) = advance(&state, grid, mask, params, dlt, blrm, rng)?;
        if keep_decisions {
            decisions.push(decision);
        }
        state = next;
    }
    let fit = fit_isotonic(&state, mask)?;
    let selection = select_mtc(&fit, &state, params, rng)?;
    let pts_over_tox = grid
        .combos()
        .filter(|&c| scenario.is_overly_toxic(c))
        .map(|c| state.n_at(c))
        .sum();
    Ok(TrialResult {
        selection,
        total_n: state.total_n(),
        total_dlt: state.total_dlt(),
        pts_over_tox,
        path: state.cohort_log,
        stop_reason: state.status,
        decisions,
    })
}

/// Binomial cohort outcome, one Bernoulli draw per patient.
pub fn draw_cohort<R: Rng + ?Sized>(p: f64, size: u32, rng: &mut R) -> u32 {
    (0..size).filter(|_| rng.random::<f64>() < p).count() as u32
}

pub fn run_trial(
    scenario: &Scenario,
    mask: &SubsetMask,
    params: &DesignParams,
    blrm: Option<&BlrmContext>,
    seed: u64,
) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_trial_with(scenario, mask, params, blrm, &mut rng, false, |at, size, rng| {
        draw_cohort(scenario.tox(at), size, rng)
    })
}

/// Seed-stream coordinates for one (scenario, configuration) cell of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamId {
    pub scenario: u64,
    pub config: u64,
}

/// Run `reps` replications; replication `r` uses `child_seed(root, scenario, config, r)`.
/// Results are ordered by replication index regardless of `parallelism`.
#[allow(clippy::too_many_arguments)]
pub fn run_replications(
    scenario: &Scenario,
    mask: &SubsetMask,
    params: &DesignParams,
    blrm: Option<&BlrmContext>,
    reps: usize,
    root_seed: u64,
    stream: StreamId,
    parallelism: usize,
) -> Result<Vec<TrialResult>> {
    if reps == 0 {
        return Err(invalid("at least one replication is required"));
    }
    check_inputs(scenario, mask, params)?;
    let one = |r: usize| {
        let seed = child_seed(root_seed, stream.scenario, stream.config, r as u64);
        run_trial(scenario, mask, params, blrm, seed)
    };
    map_ordered(reps, parallelism, one)
}

#[cfg(feature = "parallel")]
fn map_ordered<T, F>(count: usize, parallelism: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if parallelism <= 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| crate::Error::State(format!("thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, F>(count: usize, _parallelism: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..count).map(f).collect()
}

pub fn run_study(
    scenario: &Scenario,
    mask: &SubsetMask,
    params: &DesignParams,
    blrm: Option<&BlrmContext>,
    reps: usize,
    root_seed: u64,
    parallelism: usize,
) -> Result<OperatingCharacteristics> {
    let trials = run_replications(scenario, mask, params, blrm, reps, root_seed, StreamId::default(), parallelism)?;
    Ok(OperatingCharacteristics::from_trials(scenario, &trials))
}

/// One design configuration in a study matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub label: String,
    pub mask: SubsetMask,
    pub params: DesignParams,
    pub blrm: Option<BlrmContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub config: String,
    pub design: String,
    #[serde(flatten)]
    pub oc: OperatingCharacteristics,
}

/// Scenario-by-configuration results plus one mean row per configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StudyReport {
    pub rows: Vec<ReportRow>,
    pub means: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<Vec<TrialResult>>,
}

impl StudyReport {
    /// Build from scenario rows, computing a mean row for each configuration label.
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let mut labels: Vec<(String, String)> = Vec::new();
        for r in &rows {
            if !labels.iter().any(|(l, _)| *l == r.config) {
                labels.push((r.config.clone(), r.design.clone()));
            }
        }
        let means = labels
            .into_iter()
            .map(|(label, design)| {
                let group: Vec<&OperatingCharacteristics> =
                    rows.iter().filter(|r| r.config == label).map(|r| &r.oc).collect();
                let k = group.len() as f64;
                let avg = |f: fn(&OperatingCharacteristics) -> f64| group.iter().map(|o| f(o)).sum::<f64>() / k;
                ReportRow {
                    scenario: "Mean".into(),
                    config: label,
                    design,
                    oc: OperatingCharacteristics {
                        pcs: avg(|o| o.pcs),
                        pas: avg(|o| o.pas),
                        over_sel: avg(|o| o.over_sel),
                        under_sel: avg(|o| o.under_sel),
                        none_sel: avg(|o| o.none_sel),
                        mean_n: avg(|o| o.mean_n),
                        mean_dlt: avg(|o| o.mean_dlt),
                        mean_pts_over_tox: avg(|o| o.mean_pts_over_tox),
                        replications: group.iter().map(|o| o.replications).sum(),
                    },
                }
            })
            .collect();
        StudyReport {
            rows,
            means,
            trials: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn configs(&self) -> Vec<String> {
        self.means.iter().map(|m| m.config.clone()).collect()
    }

    pub fn scenarios(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.scenario) {
                out.push(r.scenario.clone());
            }
        }
        out
    }

    pub fn row(&self, scenario: &str, config: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.config == config)
    }

    pub fn mean(&self, config: &str) -> Option<&ReportRow> {
        self.means.iter().find(|r| r.config == config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Every scenario under every configuration. Cell `(s, c)` draws its replication
/// seeds from stream `(s, c)`, so adding configurations never perturbs existing cells.
pub fn run_matrix(
    scenarios: &[Scenario],
    configs: &[StudyConfig],
    reps: usize,
    root_seed: u64,
    parallelism: usize,
    keep_trials: bool,
) -> Result<StudyReport> {
    let mut rows = Vec::with_capacity(scenarios.len() * configs.len());
    let mut trials = Vec::new();
    for (c_idx, config) in configs.iter().enumerate() {
        for (s_idx, scenario) in scenarios.iter().enumerate() {
            let stream = StreamId {
                scenario: s_idx as u64,
                config: c_idx as u64,
            };
            let results = run_replications(
                scenario,
                &config.mask,
                &config.params,
                config.blrm.as_ref(),
                reps,
                root_seed,
                stream,
                parallelism,
            )?;
            rows.push(ReportRow {
                scenario: scenario.name.clone(),
                config: config.label.clone(),
                design: config.params.design.name().to_string(),
                oc: OperatingCharacteristics::from_trials(scenario, &results),
            });
            if keep_trials {
                trials.push(results);
            }
        }
    }
    let mut report = StudyReport::from_rows(rows);
    report.trials = trials;
    Ok(report)
}
