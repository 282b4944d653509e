//! A live trial as an event-sourced record.

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use boincomb::engine::{preview_outcomes, replay_step, OutcomePreview};
use boincomb::scenario::builtin_mask;
use boincomb::seed::child_seed;
use boincomb::{
    decide_next, decision_table, fit_isotonic, select_mtc, BlrmContext, Combo, Decision, DecisionTable, Design,
    DesignParams, DoseGrid, SubsetMask, TrialState, TrialStatus,
};

use crate::error::ServiceError;

// stream index for the final-selection draw, kept apart from cohort indices
const SELECTION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Created {
        recorded_at: DateTime<Utc>,
        params: DesignParams,
        seed: u64,
    },
    Cohort {
        recorded_at: DateTime<Utc>,
        at: Combo,
        dlt: u32,
        /// Treated somewhere other than the recommendation.
        #[serde(default)]
        overridden: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
        decision: Decision,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Named(String),
    Cells(Vec<Combo>),
}

/// Body of `POST /trials`. Everything is optional: the default is a target of
/// 0.3 on the standard 4x4 grid with every combination admissible.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateTrial {
    pub params: Option<DesignParams>,
    pub levels_a: Option<Vec<f64>>,
    pub levels_b: Option<Vec<f64>>,
    pub mask: Option<MaskSpec>,
    pub seed: Option<u64>,
    pub blrm: Option<BlrmContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: Uuid,
    pub created_at: DateTime<Utc>,
    /// Root of every random tie-break in this trial.
    pub seed: u64,
    pub params: DesignParams,
    pub grid: DoseGrid,
    pub mask: Vec<Combo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blrm: Option<BlrmContext>,
    pub state: TrialState,
    pub audit: Vec<AuditEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellView {
    pub at: Combo,
    pub label: String,
    pub admissible: bool,
    pub n: u32,
    pub y: u32,
    pub rate: Option<f64>,
    pub eliminated: bool,
    pub recommended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub status: TrialStatus,
    pub running: bool,
    /// Combination for the next cohort while the trial runs.
    pub next: Option<Combo>,
    pub label: Option<String>,
    pub cohorts: u32,
    pub last_decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub params: DesignParams,
    pub grid: DoseGrid,
    pub mask: Vec<Combo>,
    pub status: TrialStatus,
    pub recommendation: Recommendation,
    pub cells: Vec<CellView>,
    pub total_n: u32,
    pub total_dlt: u32,
    pub state: TrialState,
    pub audit: Vec<AuditEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortResponse {
    pub decision: Decision,
    pub trial: TrialView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub at: Combo,
    pub n: u32,
    pub estimate: f64,
    pub eliminated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionView {
    pub status: TrialStatus,
    pub selection: Option<Combo>,
    pub label: Option<String>,
    pub estimates: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTableView {
    #[serde(flatten)]
    pub table: DecisionTable,
    pub cohort_size: u32,
    pub current: Combo,
    /// What the next cohort's DLT count would do at the current combination; absent once stopped.
    pub preview: Option<Vec<OutcomePreview>>,
}

pub fn resolve_mask(grid: &DoseGrid, spec: Option<MaskSpec>) -> Result<SubsetMask, ServiceError> {
    match spec {
        None => Ok(SubsetMask::full(grid)),
        Some(MaskSpec::Named(name)) if name == "full" => Ok(SubsetMask::full(grid)),
        Some(MaskSpec::Named(name)) => {
            let (_, named) = builtin_mask(&name).ok_or_else(|| ServiceError::invalid(format!("unknown mask {name:?}")))?;
            Ok(SubsetMask::new(grid, named.combos())?)
        }
        Some(MaskSpec::Cells(cells)) => Ok(SubsetMask::new(grid, cells)?),
    }
}

impl TrialRecord {
    pub fn create(req: CreateTrial, now: DateTime<Utc>) -> Result<Self, ServiceError> {
        let params = match req.params {
            Some(p) => p,
            None => DesignParams::standard(0.3)?,
        };
        params.validate()?;
        let grid = match (req.levels_a, req.levels_b) {
            (None, None) => DoseGrid::standard(),
            (Some(a), Some(b)) => DoseGrid::new(a, b)?,
            _ => return Err(ServiceError::invalid("give both levels_a and levels_b, or neither")),
        };
        let mask = resolve_mask(&grid, req.mask)?;
        if params.design == Design::BoinC && !mask.is_full() {
            return Err(ServiceError::invalid("BOIN-C needs every combination admissible; use a subset design"));
        }
        let trial_id = Uuid::new_v4();
        let seed = req.seed.unwrap_or_else(|| trial_id.as_u64_pair().0);
        let blrm = match (params.design, req.blrm) {
            (Design::BoinCb, b) => Some(b.unwrap_or_default()),
            (_, b) => b,
        };
        Ok(TrialRecord {
            trial_id,
            created_at: now,
            seed,
            params: params.clone(),
            state: TrialState::new(&grid),
            grid,
            mask: mask.combos().collect(),
            blrm,
            audit: vec![AuditEvent::Created {
                recorded_at: now,
                params,
                seed,
            }],
        })
    }

    pub fn subset(&self) -> Result<SubsetMask, ServiceError> {
        Ok(SubsetMask::new(&self.grid, self.mask.iter().copied())?)
    }

    fn cohort_rng(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(child_seed(self.seed, index as u64, 0, 0))
    }

    /// Record one cohort and move to the engine's recommendation.
    pub fn post_cohort(
        &mut self,
        at: Combo,
        dlt: u32,
        allow_override: bool,
        note: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<Decision, ServiceError> {
        if !self.state.status.is_running() {
            return Err(ServiceError::Stopped(self.state.status));
        }
        if dlt > self.params.cohort_size {
            return Err(ServiceError::invalid(format!(
                "{dlt} DLTs in a cohort of {}",
                self.params.cohort_size
            )));
        }
        let overridden = at != self.state.current;
        if overridden && !allow_override {
            return Err(ServiceError::DoseMismatch {
                expected: self.state.current,
                got: at,
            });
        }
        let mask = self.subset()?;
        let mut start = self.state.clone();
        start.current = at;
        let treated = start.apply_cohort(&mask, at, dlt, self.params.cohort_size)?;
        let mut rng = self.cohort_rng(self.state.cohort_log.len());
        let decision = decide_next(&treated, &self.grid, &mask, &self.params, self.blrm.as_ref(), &mut rng)?;
        let next = replay_step(&treated, &self.grid, &mask, &self.params, &decision)?;
        self.state = next;
        self.audit.push(AuditEvent::Cohort {
            recorded_at: now,
            at,
            dlt,
            overridden,
            note,
            decision: decision.clone(),
        });
        Ok(decision)
    }

    /// Rebuild the state from the audit log using the stored decisions.
    pub fn replay(&self) -> Result<TrialState, ServiceError> {
        let mask = self.subset()?;
        let mut state = TrialState::new(&self.grid);
        for event in &self.audit {
            if let AuditEvent::Cohort { at, dlt, decision, .. } = event {
                state.current = *at;
                let treated = state.apply_cohort(&mask, *at, *dlt, self.params.cohort_size)?;
                state = replay_step(&treated, &self.grid, &mask, &self.params, decision)?;
            }
        }
        Ok(state)
    }

    /// Rebuild the state by re-running the engine with the per-cohort seeds and
    /// check every decision against the stored one.
    pub fn recompute(&self) -> Result<TrialState, ServiceError> {
        let mask = self.subset()?;
        let mut state = TrialState::new(&self.grid);
        for (index, event) in self.audit.iter().filter(|e| matches!(e, AuditEvent::Cohort { .. })).enumerate() {
            let AuditEvent::Cohort { at, dlt, decision, .. } = event else { unreachable!() };
            state.current = *at;
            let treated = state.apply_cohort(&mask, *at, *dlt, self.params.cohort_size)?;
            let fresh = decide_next(&treated, &self.grid, &mask, &self.params, self.blrm.as_ref(), &mut self.cohort_rng(index))?;
            if &fresh != decision {
                return Err(ServiceError::Corrupt(format!("cohort {} decision differs on recomputation", index + 1)));
            }
            state = replay_step(&treated, &self.grid, &mask, &self.params, &fresh)?;
        }
        Ok(state)
    }

    pub fn recommendation(&self) -> Recommendation {
        let running = self.state.status.is_running();
        let next = running.then_some(self.state.current);
        Recommendation {
            status: self.state.status,
            running,
            next,
            label: next.map(|c| self.grid.label(c)),
            cohorts: self.state.cohorts(),
            last_decision: self.audit.iter().rev().find_map(|e| match e {
                AuditEvent::Cohort { decision, .. } => Some(decision.clone()),
                _ => None,
            }),
        }
    }

    pub fn view(&self) -> TrialView {
        let rec = self.recommendation();
        let cells = self
            .grid
            .combos()
            .map(|c| CellView {
                at: c,
                label: self.grid.label(c),
                admissible: self.mask.contains(&c),
                n: self.state.n_at(c),
                y: self.state.y_at(c),
                rate: self.state.rate_at(c),
                eliminated: self.state.is_eliminated(c),
                recommended: rec.next == Some(c),
            })
            .collect();
        TrialView {
            trial_id: self.trial_id,
            created_at: self.created_at,
            seed: self.seed,
            params: self.params.clone(),
            grid: self.grid.clone(),
            mask: self.mask.clone(),
            status: self.state.status,
            recommendation: rec,
            cells,
            total_n: self.state.total_n(),
            total_dlt: self.state.total_dlt(),
            state: self.state.clone(),
            audit: self.audit.clone(),
        }
    }

    pub fn selection(&self) -> Result<SelectionView, ServiceError> {
        if self.state.status.is_running() {
            return Err(ServiceError::NotStopped);
        }
        let mask = self.subset()?;
        let fit = fit_isotonic(&self.state, &mask)?;
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(self.seed, SELECTION_STREAM, 0, 0));
        let selection = select_mtc(&fit, &self.state, &self.params, &mut rng)?;
        Ok(SelectionView {
            status: self.state.status,
            selection,
            label: selection.map(|c| self.grid.label(c)),
            estimates: fit
                .iter()
                .map(|(c, e)| Estimate {
                    at: c,
                    n: self.state.n_at(c),
                    estimate: e,
                    eliminated: self.state.is_eliminated(c),
                })
                .collect(),
        })
    }

    pub fn decision_table(&self, n_max: Option<u32>) -> Result<DecisionTableView, ServiceError> {
        let cohort = self.params.cohort_size;
        let default_max = (self.state.n_at(self.state.current) + cohort).max(self.params.earlystop_n.unwrap_or(0)).max(3 * cohort);
        let n_max = n_max.unwrap_or(default_max);
        if n_max > 1000 {
            return Err(ServiceError::invalid("n_max is capped at 1000"));
        }
        Ok(DecisionTableView {
            table: decision_table(&self.params, n_max)?,
            cohort_size: cohort,
            current: self.state.current,
            preview: self
                .state
                .status
                .is_running()
                .then(|| preview_outcomes(&self.state, &self.params)),
        })
    }
}
