//! WebAssembly bindings for the static demo page in `www/`. Every export takes
//! and returns JSON strings; the plain functions underneath are what the tests call.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use boincomb::engine::{preview_outcomes, replay_step, OutcomePreview};
use boincomb::scenario::{builtin_mask, builtin_scenario};
use boincomb::seed::child_seed;
use boincomb::simulator::{run_replications, StreamId};
use boincomb::{
    decide_next, decision_table, Combo, Decision, Design, DesignParams, DoseGrid, OperatingCharacteristics,
    SubsetMask, TrialState, TrialStatus,
};

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn named_mask(grid: &DoseGrid, name: &str) -> Res<SubsetMask> {
    if name == "full" {
        return Ok(SubsetMask::full(grid));
    }
    let (_, m) = builtin_mask(name).ok_or_else(|| format!("unknown mask {name:?}"))?;
    SubsetMask::new(grid, m.combos()).map_err(err)
}

fn params_for(phi: f64, epsilon: f64, cohort_size: u32, design: &str) -> Res<DesignParams> {
    let mut p = DesignParams::standard(phi).map_err(err)?;
    p.epsilon = epsilon;
    p.cohort_size = cohort_size;
    p.earlystop_n = Some(3 * cohort_size);
    p.design = serde_json::from_value::<Design>(design.into()).map_err(|_| format!("unknown design {design:?}"))?;
    p.validate().map_err(err)?;
    Ok(p)
}

pub fn decision_table_doc(phi: f64, epsilon: f64, cohort_size: u32, n_max: u32) -> Res<String> {
    let p = params_for(phi, epsilon, cohort_size, "boin-cs")?;
    serde_json::to_string(&decision_table(&p, n_max).map_err(err)?).map_err(err)
}

#[derive(Deserialize)]
pub struct WhatIfInput {
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_mask")]
    pub mask: String,
    #[serde(default = "default_design")]
    pub design: String,
    #[serde(default)]
    pub seed: u64,
    /// DLT counts of the cohorts so far, each treated at the recommendation.
    pub dlts: Vec<u32>,
}

fn default_phi() -> f64 {
    0.3
}
fn default_epsilon() -> f64 {
    0.95
}
fn default_mask() -> String {
    "band".into()
}
fn default_design() -> String {
    "boin-cs".into()
}

#[derive(Serialize)]
pub struct WhatIf {
    pub status: TrialStatus,
    pub mask: Vec<Combo>,
    pub path: Vec<Combo>,
    pub next: Option<Combo>,
    pub label: Option<String>,
    pub last_decision: Option<Decision>,
    pub state: TrialState,
    pub preview: Vec<OutcomePreview>,
}

/// Replay the DLT counts with per-cohort seeds and report where the next cohort goes
/// and what each possible count in it would do.
pub fn next_dose_doc(input: &str) -> Res<String> {
    let req: WhatIfInput = serde_json::from_str(input).map_err(err)?;
    let p = params_for(req.phi, req.epsilon, 3, &req.design)?;
    if p.design == Design::BoinCb {
        return Err("the demo does not run the logistic model; pick boin-cs or boin-ce".into());
    }
    let grid = DoseGrid::standard();
    let mask = named_mask(&grid, &req.mask)?;
    if p.design == Design::BoinC && !mask.is_full() {
        return Err("boin-c needs the full mask".into());
    }
    let mut state = TrialState::new(&grid);
    let mut path = Vec::new();
    let mut last = None;
    for (k, &dlt) in req.dlts.iter().enumerate() {
        if !state.status.is_running() {
            return Err(format!("cohort {} comes after the trial stopped", k + 1));
        }
        path.push(state.current);
        let treated = state.apply_cohort(&mask, state.current, dlt, p.cohort_size).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(req.seed, k as u64, 0, 0));
        let d = decide_next(&treated, &grid, &mask, &p, None, &mut rng).map_err(err)?;
        state = replay_step(&treated, &grid, &mask, &p, &d).map_err(err)?;
        last = Some(d);
    }
    let running = state.status.is_running();
    let next = running.then_some(state.current);
    let out = WhatIf {
        status: state.status,
        mask: mask.combos().collect(),
        path,
        next,
        label: next.map(|c| grid.label(c)),
        last_decision: last,
        preview: if running { preview_outcomes(&state, &p) } else { Vec::new() },
        state,
    };
    serde_json::to_string(&out).map_err(err)
}

pub fn simulate_doc(scenario: usize, mask: &str, design: &str, reps: usize, seed: u64) -> Res<String> {
    let sc = builtin_scenario(scenario).ok_or_else(|| format!("no scenario {scenario}; use 1-14"))?;
    let p = params_for(0.3, 0.95, 3, design)?;
    if p.design == Design::BoinCb {
        return Err("the demo does not run the logistic model; pick boin-c, boin-cs or boin-ce".into());
    }
    let m = named_mask(&sc.grid, mask)?;
    let trials = run_replications(&sc, &m, &p, None, reps.clamp(1, 5000), seed, StreamId::default(), 1).map_err(err)?;
    let oc = OperatingCharacteristics::from_trials(&sc, &trials);
    // selection share per combination, row-major
    let mut share = vec![0.0; sc.grid.len()];
    for t in &trials {
        if let Some(c) = t.selection {
            share[sc.grid.index(c)] += 100.0 / trials.len() as f64;
        }
    }
    serde_json::to_string(&serde_json::json!({
        "scenario": sc.name,
        "true_tox": sc.true_tox,
        "mtc": sc.mtc_set,
        "mask": m.combos().collect::<Vec<_>>(),
        "selection_pct": share,
        "oc": oc,
    }))
    .map_err(err)
}

#[wasm_bindgen]
pub fn decision_table_json(phi: f64, epsilon: f64, cohort_size: u32, n_max: u32) -> Result<String, JsValue> {
    decision_table_doc(phi, epsilon, cohort_size, n_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn next_dose_json(input: &str) -> Result<String, JsValue> {
    next_dose_doc(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate_json(scenario: u32, mask: &str, design: &str, reps: u32, seed: u32) -> Result<String, JsValue> {
    simulate_doc(scenario as usize, mask, design, reps as usize, seed as u64).map_err(|e| JsValue::from_str(&e))
}
