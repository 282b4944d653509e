//! Weighted isotonic regression under the componentwise order on treated
//! combinations, and final MTC selection.
//!
//! The fit cycles weighted PAVA projections over row chains, column chains and any
//! comparable pairs those chains do not already link, with Dykstra's correction
//! terms so the cycle converges to the projection onto the full order cone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{Combo, SubsetMask};
use crate::params::{DesignParams, MtcTieRule};
use crate::state::{TrialState, TrialStatus};

const MAX_SWEEPS: usize = 10_000;
const SWEEP_TOL: f64 = 1e-10;
const LEVEL_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub cells: Vec<Combo>,
    pub estimates: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IsotonicFit {
    pub fn estimate(&self, c: Combo) -> Option<f64> {
        self.cells.iter().position(|&d| d == c).map(|k| self.estimates[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Combo, f64)> + '_ {
        self.cells.iter().copied().zip(self.estimates.iter().copied())
    }
}

/// Weighted pool-adjacent-violators on a single chain.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // (mean, weight, count) blocks
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / w, w, c1 + c2);
        }
    }
    blocks.into_iter().flat_map(|(m, _, c)| std::iter::repeat_n(m, c)).collect()
}

/// Index chains whose monotonicity together imply the componentwise order on `cells`.
fn order_chains(cells: &[Combo]) -> Vec<Vec<usize>> {
    let k = cells.len();
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let group = |key: fn(Combo) -> usize, along: fn(Combo) -> usize| {
        let mut keys: Vec<usize> = cells.iter().map(|&c| key(c)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .filter_map(|g| {
                let mut members: Vec<usize> = (0..k).filter(|&m| key(cells[m]) == g).collect();
                members.sort_by_key(|&m| along(cells[m]));
                (members.len() > 1).then_some(members)
            })
            .collect::<Vec<_>>()
    };
    chains.extend(group(|c| c.i, |c| c.j));
    chains.extend(group(|c| c.j, |c| c.i));

    // transitive closure of the chain relations
    let mut reach = vec![vec![false; k]; k];
    for ch in &chains {
        for w in ch.windows(2) {
            reach[w[0]][w[1]] = true;
        }
    }
    for via in 0..k {
        for a in 0..k {
            if reach[a][via] {
                for b in 0..k {
                    if reach[via][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
    }
    for a in 0..k {
        for b in 0..k {
            if a != b && cells[a].le(cells[b]) && !reach[a][b] {
                chains.push(vec![a, b]);
            }
        }
    }
    chains
}

/// Weighted least-squares projection of `values` onto functions that are
/// nondecreasing in the componentwise order of `cells`.
pub fn isotonic_on_cells(cells: &[Combo], values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(cells.len(), values.len());
    assert_eq!(cells.len(), weights.len());
    let chains = order_chains(cells);
    let mut x = values.to_vec();
    if chains.is_empty() {
        return x;
    }
    let mut increments: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for (chain, inc) in chains.iter().zip(increments.iter_mut()) {
            let z: Vec<f64> = chain.iter().zip(inc.iter()).map(|(&m, &p)| x[m] + p).collect();
            let w: Vec<f64> = chain.iter().map(|&m| weights[m]).collect();
            let proj = pava(&z, &w);
            for (slot, (&m, (&zv, &pv))) in inc.iter_mut().zip(chain.iter().zip(z.iter().zip(proj.iter()))) {
                *slot = zv - pv;
                change = change.max((x[m] - pv).abs());
                x[m] = pv;
            }
        }
        if change < SWEEP_TOL {
            break;
        }
    }
    polish_levels(cells, values, weights, x)
}

// Snap near-equal fitted values onto exact weighted block means; keeps the raw
// iterate if that would break the order.
fn polish_levels(cells: &[Combo], values: &[f64], weights: &[f64], raw: Vec<f64>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut out = raw.clone();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && raw[order[end]] - raw[order[end - 1]] <= LEVEL_GAP {
            end += 1;
        }
        let block = &order[start..end];
        if let [m] = block {
            out[*m] = values[*m];
            start = end;
            continue;
        }
        let w: f64 = block.iter().map(|&m| weights[m]).sum();
        let mean = block.iter().map(|&m| weights[m] * values[m]).sum::<f64>() / w;
        for &m in block {
            out[m] = mean;
        }
        start = end;
    }
    let monotone = (0..cells.len())
        .all(|a| (0..cells.len()).all(|b| !cells[a].le(cells[b]) || out[a] <= out[b]));
    if monotone {
        out
    } else {
        raw
    }
}

/// Isotonic fit of `y/n` with weights `n` over the treated combinations.
pub fn fit_isotonic(state: &TrialState, mask: &SubsetMask) -> Result<IsotonicFit> {
    let cells: Vec<Combo> = state.treated().into_iter().filter(|c| mask.contains(*c)).collect();
    if cells.is_empty() {
        return Err(domain("no treated combinations to fit"));
    }
    let weights: Vec<f64> = cells.iter().map(|&c| state.n_at(c) as f64).collect();
    let values: Vec<f64> = cells
        .iter()
        .map(|&c| state.y_at(c) as f64 / state.n_at(c) as f64)
        .collect();
    let estimates = isotonic_on_cells(&cells, &values, &weights)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(IsotonicFit {
        cells,
        estimates,
        weights,
    })
}

/// Final recommendation: the treated, non-eliminated combination whose isotonic
/// estimate is closest to the target. `None` after a safety stop or when nothing
/// qualifies.
pub fn select_mtc<R: Rng + ?Sized>(
    fit: &IsotonicFit,
    state: &TrialState,
    params: &DesignParams,
    rng: &mut R,
) -> Result<Option<Combo>> {
    if state.status.is_running() {
        return Err(Error::State("the trial has not stopped".into()));
    }
    if state.status == TrialStatus::StoppedSafety {
        return Ok(None);
    }
    let admissible: Vec<(Combo, f64)> = fit
        .iter()
        .filter(|(c, _)| !state.is_eliminated(*c))
        .filter(|(_, e)| !params.require_mtc_below_lambda_d || *e <= params.lambda_d + crate::boundaries::BOUNDARY_TOL)
        .collect();
    let Some(best) = admissible
        .iter()
        .map(|(_, e)| (e - params.phi).abs())
        .min_by(f64::total_cmp)
    else {
        return Ok(None);
    };
    let mut tied: Vec<(Combo, f64)> = admissible
        .into_iter()
        .filter(|(_, e)| (e - params.phi).abs() <= best + 1e-12)
        .collect();
    if tied.len() > 1 && params.mtc_tie_rule != MtcTieRule::Random {
        let prefer_higher = params.mtc_tie_rule == MtcTieRule::HigherEstimate;
        let key = |e: f64| if prefer_higher { -e } else { e };
        let target = tied.iter().map(|(_, e)| key(*e)).min_by(f64::total_cmp).unwrap();
        tied.retain(|(_, e)| key(*e) <= target + 1e-12);
        if params.mtc_tie_rule == MtcTieRule::TowardTarget {
            let level = tied[0].1;
            let sign: i64 = if level < params.phi - 1e-12 {
                1
            } else if level > params.phi + 1e-12 {
                -1
            } else {
                0
            };
            let best_sum = tied.iter().map(|(c, _)| sign * (c.i + c.j) as i64).max().unwrap();
            tied.retain(|(c, _)| sign * (c.i + c.j) as i64 == best_sum);
        }
        let most = tied.iter().map(|(c, _)| state.n_at(*c)).max().unwrap();
        tied.retain(|(c, _)| state.n_at(*c) == most);
    }
    let pick = if tied.len() == 1 { 0 } else { rng.random_range(0..tied.len()) };
    Ok(Some(tied[pick].0))
}
