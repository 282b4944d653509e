use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::grid::{Combo, DoseGrid, SubsetMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Running,
    StoppedConverged,
    StoppedMaxN,
    StoppedSafety,
}

impl TrialStatus {
    pub fn is_running(self) -> bool {
        self == TrialStatus::Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub at: Combo,
    pub n: u32,
    pub dlt: u32,
}

/// Accumulated data and conduct status of one trial.
///
/// Matrices are row-major over the full grid; cells outside the mask stay at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub rows: usize,
    pub cols: usize,
    pub n: Vec<u32>,
    pub y: Vec<u32>,
    pub eliminated: Vec<bool>,
    pub current: Combo,
    pub status: TrialStatus,
    pub cohort_log: Vec<CohortEntry>,
}

impl TrialState {
    /// Empty trial positioned at the starting combination.
    pub fn new(grid: &DoseGrid) -> Self {
        let len = grid.len();
        TrialState {
            rows: grid.rows(),
            cols: grid.cols(),
            n: vec![0; len],
            y: vec![0; len],
            eliminated: vec![false; len],
            current: Combo::START,
            status: TrialStatus::Running,
            cohort_log: Vec::new(),
        }
    }

    fn idx(&self, c: Combo) -> usize {
        (c.i - 1) * self.cols + (c.j - 1)
    }

    fn in_grid(&self, c: Combo) -> bool {
        (1..=self.rows).contains(&c.i) && (1..=self.cols).contains(&c.j)
    }

    pub fn n_at(&self, c: Combo) -> u32 {
        self.n[self.idx(c)]
    }

    pub fn y_at(&self, c: Combo) -> u32 {
        self.y[self.idx(c)]
    }

    pub fn is_eliminated(&self, c: Combo) -> bool {
        self.eliminated[self.idx(c)]
    }

    pub fn rate_at(&self, c: Combo) -> Option<f64> {
        let n = self.n_at(c);
        (n > 0).then(|| self.y_at(c) as f64 / n as f64)
    }

    pub fn total_n(&self) -> u32 {
        self.n.iter().sum()
    }

    pub fn total_dlt(&self) -> u32 {
        self.y.iter().sum()
    }

    pub fn cohorts(&self) -> u32 {
        self.cohort_log.len() as u32
    }

    /// Combinations with at least one treated patient, row-major.
    pub fn treated(&self) -> Vec<Combo> {
        (0..self.n.len())
            .filter(|&k| self.n[k] > 0)
            .map(|k| Combo::new(k / self.cols + 1, k % self.cols + 1))
            .collect()
    }

    /// Checks every structural invariant against the grid and mask.
    pub fn validate(&self, grid: &DoseGrid, mask: &SubsetMask) -> Result<()> {
        if self.rows != grid.rows() || self.cols != grid.cols() || !mask.matches(grid) {
            return Err(invalid("state, grid and mask dimensions disagree"));
        }
        let len = grid.len();
        if self.n.len() != len || self.y.len() != len || self.eliminated.len() != len {
            return Err(invalid("state matrices have the wrong length"));
        }
        for c in grid.combos() {
            let k = grid.index(c);
            if self.y[k] > self.n[k] {
                return Err(invalid(format!("more DLTs than patients at {c}")));
            }
            if self.n[k] > 0 && !mask.contains(c) {
                return Err(invalid(format!("patients recorded outside the mask at {c}")));
            }
            if self.eliminated[k] {
                for d in mask.combos() {
                    if c.le(d) && !self.eliminated[grid.index(d)] {
                        return Err(invalid(format!(
                            "elimination is not upward closed: {c} eliminated but {d} is not"
                        )));
                    }
                }
            }
        }
        if !mask.contains(self.current) {
            return Err(invalid(format!("current combination {} is outside the mask", self.current)));
        }
        if self.status.is_running() && self.is_eliminated(self.current) {
            return Err(invalid("a running trial sits on an eliminated combination"));
        }
        Ok(())
    }

    /// Add one cohort's outcome at `at`.
    pub fn apply_cohort(&self, mask: &SubsetMask, at: Combo, dlt: u32, cohort_size: u32) -> Result<TrialState> {
        if dlt > cohort_size {
            return Err(domain(format!("{dlt} DLTs in a cohort of {cohort_size}")));
        }
        if !self.in_grid(at) || !mask.contains(at) {
            return Err(domain(format!("{at} is not an admissible combination")));
        }
        if self.is_eliminated(at) {
            return Err(domain(format!("{at} has been eliminated")));
        }
        let mut next = self.clone();
        let k = next.idx(at);
        next.n[k] += cohort_size;
        next.y[k] += dlt;
        next.cohort_log.push(CohortEntry {
            at,
            n: cohort_size,
            dlt,
        });
        Ok(next)
    }

    /// Eliminate `at` and every masked combination at or above it in both drugs.
    /// Losing the starting combination stops the trial for safety.
    pub fn mark_eliminated(&self, mask: &SubsetMask, at: Combo) -> Result<TrialState> {
        if !mask.contains(at) {
            return Err(domain(format!("{at} is not in the admissible subset")));
        }
        let mut next = self.clone();
        for c in mask.combos() {
            if at.le(c) {
                let k = next.idx(c);
                next.eliminated[k] = true;
            }
        }
        if next.is_eliminated(Combo::START) {
            next.status = TrialStatus::StoppedSafety;
        }
        Ok(next)
    }

    pub fn eliminated_combos(&self) -> Vec<Combo> {
        (0..self.eliminated.len())
            .filter(|&k| self.eliminated[k])
            .map(|k| Combo::new(k / self.cols + 1, k % self.cols + 1))
            .collect()
    }
}
