//! Dose grid, the componentwise partial order on it, and admissible subsets.
//!
//! Combinations are addressed with 1-based `(i, j)` pairs everywhere: `i` is the
//! drug A level and `j` the drug B level.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};

/// A dose combination `(i, j)`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Combo {
    pub i: usize,
    pub j: usize,
}

impl Combo {
    pub const START: Combo = Combo { i: 1, j: 1 };

    pub const fn new(i: usize, j: usize) -> Self {
        Combo { i, j }
    }

    /// Componentwise order: `self <= other` in both drugs.
    pub fn le(self, other: Combo) -> bool {
        self.i <= other.i && self.j <= other.j
    }

    /// True when the two combinations differ by one level of exactly one drug.
    pub fn is_adjacent(self, other: Combo) -> bool {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j) == 1
    }
}

impl From<[usize; 2]> for Combo {
    fn from([i, j]: [usize; 2]) -> Self {
        Combo { i, j }
    }
}

impl From<Combo> for [usize; 2] {
    fn from(c: Combo) -> Self {
        [c.i, c.j]
    }
}

impl From<(usize, usize)> for Combo {
    fn from((i, j): (usize, usize)) -> Self {
        Combo { i, j }
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// The two-drug dose matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct DoseGrid {
    levels_a: Vec<f64>,
    levels_b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    levels_a: Vec<f64>,
    levels_b: Vec<f64>,
}

impl TryFrom<GridRepr> for DoseGrid {
    type Error = crate::Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        DoseGrid::new(r.levels_a, r.levels_b)
    }
}

impl From<DoseGrid> for GridRepr {
    fn from(g: DoseGrid) -> Self {
        GridRepr {
            levels_a: g.levels_a,
            levels_b: g.levels_b,
        }
    }
}

fn check_levels(name: &str, levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(invalid(format!("{name} must be nonempty")));
    }
    if levels.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(invalid(format!("{name} must hold positive finite doses")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl DoseGrid {
    pub fn new(levels_a: Vec<f64>, levels_b: Vec<f64>) -> Result<Self> {
        check_levels("levels_a", &levels_a)?;
        check_levels("levels_b", &levels_b)?;
        Ok(DoseGrid { levels_a, levels_b })
    }

    /// The 4×4 grid used throughout the examples: A ∈ {15,25,50,75} mg, B ∈ {120,160,200,240} mg.
    pub fn standard() -> Self {
        DoseGrid {
            levels_a: vec![15.0, 25.0, 50.0, 75.0],
            levels_b: vec![120.0, 160.0, 200.0, 240.0],
        }
    }

    pub fn levels_a(&self) -> &[f64] {
        &self.levels_a
    }

    pub fn levels_b(&self) -> &[f64] {
        &self.levels_b
    }

    /// Number of drug A levels.
    pub fn rows(&self) -> usize {
        self.levels_a.len()
    }

    /// Number of drug B levels.
    pub fn cols(&self) -> usize {
        self.levels_b.len()
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: Combo) -> bool {
        (1..=self.rows()).contains(&c.i) && (1..=self.cols()).contains(&c.j)
    }

    /// Row-major flat index of an in-grid combination.
    pub fn index(&self, c: Combo) -> usize {
        debug_assert!(self.contains(c), "{c} outside grid");
        (c.i - 1) * self.cols() + (c.j - 1)
    }

    pub fn combo_at(&self, index: usize) -> Combo {
        Combo::new(index / self.cols() + 1, index % self.cols() + 1)
    }

    /// All combinations in row-major order.
    pub fn combos(&self) -> impl Iterator<Item = Combo> + '_ {
        (0..self.len()).map(move |k| self.combo_at(k))
    }

    /// Dose pair in mg.
    pub fn doses(&self, c: Combo) -> (f64, f64) {
        (self.levels_a[c.i - 1], self.levels_b[c.j - 1])
    }

    pub fn label(&self, c: Combo) -> String {
        let (a, b) = self.doses(c);
        format!("({a} mg, {b} mg)")
    }
}

/// The prespecified admissible subset of combinations.
///
/// Always contains the starting combination `(1,1)`, and every member can be reached
/// from it by single-level steps that stay inside the subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetMask {
    rows: usize,
    cols: usize,
    included: Vec<bool>,
}

impl SubsetMask {
    pub fn new(grid: &DoseGrid, cells: impl IntoIterator<Item = Combo>) -> Result<Self> {
        let mut included = vec![false; grid.len()];
        for c in cells {
            if !grid.contains(c) {
                return Err(invalid(format!(
                    "mask cell {c} lies outside the {}x{} grid",
                    grid.rows(),
                    grid.cols()
                )));
            }
            included[grid.index(c)] = true;
        }
        let mask = SubsetMask {
            rows: grid.rows(),
            cols: grid.cols(),
            included,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn full(grid: &DoseGrid) -> Self {
        SubsetMask {
            rows: grid.rows(),
            cols: grid.cols(),
            included: vec![true; grid.len()],
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.contains(Combo::START) {
            return Err(invalid("mask must include the starting combination (1,1)"));
        }
        let reached = self.reachable_from_start(|c| self.adjacent(c));
        if let Some(c) = self.combos().find(|c| !reached.contains(c)) {
            return Err(invalid(format!(
                "mask cell {c} is not connected to (1,1) through adjacent admissible combinations"
            )));
        }
        Ok(())
    }

    fn reachable_from_start(&self, step: impl Fn(Combo) -> Vec<Combo>) -> Vec<Combo> {
        let mut seen = vec![Combo::START];
        let mut queue = VecDeque::from([Combo::START]);
        while let Some(c) = queue.pop_front() {
            for n in step(c) {
                if !seen.contains(&n) {
                    seen.push(n);
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Members reachable from `(1,1)` by escalation steps alone.
    pub fn escalation_reachable(&self) -> Vec<Combo> {
        let mut out = self.reachable_from_start(|c| self.up_unchecked(c));
        out.sort();
        out
    }

    fn adjacent(&self, c: Combo) -> Vec<Combo> {
        let mut out = self.up_unchecked(c);
        out.extend(self.down_unchecked(c));
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn contains(&self, c: Combo) -> bool {
        (1..=self.rows).contains(&c.i)
            && (1..=self.cols).contains(&c.j)
            && self.included[(c.i - 1) * self.cols + (c.j - 1)]
    }

    pub fn len(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.included.iter().all(|&b| b)
    }

    /// Members in row-major order.
    pub fn combos(&self) -> impl Iterator<Item = Combo> + '_ {
        let cols = self.cols;
        self.included
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| Combo::new(k / cols + 1, k % cols + 1))
    }

    pub fn matches(&self, grid: &DoseGrid) -> bool {
        self.rows == grid.rows() && self.cols == grid.cols()
    }

    fn up_unchecked(&self, c: Combo) -> Vec<Combo> {
        [Combo::new(c.i + 1, c.j), Combo::new(c.i, c.j + 1)]
            .into_iter()
            .filter(|n| self.contains(*n))
            .collect()
    }

    fn down_unchecked(&self, c: Combo) -> Vec<Combo> {
        let mut out = Vec::with_capacity(2);
        if c.i > 1 {
            out.push(Combo::new(c.i - 1, c.j));
        }
        if c.j > 1 {
            out.push(Combo::new(c.i, c.j - 1));
        }
        out.retain(|n| self.contains(*n));
        out
    }

    /// Admissible escalation set `{(i+1,j), (i,j+1)}` intersected with the mask.
    pub fn neighbors_up(&self, at: Combo) -> Result<Vec<Combo>> {
        if !self.contains(at) {
            return Err(domain(format!("{at} is not in the admissible subset")));
        }
        Ok(self.up_unchecked(at))
    }

    /// Admissible de-escalation set `{(i-1,j), (i,j-1)}` intersected with the mask.
    pub fn neighbors_down(&self, at: Combo) -> Result<Vec<Combo>> {
        if !self.contains(at) {
            return Err(domain(format!("{at} is not in the admissible subset")));
        }
        Ok(self.down_unchecked(at))
    }

    /// Render as a grid of `#` (included) and `.` (excluded), drug A down the rows.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        for i in 1..=self.rows {
            for j in 1..=self.cols {
                s.push(if self.contains(Combo::new(i, j)) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Two of the named subsets used in the examples.
pub mod masks {
    use super::{Combo, DoseGrid, SubsetMask};

    /// Diagonal band of eight combinations with one off-diagonal pair at the top.
    pub fn diagonal_band(grid: &DoseGrid) -> SubsetMask {
        let cells = [(1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 4), (4, 3), (4, 4)];
        SubsetMask::new(grid, cells.map(Combo::from)).expect("band mask is valid on a 4x4 grid")
    }

    /// The case-study subset: the band with `(3,2)` added and `(4,3)` removed.
    pub fn case_study(grid: &DoseGrid) -> SubsetMask {
        let cells = [(1, 1), (1, 2), (2, 2), (2, 3), (3, 2), (3, 3), (3, 4), (4, 4)];
        SubsetMask::new(grid, cells.map(Combo::from)).expect("case-study mask is valid on a 4x4 grid")
    }
}
