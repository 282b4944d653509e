//! True-toxicity scenarios and the JSON documents that carry scenarios and masks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Combo, DoseGrid, SubsetMask};

/// A true DLT-probability surface with its designated target combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: DoseGrid,
    /// Row-major over the grid.
    pub true_tox: Vec<f64>,
    pub mtc_set: Vec<Combo>,
    pub acceptable_lo: f64,
    pub acceptable_hi: f64,
    /// Admissible subset shipped with the scenario, if any.
    pub mask: Option<SubsetMask>,
}

/// On-disk scenario document. `true_tox` is a row-major matrix (one row per drug A level).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub levels_a: Vec<f64>,
    pub levels_b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Combo>>,
    pub true_tox: Vec<Vec<f64>>,
    #[serde(default)]
    pub mtc: Vec<Combo>,
    #[serde(default = "default_acceptable")]
    pub acceptable: [f64; 2],
}

fn default_acceptable() -> [f64; 2] {
    [0.16, 0.33]
}

/// On-disk admissible-subset document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskFile {
    #[serde(default)]
    pub name: Option<String>,
    pub levels_a: Vec<f64>,
    pub levels_b: Vec<f64>,
    pub mask: Vec<Combo>,
}

impl MaskFile {
    pub fn into_parts(self) -> Result<(DoseGrid, SubsetMask)> {
        let grid = DoseGrid::new(self.levels_a, self.levels_b)?;
        let mask = SubsetMask::new(&grid, self.mask)?;
        Ok((grid, mask))
    }

    pub fn from_parts(name: Option<String>, grid: &DoseGrid, mask: &SubsetMask) -> Self {
        MaskFile {
            name,
            levels_a: grid.levels_a().to_vec(),
            levels_b: grid.levels_b().to_vec(),
            mask: mask.combos().collect(),
        }
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<(DoseGrid, SubsetMask)> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str::<MaskFile>(&text)?.into_parts()
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = crate::Error;
    fn try_from(f: ScenarioFile) -> Result<Self> {
        let grid = DoseGrid::new(f.levels_a, f.levels_b)?;
        if f.true_tox.len() != grid.rows() || f.true_tox.iter().any(|r| r.len() != grid.cols()) {
            return Err(invalid(format!(
                "true_tox must be a {}x{} matrix",
                grid.rows(),
                grid.cols()
            )));
        }
        let true_tox: Vec<f64> = f.true_tox.into_iter().flatten().collect();
        let mask = f.mask.map(|cells| SubsetMask::new(&grid, cells)).transpose()?;
        Scenario::new(
            f.name.unwrap_or_else(|| "unnamed".into()),
            grid,
            true_tox,
            f.mtc,
            (f.acceptable[0], f.acceptable[1]),
            mask,
        )
    }
}

impl Scenario {
    pub fn new(
        name: String,
        grid: DoseGrid,
        true_tox: Vec<f64>,
        mtc_set: Vec<Combo>,
        acceptable: (f64, f64),
        mask: Option<SubsetMask>,
    ) -> Result<Self> {
        if true_tox.len() != grid.len() {
            return Err(invalid("true_tox does not match the grid size"));
        }
        if true_tox.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("true toxicity probabilities must lie in [0, 1]"));
        }
        let (lo, hi) = acceptable;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(invalid("acceptable interval must satisfy 0 <= lo <= hi <= 1"));
        }
        for &c in &mtc_set {
            if !grid.contains(c) {
                return Err(invalid(format!("MTC {c} lies outside the grid")));
            }
            let p = true_tox[grid.index(c)];
            if !(lo - 1e-12..=hi + 1e-12).contains(&p) {
                return Err(invalid(format!("MTC {c} has true toxicity {p} outside [{lo}, {hi}]")));
            }
        }
        if let Some(m) = &mask {
            if !m.matches(&grid) {
                return Err(invalid("scenario mask does not match the grid"));
            }
        }
        Ok(Scenario {
            name,
            grid,
            true_tox,
            mtc_set,
            acceptable_lo: lo,
            acceptable_hi: hi,
            mask,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ScenarioFile>(text)?.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            name: Some(self.name.clone()),
            levels_a: self.grid.levels_a().to_vec(),
            levels_b: self.grid.levels_b().to_vec(),
            mask: self.mask.as_ref().map(|m| m.combos().collect()),
            true_tox: self.true_tox.chunks(self.grid.cols()).map(<[f64]>::to_vec).collect(),
            mtc: self.mtc_set.clone(),
            acceptable: [self.acceptable_lo, self.acceptable_hi],
        }
    }

    pub fn tox(&self, c: Combo) -> f64 {
        self.true_tox[self.grid.index(c)]
    }

    pub fn is_mtc(&self, c: Combo) -> bool {
        self.mtc_set.contains(&c)
    }

    pub fn is_acceptable(&self, c: Combo) -> bool {
        let p = self.tox(c);
        p >= self.acceptable_lo - 1e-12 && p <= self.acceptable_hi + 1e-12
    }

    pub fn is_overly_toxic(&self, c: Combo) -> bool {
        self.tox(c) > self.acceptable_hi + 1e-12
    }
}

const SCENARIO_DOCS: [&str; 14] = [
    include_str!("../data/scenario_01.json"),
    include_str!("../data/scenario_02.json"),
    include_str!("../data/scenario_03.json"),
    include_str!("../data/scenario_04.json"),
    include_str!("../data/scenario_05.json"),
    include_str!("../data/scenario_06.json"),
    include_str!("../data/scenario_07.json"),
    include_str!("../data/scenario_08.json"),
    include_str!("../data/scenario_09.json"),
    include_str!("../data/scenario_10.json"),
    include_str!("../data/scenario_11.json"),
    include_str!("../data/scenario_12.json"),
    include_str!("../data/scenario_13.json"),
    include_str!("../data/scenario_14.json"),
];

/// Bundled mask documents: `band`, `case_study`, `full`.
pub const MASK_DOCS: [(&str, &str); 3] = [
    ("band", include_str!("../data/mask_band.json")),
    ("case_study", include_str!("../data/mask_case_study.json")),
    ("full", include_str!("../data/mask_full.json")),
];

/// The fourteen bundled 4×4 scenarios, in order.
pub fn builtin_scenarios() -> Vec<Scenario> {
    SCENARIO_DOCS
        .iter()
        .map(|doc| Scenario::from_json(doc).expect("bundled scenario is valid"))
        .collect()
}

/// Bundled scenario by 1-based number.
pub fn builtin_scenario(number: usize) -> Option<Scenario> {
    SCENARIO_DOCS
        .get(number.checked_sub(1)?)
        .map(|doc| Scenario::from_json(doc).expect("bundled scenario is valid"))
}

pub fn builtin_mask(name: &str) -> Option<(DoseGrid, SubsetMask)> {
    MASK_DOCS.iter().find(|(n, _)| *n == name).map(|(_, doc)| {
        serde_json::from_str::<MaskFile>(doc)
            .expect("bundled mask parses")
            .into_parts()
            .expect("bundled mask is valid")
    })
}
