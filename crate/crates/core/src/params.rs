use serde::{Deserialize, Serialize};

use crate::boundaries::lambda_boundaries;
use crate::error::{invalid, Result};

/// Which dose-assignment variant drives the trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    /// Interval design on the full grid.
    #[serde(rename = "boin-c")]
    BoinC,
    /// Interval design on an arbitrary admissible subset.
    #[serde(rename = "boin-cs")]
    BoinCs,
    /// Subset design that prefers an untried combination when de-escalating.
    #[serde(rename = "boin-ce")]
    BoinCe,
    /// Subset design with logistic-model tie-breaking.
    #[serde(rename = "boin-cb")]
    BoinCb,
}

impl Design {
    pub const ALL: [Design; 4] = [Design::BoinC, Design::BoinCs, Design::BoinCe, Design::BoinCb];

    pub fn name(self) -> &'static str {
        match self {
            Design::BoinC => "BOIN-C",
            Design::BoinCs => "BOIN-CS",
            Design::BoinCe => "BOIN-CE",
            Design::BoinCb => "BOIN-CB",
        }
    }

    pub fn tie_break(self) -> TieBreakPolicy {
        match self {
            Design::BoinC | Design::BoinCs => TieBreakPolicy::RandomUniform,
            Design::BoinCe => TieBreakPolicy::ExploratoryThenRandom,
            Design::BoinCb => TieBreakPolicy::BlrmGuided,
        }
    }
}

impl std::str::FromStr for Design {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "boin-c" | "c" => Ok(Design::BoinC),
            "boin-cs" | "cs" => Ok(Design::BoinCs),
            "boin-ce" | "ce" => Ok(Design::BoinCe),
            "boin-cb" | "cb" => Ok(Design::BoinCb),
            other => Err(invalid(format!("unknown design {other:?}"))),
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakPolicy {
    RandomUniform,
    ExploratoryThenRandom,
    BlrmGuided,
}

/// How `select_mtc` resolves equal distances to the target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MtcTieRule {
    /// Smaller isotonic estimate, then more patients, then a seeded uniform draw.
    LowerEstimate,
    /// Larger isotonic estimate, then more patients, then a seeded uniform draw.
    HigherEstimate,
    /// Smaller isotonic estimate; among equal estimates the higher combination
    /// (larger `i + j`) when below the target and the lower one when above,
    /// then more patients, then a seeded uniform draw.
    #[default]
    TowardTarget,
    /// Seeded uniform draw among the tied cells.
    Random,
}

/// Design and conduct parameters.
///
/// `lambda_e`/`lambda_d` are derived from `(phi, phi1, phi2)` and are never read
/// back from a config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignConfig")]
pub struct DesignParams {
    pub phi: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub lambda_e: f64,
    pub lambda_d: f64,
    /// Elimination cutoff on `Pr(pi > phi | data)`.
    pub epsilon: f64,
    /// Optional stricter cutoff applied only at the starting combination.
    pub start_epsilon: Option<f64>,
    /// The elimination rule is evaluated only once this many patients are treated at a cell.
    pub min_n_eliminate: u32,
    pub cohort_size: u32,
    pub max_cohorts: u32,
    /// Stop once this many patients are at the current cell and the decision is to stay.
    /// `None` disables the convergence stop.
    pub earlystop_n: Option<u32>,
    pub design: Design,
    pub prior_a: f64,
    pub prior_b: f64,
    pub require_mtc_below_lambda_d: bool,
    pub mtc_tie_rule: MtcTieRule,
}

/// Deserialization form of [`DesignParams`]: every field but `phi` is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub phi: f64,
    pub phi1: Option<f64>,
    pub phi2: Option<f64>,
    #[serde(default)]
    pub lambda_e: Option<f64>,
    #[serde(default)]
    pub lambda_d: Option<f64>,
    pub epsilon: Option<f64>,
    pub start_epsilon: Option<f64>,
    pub min_n_eliminate: Option<u32>,
    pub cohort_size: Option<u32>,
    pub max_cohorts: Option<u32>,
    #[serde(default = "default_earlystop")]
    pub earlystop_n: Option<u32>,
    pub design: Option<Design>,
    pub prior_a: Option<f64>,
    pub prior_b: Option<f64>,
    pub require_mtc_below_lambda_d: Option<bool>,
    pub mtc_tie_rule: Option<MtcTieRule>,
}

fn default_earlystop() -> Option<u32> {
    Some(9)
}

impl TryFrom<DesignConfig> for DesignParams {
    type Error = crate::Error;
    fn try_from(c: DesignConfig) -> Result<Self> {
        let mut p = DesignParams::with_thresholds(
            c.phi,
            c.phi1.unwrap_or(0.6 * c.phi),
            c.phi2.unwrap_or(1.4 * c.phi),
        )?;
        if let Some(v) = c.epsilon {
            p.epsilon = v;
        }
        p.start_epsilon = c.start_epsilon;
        if let Some(v) = c.min_n_eliminate {
            p.min_n_eliminate = v;
        }
        if let Some(v) = c.cohort_size {
            p.cohort_size = v;
        }
        if let Some(v) = c.max_cohorts {
            p.max_cohorts = v;
        }
        p.earlystop_n = c.earlystop_n;
        if let Some(v) = c.design {
            p.design = v;
        }
        if let Some(v) = c.prior_a {
            p.prior_a = v;
        }
        if let Some(v) = c.prior_b {
            p.prior_b = v;
        }
        if let Some(v) = c.require_mtc_below_lambda_d {
            p.require_mtc_below_lambda_d = v;
        }
        if let Some(v) = c.mtc_tie_rule {
            p.mtc_tie_rule = v;
        }
        p.validate()?;
        Ok(p)
    }
}

impl DesignParams {
    /// Target `phi` with the conventional `phi1 = 0.6 phi`, `phi2 = 1.4 phi`.
    pub fn standard(phi: f64) -> Result<Self> {
        Self::with_thresholds(phi, 0.6 * phi, 1.4 * phi)
    }

    /// Defaults: ε = 0.95, cohorts of 3, at most 15 cohorts, convergence stop at 9,
    /// Beta(1,1) prior, BOIN-CS.
    pub fn with_thresholds(phi: f64, phi1: f64, phi2: f64) -> Result<Self> {
        let (lambda_e, lambda_d) = lambda_boundaries(phi, phi1, phi2)?;
        Ok(DesignParams {
            phi,
            phi1,
            phi2,
            lambda_e,
            lambda_d,
            epsilon: 0.95,
            start_epsilon: None,
            min_n_eliminate: 3,
            cohort_size: 3,
            max_cohorts: 15,
            earlystop_n: Some(9),
            design: Design::BoinCs,
            prior_a: 1.0,
            prior_b: 1.0,
            require_mtc_below_lambda_d: false,
            mtc_tie_rule: MtcTieRule::TowardTarget,
        })
    }

    pub fn with_design(mut self, design: Design) -> Self {
        self.design = design;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.phi1 && self.phi1 < self.phi && self.phi < self.phi2 && self.phi2 < 1.0) {
            return Err(invalid("require 0 < phi1 < phi < phi2 < 1"));
        }
        let (le, ld) = lambda_boundaries(self.phi, self.phi1, self.phi2)?;
        if (le - self.lambda_e).abs() > 1e-12 || (ld - self.lambda_d).abs() > 1e-12 {
            return Err(invalid("lambda_e/lambda_d do not match (phi, phi1, phi2)"));
        }
        if !(self.lambda_e < self.phi && self.phi < self.lambda_d) {
            return Err(invalid("boundaries must satisfy lambda_e < phi < lambda_d"));
        }
        let eps_ok = |e: f64| e > 0.5 && e < 1.0;
        if !eps_ok(self.epsilon) {
            return Err(invalid("epsilon must lie in (0.5, 1)"));
        }
        if let Some(e) = self.start_epsilon {
            if !eps_ok(e) {
                return Err(invalid("start_epsilon must lie in (0.5, 1)"));
            }
        }
        if self.cohort_size == 0 {
            return Err(invalid("cohort_size must be at least 1"));
        }
        if self.max_cohorts == 0 {
            return Err(invalid("max_cohorts must be at least 1"));
        }
        if let Some(n) = self.earlystop_n {
            if n == 0 || n % self.cohort_size != 0 {
                return Err(invalid("earlystop_n must be a positive multiple of cohort_size"));
            }
        }
        if !(self.prior_a > 0.0 && self.prior_b > 0.0) {
            return Err(invalid("Beta prior shapes must be positive"));
        }
        Ok(())
    }

    /// Elimination cutoff in force at `at`.
    pub fn epsilon_at(&self, at: crate::Combo) -> f64 {
        match self.start_epsilon {
            Some(e) if at == crate::Combo::START => e,
            _ => self.epsilon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_fills_defaults_and_derives_boundaries() {
        let p: DesignParams = serde_json::from_str(r#"{"phi":0.3,"epsilon":0.9}"#).unwrap();
        assert!((p.lambda_e - 0.2365).abs() < 1e-3);
        assert_eq!(p.epsilon, 0.9);
        assert_eq!(p.earlystop_n, Some(9));
        assert_eq!(p.design, Design::BoinCs);
    }

    #[test]
    fn serialized_params_read_back() {
        let p = DesignParams::standard(0.25).unwrap().with_design(Design::BoinCe);
        let s = serde_json::to_string(&p).unwrap();
        let q: DesignParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_bad_orderings() {
        assert!(DesignParams::with_thresholds(0.3, 0.35, 0.42).is_err());
        let mut p = DesignParams::standard(0.3).unwrap();
        p.epsilon = 0.4;
        assert!(p.validate().is_err());
        p.epsilon = 0.95;
        p.earlystop_n = Some(10);
        assert!(p.validate().is_err());
    }

    #[test]
    fn parses_design_names() {
        assert_eq!("boin-ce".parse::<Design>().unwrap(), Design::BoinCe);
        assert_eq!("BOIN_CB".parse::<Design>().unwrap(), Design::BoinCb);
        assert!("crm".parse::<Design>().is_err());
    }
}
