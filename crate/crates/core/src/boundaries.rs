//! Escalation/de-escalation boundaries and the pre-tabulated decision table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::params::DesignParams;
use crate::posterior::BetaPosterior;

/// Absolute tolerance used when comparing an observed rate to a boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `(lambda_e, lambda_d)` for target `phi`, under-dosing `phi1`, overdosing `phi2`.
pub fn lambda_boundaries(phi: f64, phi1: f64, phi2: f64) -> Result<(f64, f64)> {
    if !(0.0 < phi1 && phi1 < phi && phi < phi2 && phi2 < 1.0) {
        return Err(domain(format!(
            "require 0 < phi1 < phi < phi2 < 1, got ({phi1}, {phi}, {phi2})"
        )));
    }
    let lambda_e = ((1.0 - phi1) / (1.0 - phi)).ln() / ((phi * (1.0 - phi1)) / (phi1 * (1.0 - phi))).ln();
    let lambda_d = ((1.0 - phi) / (1.0 - phi2)).ln() / ((phi2 * (1.0 - phi)) / (phi * (1.0 - phi2))).ln();
    Ok((lambda_e, lambda_d))
}

/// Interval call on the observed rate at a single combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalCall {
    Escalate,
    Stay,
    Deescalate,
}

/// Escalate iff `y/n <= lambda_e`, de-escalate iff `y/n > lambda_d`, else stay.
pub fn classify(y: u32, n: u32, lambda_e: f64, lambda_d: f64) -> IntervalCall {
    debug_assert!(n > 0);
    let rate = y as f64 / n as f64;
    if rate <= lambda_e + BOUNDARY_TOL {
        IntervalCall::Escalate
    } else if rate > lambda_d + BOUNDARY_TOL {
        IntervalCall::Deescalate
    } else {
        IntervalCall::Stay
    }
}

/// Whether `y` DLTs in `n` patients trigger elimination under `params` at cutoff `epsilon`.
pub fn eliminates(y: u32, n: u32, params: &DesignParams, epsilon: f64) -> bool {
    if n < params.min_n_eliminate || n == 0 {
        return false;
    }
    BetaPosterior::from_counts(n, y, params.prior_a, params.prior_b)
        .map(|p| p.overdose_prob(params.phi) >= epsilon)
        .unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub n: u32,
    pub escalate_if_y_le: u32,
    pub deescalate_if_y_ge: u32,
    pub eliminate_if_y_ge: Option<u32>,
}

impl DecisionRow {
    pub fn call(&self, y: u32) -> IntervalCall {
        if y <= self.escalate_if_y_le {
            IntervalCall::Escalate
        } else if y >= self.deescalate_if_y_ge {
            IntervalCall::Deescalate
        } else {
            IntervalCall::Stay
        }
    }

    pub fn eliminates(&self, y: u32) -> bool {
        self.eliminate_if_y_ge.is_some_and(|t| y >= t)
    }
}

/// Per-`n` integer thresholds equivalent to the interval rule plus elimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub lambda_e: f64,
    pub lambda_d: f64,
    pub rows: Vec<DecisionRow>,
}

pub fn decision_table(params: &DesignParams, n_max: u32) -> Result<DecisionTable> {
    if n_max < params.cohort_size {
        return Err(domain(format!(
            "n_max = {n_max} is below the cohort size {}",
            params.cohort_size
        )));
    }
    let (le, ld) = (params.lambda_e, params.lambda_d);
    let rows = (1..=n_max)
        .map(|n| {
            let calls: Vec<IntervalCall> = (0..=n).map(|y| classify(y, n, le, ld)).collect();
            let escalate_if_y_le = calls
                .iter()
                .rposition(|c| *c == IntervalCall::Escalate)
                .expect("y = 0 always escalates") as u32;
            let deescalate_if_y_ge = calls
                .iter()
                .position(|c| *c == IntervalCall::Deescalate)
                .expect("y = n always de-escalates") as u32;
            let eliminate_if_y_ge = (0..=n).find(|&y| eliminates(y, n, params, params.epsilon));
            DecisionRow {
                n,
                escalate_if_y_le,
                deescalate_if_y_ge,
                eliminate_if_y_ge,
            }
        })
        .collect();
    Ok(DecisionTable {
        lambda_e: le,
        lambda_d: ld,
        rows,
    })
}

impl DecisionTable {
    pub fn row(&self, n: u32) -> Option<&DecisionRow> {
        self.rows.get((n as usize).checked_sub(1)?)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lambda_e = {:.4}, lambda_d = {:.4}", self.lambda_e, self.lambda_d);
        let _ = writeln!(s, "{:>4}  {:>12}  {:>14}  {:>13}", "n", "escalate y<=", "de-escalate y>=", "eliminate y>=");
        for r in &self.rows {
            let elim = r.eliminate_if_y_ge.map_or_else(|| "NA".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{:>4}  {:>12}  {:>15}  {:>13}",
                r.n, r.escalate_if_y_le, r.deescalate_if_y_ge, elim
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,escalate_if_y_le,deescalate_if_y_ge,eliminate_if_y_ge\n");
        for r in &self.rows {
            let elim = r.eliminate_if_y_ge.map_or_else(String::new, |v| v.to_string());
            let _ = writeln!(s, "{},{},{},{}", r.n, r.escalate_if_y_le, r.deescalate_if_y_ge, elim);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn phi3() -> DesignParams {
        DesignParams::standard(0.3).unwrap()
    }

    #[test]
    fn standard_boundaries() {
        let (le, ld) = lambda_boundaries(0.30, 0.18, 0.42).unwrap();
        assert_eq!(format!("{le:.3}"), "0.236");
        assert_eq!(format!("{ld:.3}"), "0.359");
    }

    #[test]
    fn boundaries_against_high_precision_values() {
        // 50-digit evaluations of the two log-ratio formulas
        let (le, ld) = lambda_boundaries(0.20, 0.12, 0.28).unwrap();
        assert!((le - 0.157_242_286_700_307_554_481_6).abs() < 1e-14);
        assert!((ld - 0.238_462_438_817_315_031_238_2).abs() < 1e-14);
        let (le, ld) = lambda_boundaries(0.30, 0.18, 0.42).unwrap();
        assert!((le - 0.236_490_685_236_467_994_760_8).abs() < 1e-14);
        assert!((ld - 0.358_519_464_640_929_839_181_6).abs() < 1e-14);
    }

    #[test]
    fn lower_boundary_tends_to_target() {
        let (le, _) = lambda_boundaries(0.3, 0.3 - 1e-8, 0.42).unwrap();
        assert!((le - 0.3).abs() < 1e-6);
    }

    #[test]
    fn rejects_misordered_thresholds() {
        assert!(lambda_boundaries(0.3, 0.3, 0.42).is_err());
        assert!(lambda_boundaries(0.3, 0.18, 1.0).is_err());
    }

    #[test]
    fn table_rows_for_cohorts_of_three() {
        let t = decision_table(&phi3(), 9).unwrap();
        let r3 = t.row(3).unwrap();
        assert_eq!((r3.escalate_if_y_le, r3.deescalate_if_y_ge, r3.eliminate_if_y_ge), (0, 2, Some(3)));
        assert_eq!(t.row(9).unwrap().call(3), IntervalCall::Stay);
        assert_eq!(t.row(1).unwrap().call(0), IntervalCall::Escalate);
        assert_eq!(t.row(1).unwrap().eliminate_if_y_ge, None);
        assert_eq!(t.row(2).unwrap().eliminate_if_y_ge, None, "min_n_eliminate = 3");
    }

    #[test]
    fn table_rejects_small_nmax() {
        assert!(decision_table(&phi3(), 2).is_err());
    }

    #[test]
    fn csv_has_one_line_per_n() {
        let t = decision_table(&phi3(), 12).unwrap();
        assert_eq!(t.to_csv().lines().count(), 13);
        assert!(t.to_text().contains("eliminate"));
    }

    proptest! {
        #[test]
        fn thresholds_nondecreasing_in_n(phi in 0.1f64..0.45) {
            let p = DesignParams::standard(phi).unwrap();
            let t = decision_table(&p, 30).unwrap();
            for w in t.rows.windows(2) {
                prop_assert!(w[0].escalate_if_y_le <= w[1].escalate_if_y_le);
                prop_assert!(w[0].deescalate_if_y_ge <= w[1].deescalate_if_y_ge);
            }
            for r in &t.rows {
                prop_assert!(r.escalate_if_y_le < r.deescalate_if_y_ge);
                if let Some(e) = r.eliminate_if_y_ge {
                    prop_assert!(e >= r.deescalate_if_y_ge);
                }
                for y in 0..=r.n {
                    let rate = y as f64 / r.n as f64;
                    let direct = if rate <= p.lambda_e {
                        IntervalCall::Escalate
                    } else if rate > p.lambda_d {
                        IntervalCall::Deescalate
                    } else {
                        IntervalCall::Stay
                    };
                    prop_assert_eq!(r.call(y), direct);
                }
            }
        }
    }
}
