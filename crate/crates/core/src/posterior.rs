//! Conjugate Beta posterior for a single combination's DLT probability.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut acc = COEF[0];
    for (k, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - beta_inc_cf(b, a, 1.0 - x)
    } else {
        beta_inc_cf(a, b, x)
    }
}

// Continued fraction for I_x(a,b), modified Lentz.
fn beta_inc_cf(a: f64, b: f64, x: f64) -> f64 {
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    front * h
}

/// Posterior `Beta(a, b)` for a combination's DLT probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub a: f64,
    pub b: f64,
}

impl BetaPosterior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(domain(format!("Beta shapes must be positive, got ({a}, {b})")));
        }
        Ok(BetaPosterior { a, b })
    }

    /// Posterior after `y` DLTs in `n` patients under a `Beta(prior_a, prior_b)` prior.
    pub fn from_counts(n: u32, y: u32, prior_a: f64, prior_b: f64) -> Result<Self> {
        if y > n {
            return Err(domain(format!("{y} DLTs exceed {n} patients")));
        }
        Self::new(prior_a + y as f64, prior_b + (n - y) as f64)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_inc(self.a, self.b, x)
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// `Pr(lo < pi < hi)`.
    pub fn interval_prob(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(domain(format!("invalid interval ({lo}, {hi})")));
        }
        Ok((self.cdf(hi) - self.cdf(lo)).max(0.0))
    }

    /// `Pr(pi > phi)`.
    pub fn overdose_prob(&self, phi: f64) -> f64 {
        1.0 - self.cdf(phi)
    }
}
