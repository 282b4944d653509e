//! Reference implementations used as test oracles. Each one is written
//! independently of the crate code it checks.
#![allow(dead_code)]

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

use boincomb::{Combo, IntervalCall};

fn binom(n: u64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for t in 0..k {
        acc = acc * BigInt::from(n - t) / BigInt::from(t + 1);
    }
    acc
}

fn pow(x: &BigRational, k: u64) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// Exact regularized incomplete beta `I_x(a, b)` for integer `a, b >= 1` at a
/// rational point, via the binomial-sum identity.
pub fn beta_cdf_exact(a: u64, b: u64, x: &BigRational) -> BigRational {
    let n = a + b - 1;
    let one_minus = BigRational::one() - x;
    let mut acc = BigRational::zero();
    for k in a..=n {
        acc += BigRational::from_integer(binom(n, k)) * pow(x, k) * pow(&one_minus, n - k);
    }
    acc
}

pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

/// Exact `Pr(pi > phi | y of n)` under a Beta(1, 1) prior, `phi = num/den`.
pub fn overdose_exact(y: u32, n: u32, num: i64, den: i64) -> BigRational {
    let phi = BigRational::new(num.into(), den.into());
    BigRational::one() - beta_cdf_exact(y as u64 + 1, (n - y) as u64 + 1, &phi)
}

/// Exact posterior mass in `(lo, hi)` under Beta(1, 1), endpoints taken exactly
/// as their binary values.
pub fn interval_exact(y: u32, n: u32, lo: f64, hi: f64) -> f64 {
    let (a, b) = (y as u64 + 1, (n - y) as u64 + 1);
    to_f64(&(beta_cdf_exact(a, b, &rational(hi)) - beta_cdf_exact(a, b, &rational(lo))))
}

/// Interval call by direct comparison of the observed rate with the boundaries.
pub fn direct_call(y: u32, n: u32, lambda_e: f64, lambda_d: f64) -> IntervalCall {
    let rate = y as f64 / n as f64;
    if rate <= lambda_e {
        IntervalCall::Escalate
    } else if rate > lambda_d {
        IntervalCall::Deescalate
    } else {
        IntervalCall::Stay
    }
}

/// Every set partition of `0..k`, as block labels.
pub fn set_partitions(k: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, k: usize, labels: &mut Vec<usize>, used: usize, out: &mut Vec<Vec<usize>>) {
        if pos == k {
            out.push(labels.clone());
            return;
        }
        for b in 0..=used {
            labels.push(b);
            rec(pos + 1, k, labels, used.max(b + 1), out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), 0, &mut out);
    out
}

/// Weighted isotonic regression under the componentwise order by exhaustive
/// search: the optimum is constant on blocks at their weighted means, so the
/// best order-respecting block-mean vector is the solution. Returns (fit, sse).
pub fn isotonic_oracle(cells: &[Combo], values: &[f64], weights: &[f64]) -> (Vec<f64>, f64) {
    let k = cells.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for labels in set_partitions(k) {
        let blocks = labels.iter().max().map_or(0, |m| m + 1);
        let mut sum = vec![0.0; blocks];
        let mut wt = vec![0.0; blocks];
        for m in 0..k {
            sum[labels[m]] += weights[m] * values[m];
            wt[labels[m]] += weights[m];
        }
        let fit: Vec<f64> = (0..k).map(|m| sum[labels[m]] / wt[labels[m]]).collect();
        let ordered = (0..k).all(|a| {
            (0..k).all(|b| {
                let below = cells[a].i <= cells[b].i && cells[a].j <= cells[b].j;
                !below || fit[a] <= fit[b] + 1e-12
            })
        });
        if !ordered {
            continue;
        }
        let sse: f64 = (0..k).map(|m| weights[m] * (values[m] - fit[m]).powi(2)).sum();
        if best.as_ref().is_none_or(|(_, s)| sse < *s) {
            best = Some((fit, sse));
        }
    }
    best.expect("the all-in-one partition is always ordered")
}

/// Plain one-dimensional interval design on a ladder of levels.
pub struct Ladder {
    pub n: Vec<u32>,
    pub y: Vec<u32>,
    /// Levels at or above this index are closed.
    pub closed_from: usize,
    pub current: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderMove {
    Up,
    Stay,
    Down,
    /// Close the current level and everything above, then go down one.
    CloseAndDown,
    Stop,
}

pub fn ladder_decision(l: &Ladder, lambda_e: f64, lambda_d: f64, phi_num: i64, phi_den: i64, eps: f64) -> LadderMove {
    let k = l.current;
    let (n, y) = (l.n[k], l.y[k]);
    if n >= 3 && to_f64(&overdose_exact(y, n, phi_num, phi_den)) >= eps {
        return if k == 0 { LadderMove::Stop } else { LadderMove::CloseAndDown };
    }
    let rate = y as f64 / n as f64;
    if rate <= lambda_e && k + 1 < l.closed_from {
        LadderMove::Up
    } else if rate > lambda_d && k > 0 {
        LadderMove::Down
    } else {
        LadderMove::Stay
    }
}
