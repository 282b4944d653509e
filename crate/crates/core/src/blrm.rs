//! Dual-agent Bayesian logistic regression for the toxicity surface, fitted by
//! adaptive random-walk Metropolis. Used only to break ties between candidates.
//!
//! Model, with doses scaled by each drug's top level:
//!
//! ```text
//! logit(pi_ij) = log[ a1 dA^b1 + a2 dB^b2 + a1 a2 dA^b1 dB^b2 ] + eta dA dB
//! (log a_k, log b_k) ~ BVN((logit p_k*, 0), Sigma_k),  eta ~ N(eta_mean, eta_sd^2)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{DoseGrid, SubsetMask};
use crate::posterior::ln_gamma;
use crate::state::TrialState;

const DIM: usize = 5;
const TARGET_ACCEPT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrmParams {
    pub log_alpha1: f64,
    pub log_beta1: f64,
    pub log_alpha2: f64,
    pub log_beta2: f64,
    pub eta: f64,
}

impl BlrmParams {
    fn to_array(self) -> [f64; DIM] {
        [self.log_alpha1, self.log_beta1, self.log_alpha2, self.log_beta2, self.eta]
    }

    fn from_array(v: [f64; DIM]) -> Self {
        BlrmParams {
            log_alpha1: v[0],
            log_beta1: v[1],
            log_alpha2: v[2],
            log_beta2: v[3],
            eta: v[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrmPrior {
    pub mu_alpha_a: f64,
    pub mu_beta_a: f64,
    pub mu_alpha_b: f64,
    pub mu_beta_b: f64,
    /// Covariance of `(log alpha, log beta)` for drug A.
    pub cov_a: [[f64; 2]; 2],
    pub cov_b: [[f64; 2]; 2],
    pub eta_mean: f64,
    pub eta_sd: f64,
}

impl Default for BlrmPrior {
    /// Weakly informative: `p* = 0.33` for both drugs, `Sigma = diag(2, 1)`, `eta ~ N(0, 1.121^2)`.
    fn default() -> Self {
        BlrmPrior::weakly_informative(0.33, 0.33)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

// ln(e^s - 1) for s > 0
fn ln_expm1(s: f64) -> f64 {
    if s > 35.0 {
        s + (-(-s).exp()).ln_1p()
    } else {
        s.exp_m1().ln()
    }
}

impl BlrmPrior {
    pub fn weakly_informative(p_star_a: f64, p_star_b: f64) -> Self {
        BlrmPrior {
            mu_alpha_a: logit(p_star_a),
            mu_beta_a: 0.0,
            mu_alpha_b: logit(p_star_b),
            mu_beta_b: 0.0,
            cov_a: [[2.0, 0.0], [0.0, 1.0]],
            cov_b: [[2.0, 0.0], [0.0, 1.0]],
            eta_mean: 0.0,
            eta_sd: 1.121,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for cov in [&self.cov_a, &self.cov_b] {
            let sym = (cov[0][1] - cov[1][0]).abs() < 1e-12;
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            if !sym || cov[0][0] <= 0.0 || det <= 0.0 {
                return Err(invalid("prior covariance must be symmetric positive definite"));
            }
        }
        if !(self.eta_sd > 0.0) {
            return Err(invalid("eta_sd must be positive"));
        }
        Ok(())
    }

    pub fn mean(&self) -> BlrmParams {
        BlrmParams {
            log_alpha1: self.mu_alpha_a,
            log_beta1: self.mu_beta_a,
            log_alpha2: self.mu_alpha_b,
            log_beta2: self.mu_beta_b,
            eta: self.eta_mean,
        }
    }

    /// The same prior with the two drugs exchanged.
    pub fn swapped(&self) -> Self {
        BlrmPrior {
            mu_alpha_a: self.mu_alpha_b,
            mu_beta_a: self.mu_beta_b,
            mu_alpha_b: self.mu_alpha_a,
            mu_beta_b: self.mu_beta_a,
            cov_a: self.cov_b,
            cov_b: self.cov_a,
            eta_mean: self.eta_mean,
            eta_sd: self.eta_sd,
        }
    }

    pub fn log_density(&self, p: &BlrmParams) -> f64 {
        bvn_log_density([p.log_alpha1, p.log_beta1], [self.mu_alpha_a, self.mu_beta_a], &self.cov_a)
            + bvn_log_density([p.log_alpha2, p.log_beta2], [self.mu_alpha_b, self.mu_beta_b], &self.cov_b)
            + normal_log_density(p.eta, self.eta_mean, self.eta_sd)
    }

    /// Prior marginal standard deviations, used to seed the proposal.
    fn scales(&self) -> [f64; DIM] {
        [
            self.cov_a[0][0].sqrt(),
            self.cov_a[1][1].sqrt(),
            self.cov_b[0][0].sqrt(),
            self.cov_b[1][1].sqrt(),
            self.eta_sd,
        ]
    }
}

fn bvn_log_density(x: [f64; 2], mu: [f64; 2], cov: &[[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let d0 = x[0] - mu[0];
    let d1 = x[1] - mu[1];
    let quad = (cov[1][1] * d0 * d0 - 2.0 * cov[0][1] * d0 * d1 + cov[0][0] * d1 * d1) / det;
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad
}

fn normal_log_density(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z
}

/// Doses divided by each drug's highest level.
pub fn dose_rescale(grid: &DoseGrid) -> (Vec<f64>, Vec<f64>) {
    let top_a = *grid.levels_a().last().expect("nonempty");
    let top_b = *grid.levels_b().last().expect("nonempty");
    (
        grid.levels_a().iter().map(|d| d / top_a).collect(),
        grid.levels_b().iter().map(|d| d / top_b).collect(),
    )
}

/// Model logit at one pair of scaled doses.
pub fn logit_tox(p: &BlrmParams, dose_a: f64, dose_b: f64) -> f64 {
    let lo1 = p.log_alpha1 + p.log_beta1.exp() * dose_a.ln();
    let lo2 = p.log_alpha2 + p.log_beta2.exp() * dose_b.ln();
    ln_expm1(softplus(lo1) + softplus(lo2)) + p.eta * dose_a * dose_b
}

fn inv_logit(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// Row-major surface of DLT probabilities at every pair of scaled doses.
pub fn tox_surface(p: &BlrmParams, scaled_a: &[f64], scaled_b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(scaled_a.len() * scaled_b.len());
    for &a in scaled_a {
        for &b in scaled_b {
            out.push(inv_logit(logit_tox(p, a, b)));
        }
    }
    out
}

fn ln_choose(n: u32, k: u32) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Treated cells as `(scaled_a, scaled_b, n, y, ln C(n, y))`.
#[derive(Debug, Clone)]
struct Observations {
    cells: Vec<(f64, f64, u32, u32, f64)>,
}

impl Observations {
    fn collect(data: &TrialState, grid: &DoseGrid, mask: &SubsetMask) -> Self {
        let (sa, sb) = dose_rescale(grid);
        let cells = mask
            .combos()
            .filter(|&c| data.n_at(c) > 0)
            .map(|c| {
                let (n, y) = (data.n_at(c), data.y_at(c));
                (sa[c.i - 1], sb[c.j - 1], n, y, ln_choose(n, y))
            })
            .collect();
        Observations { cells }
    }

    fn log_likelihood(&self, p: &BlrmParams) -> f64 {
        self.cells
            .iter()
            .map(|&(a, b, n, y, lc)| {
                let l = logit_tox(p, a, b);
                // ln pi = -softplus(-l), ln(1 - pi) = -softplus(l)
                lc - y as f64 * softplus(-l) - (n - y) as f64 * softplus(l)
            })
            .sum()
    }
}

/// Binomial log-likelihood over treated masked cells plus the log prior density.
pub fn log_posterior(params: &BlrmParams, prior: &BlrmPrior, data: &TrialState, grid: &DoseGrid, mask: &SubsetMask) -> f64 {
    Observations::collect(data, grid, mask).log_likelihood(params) + prior.log_density(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub draws: usize,
    /// Initial multiplier on the prior-scaled proposal.
    pub proposal_scale: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 2000,
            draws: 4000,
            proposal_scale: 2.38 / (DIM as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrmDiagnostics {
    pub acceptance_rate: f64,
    /// Smallest per-parameter effective sample size among kept draws.
    pub effective_draws: f64,
    pub final_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrmFit {
    pub draws: Vec<BlrmParams>,
    /// Row-major posterior mean DLT probability.
    pub mean_surface: Vec<f64>,
    pub diagnostics: BlrmDiagnostics,
}

// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(m: &[[f64; DIM]; DIM]) -> Option<[[f64; DIM]; DIM]> {
    let mut l = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn empirical_cov(samples: &[[f64; DIM]]) -> [[f64; DIM]; DIM] {
    let n = samples.len() as f64;
    let mut mean = [0.0; DIM];
    for s in samples {
        for d in 0..DIM {
            mean[d] += s[d] / n;
        }
    }
    let mut cov = [[0.0; DIM]; DIM];
    for s in samples {
        for a in 0..DIM {
            for b in 0..DIM {
                cov[a][b] += (s[a] - mean[a]) * (s[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    cov
}

/// Geyer initial-positive-sequence effective sample size.
fn effective_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| {
        (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum)).min(n as f64)
}

/// Posterior draws and posterior mean surface. Deterministic in `seed`.
pub fn fit(
    prior: &BlrmPrior,
    data: &TrialState,
    grid: &DoseGrid,
    mask: &SubsetMask,
    config: &McmcConfig,
    seed: u64,
) -> Result<BlrmFit> {
    prior.validate()?;
    if config.draws == 0 {
        return Err(invalid("MCMC draws must be at least 1"));
    }
    let obs = Observations::collect(data, grid, mask);
    let target = |p: &[f64; DIM]| {
        let params = BlrmParams::from_array(*p);
        obs.log_likelihood(&params) + prior.log_density(&params)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x = prior.mean().to_array();
    let mut lp = target(&x);
    let mut restarts = 0;
    while !lp.is_finite() {
        restarts += 1;
        if restarts > 50 {
            return Err(Error::Fit("log-posterior is not finite near the prior mean".into()));
        }
        let scales = prior.scales();
        let mean = prior.mean().to_array();
        for d in 0..DIM {
            let z: f64 = rng.sample(StandardNormal);
            x[d] = mean[d] + 0.1 * scales[d] * z;
        }
        lp = target(&x);
    }

    let mut chol = [[0.0; DIM]; DIM];
    for (d, s) in prior.scales().iter().enumerate() {
        chol[d][d] = *s;
    }
    let mut log_scale = config.proposal_scale.ln();
    let total = config.burn_in + config.draws;
    let mut burn_samples: Vec<[f64; DIM]> = Vec::with_capacity(config.burn_in);
    let mut draws = Vec::with_capacity(config.draws);
    let mut accepted_kept = 0usize;
    let cov_update_at = config.burn_in / 2;

    for iter in 0..total {
        let scale = log_scale.exp();
        let mut z = [0.0; DIM];
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut prop = x;
        for a in 0..DIM {
            let mut step = 0.0;
            for b in 0..=a {
                step += chol[a][b] * z[b];
            }
            prop[a] += scale * step;
        }
        let lp_prop = target(&prop);
        let log_ratio = lp_prop - lp;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.random();
        let accepted = u < accept_prob;
        if accepted {
            x = prop;
            lp = lp_prop;
        }

        if iter < config.burn_in {
            let gain = 1.0 / ((iter + 1) as f64 / 50.0 + 1.0).powf(0.6);
            log_scale += gain * (accept_prob - TARGET_ACCEPT);
            burn_samples.push(x);
            if iter + 1 == cov_update_at && cov_update_at >= 200 {
                let mut cov = empirical_cov(&burn_samples[cov_update_at / 2..]);
                for (d, row) in cov.iter_mut().enumerate() {
                    row[d] += 1e-6;
                }
                if let Some(l) = cholesky(&cov) {
                    chol = l;
                    log_scale = config.proposal_scale.ln();
                }
            }
        } else {
            if accepted {
                accepted_kept += 1;
            }
            draws.push(BlrmParams::from_array(x));
        }
    }

    let (sa, sb) = dose_rescale(grid);
    let mut mean_surface = vec![0.0; grid.len()];
    for d in &draws {
        for (acc, p) in mean_surface.iter_mut().zip(tox_surface(d, &sa, &sb)) {
            *acc += p;
        }
    }
    let k = draws.len() as f64;
    for v in &mut mean_surface {
        *v /= k;
    }
    let effective_draws = (0..DIM)
        .map(|d| {
            let series: Vec<f64> = draws.iter().map(|p| p.to_array()[d]).collect();
            effective_size(&series)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(BlrmFit {
        draws,
        mean_surface,
        diagnostics: BlrmDiagnostics {
            acceptance_rate: accepted_kept as f64 / k,
            effective_draws,
            final_scale: log_scale.exp(),
        },
    })
}

/// Prior and sampler settings used when a design breaks ties with the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlrmContext {
    pub prior: BlrmPrior,
    pub mcmc: McmcConfig,
}
