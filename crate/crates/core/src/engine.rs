//! Dose assignment for the four design variants.
//!
//! Every variant shares the interval rule on the current combination's observed
//! rate; they differ only in how the next combination is picked among the
//! admissible neighbours:
//!
//! * BOIN-C / BOIN-CS: largest posterior probability of lying in `(lambda_e, lambda_d)`,
//!   ties broken uniformly at random.
//! * BOIN-CE: on de-escalation with one untried and one tried neighbour, take the untried one.
//! * BOIN-CB: when a neighbour is untried or the interval probabilities tie, take the
//!   neighbour whose model-based posterior mean toxicity is closest to the target.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blrm::{self, BlrmContext};
use crate::boundaries::{classify, eliminates, IntervalCall};
use crate::error::{invalid, Error, Result};
use crate::grid::{Combo, DoseGrid, SubsetMask};
use crate::params::{Design, DesignParams, TieBreakPolicy};
use crate::posterior::BetaPosterior;
use crate::state::{TrialState, TrialStatus};

/// Interval probabilities closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Escalate,
    Stay,
    Deescalate,
    EliminateAndMove,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    None,
    Random,
    ExploratoryUnvisited,
    Blrm,
}

/// Outcome of one assignment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    /// Combination for the next cohort; `None` only when stopping.
    pub next: Option<Combo>,
    pub candidates: Vec<Combo>,
    /// Interval probability of each candidate, aligned with `candidates`.
    pub scores: Vec<f64>,
    pub tie_break: TieBreak,
    pub rng_draws_consumed: u32,
    /// Combination whose elimination (with everything above it) this step triggered.
    pub eliminated: Option<Combo>,
    /// Model posterior mean toxicity of each candidate when the model broke the tie.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_means: Option<Vec<f64>>,
}

impl Decision {
    fn stay(at: Combo) -> Self {
        Decision {
            action: Action::Stay,
            next: Some(at),
            candidates: Vec::new(),
            scores: Vec::new(),
            tie_break: TieBreak::None,
            rng_draws_consumed: 0,
            eliminated: None,
            model_means: None,
        }
    }

    fn stop(eliminated: Option<Combo>) -> Self {
        Decision {
            action: Action::Stop,
            next: None,
            candidates: Vec::new(),
            scores: Vec::new(),
            tie_break: TieBreak::None,
            rng_draws_consumed: 0,
            eliminated,
            model_means: None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

fn neighbors(design: Design, grid: &DoseGrid, mask: &SubsetMask, at: Combo, dir: Direction) -> Result<Vec<Combo>> {
    match design {
        // full grid: plain index arithmetic
        Design::BoinC => {
            let mut out = Vec::with_capacity(2);
            match dir {
                Direction::Up => {
                    if at.i < grid.rows() {
                        out.push(Combo::new(at.i + 1, at.j));
                    }
                    if at.j < grid.cols() {
                        out.push(Combo::new(at.i, at.j + 1));
                    }
                }
                Direction::Down => {
                    if at.i > 1 {
                        out.push(Combo::new(at.i - 1, at.j));
                    }
                    if at.j > 1 {
                        out.push(Combo::new(at.i, at.j - 1));
                    }
                }
            }
            Ok(out)
        }
        _ => match dir {
            Direction::Up => mask.neighbors_up(at),
            Direction::Down => mask.neighbors_down(at),
        },
    }
}

fn open_neighbors(
    state: &TrialState,
    grid: &DoseGrid,
    mask: &SubsetMask,
    params: &DesignParams,
    dir: Direction,
) -> Result<Vec<Combo>> {
    let mut out = neighbors(params.design, grid, mask, state.current, dir)?;
    out.retain(|c| !state.is_eliminated(*c));
    Ok(out)
}

/// Posterior probability that a combination's DLT rate lies in `(lambda_e, lambda_d)`.
pub fn interval_score(state: &TrialState, params: &DesignParams, c: Combo) -> f64 {
    BetaPosterior::from_counts(state.n_at(c), state.y_at(c), params.prior_a, params.prior_b)
        .and_then(|p| p.interval_prob(params.lambda_e, params.lambda_d))
        .expect("counts and boundaries are validated")
}

fn check_preconditions(state: &TrialState, grid: &DoseGrid, mask: &SubsetMask, params: &DesignParams) -> Result<()> {
    if !state.status.is_running() {
        return Err(Error::State(format!("trial is not running ({:?})", state.status)));
    }
    if !mask.matches(grid) || state.rows != grid.rows() || state.cols != grid.cols() {
        return Err(invalid("state, grid and mask dimensions disagree"));
    }
    if params.design == Design::BoinC && !mask.is_full() {
        return Err(invalid("BOIN-C runs on the full grid; use BOIN-CS for a subset"));
    }
    if state.n_at(state.current) == 0 {
        return Err(Error::State(format!("no patients treated yet at {}", state.current)));
    }
    Ok(())
}

/// Next-cohort decision at the current combination.
///
/// Elimination is checked first; if it fires the trial either stops (starting
/// combination lost, or nowhere safe to go) or is forced down. Otherwise the
/// interval rule picks escalate/stay/de-escalate.
pub fn decide_next<R: Rng + ?Sized>(
    state: &TrialState,
    grid: &DoseGrid,
    mask: &SubsetMask,
    params: &DesignParams,
    blrm_ctx: Option<&BlrmContext>,
    rng: &mut R,
) -> Result<Decision> {
    check_preconditions(state, grid, mask, params)?;
    let cur = state.current;
    let (n, y) = (state.n_at(cur), state.y_at(cur));

    if eliminates(y, n, params, params.epsilon_at(cur)) {
        let after = state.mark_eliminated(mask, cur)?;
        if after.status == TrialStatus::StoppedSafety {
            return Ok(Decision::stop(Some(cur)));
        }
        let candidates = open_neighbors(&after, grid, mask, params, Direction::Down)?;
        if candidates.is_empty() {
            return Ok(Decision::stop(Some(cur)));
        }
        let mut d = choose(&after, grid, mask, params, blrm_ctx, rng, candidates, Direction::Down)?;
        d.action = Action::EliminateAndMove;
        d.eliminated = Some(cur);
        return Ok(d);
    }

    match classify(y, n, params.lambda_e, params.lambda_d) {
        IntervalCall::Stay => Ok(Decision::stay(cur)),
        IntervalCall::Escalate => {
            let candidates = open_neighbors(state, grid, mask, params, Direction::Up)?;
            if candidates.is_empty() {
                return Ok(Decision::stay(cur));
            }
            choose(state, grid, mask, params, blrm_ctx, rng, candidates, Direction::Up)
        }
        IntervalCall::Deescalate => {
            let candidates = open_neighbors(state, grid, mask, params, Direction::Down)?;
            if candidates.is_empty() {
                return Ok(Decision::stay(cur));
            }
            choose(state, grid, mask, params, blrm_ctx, rng, candidates, Direction::Down)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn choose<R: Rng + ?Sized>(
    state: &TrialState,
    grid: &DoseGrid,
    mask: &SubsetMask,
    params: &DesignParams,
    blrm_ctx: Option<&BlrmContext>,
    rng: &mut R,
    candidates: Vec<Combo>,
    dir: Direction,
) -> Result<Decision> {
    let action = match dir {
        Direction::Up => Action::Escalate,
        Direction::Down => Action::Deescalate,
    };
    let scores: Vec<f64> = candidates.iter().map(|&c| interval_score(state, params, c)).collect();
    let mut decision = Decision {
        action,
        next: None,
        candidates: candidates.clone(),
        scores: scores.clone(),
        tie_break: TieBreak::None,
        rng_draws_consumed: 0,
        eliminated: None,
        model_means: None,
    };
    if candidates.len() == 1 {
        decision.next = Some(candidates[0]);
        return Ok(decision);
    }

    let policy = params.design.tie_break();
    if policy == TieBreakPolicy::ExploratoryThenRandom && dir == Direction::Down {
        let (untried, tried): (Vec<Combo>, Vec<Combo>) = candidates.iter().partition(|c| state.n_at(**c) == 0);
        if untried.len() == 1 && tried.len() == 1 {
            decision.next = Some(untried[0]);
            decision.tie_break = TieBreak::ExploratoryUnvisited;
            return Ok(decision);
        }
    }

    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<Combo> = candidates
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s >= best - TIE_TOL)
        .map(|(c, _)| *c)
        .collect();

    if policy == TieBreakPolicy::BlrmGuided {
        let any_untried = candidates.iter().any(|c| state.n_at(*c) == 0);
        if any_untried || tied.len() > 1 {
            let ctx = blrm_ctx.cloned().unwrap_or_default();
            let seed: u64 = rng.random();
            decision.rng_draws_consumed += 1;
            let fit = blrm::fit(&ctx.prior, state, grid, mask, &ctx.mcmc, seed)?;
            let means: Vec<f64> = candidates.iter().map(|&c| fit.mean_surface[grid.index(c)]).collect();
            let dist: Vec<f64> = means.iter().map(|m| (m - params.phi).abs()).collect();
            let closest = dist.iter().copied().fold(f64::INFINITY, f64::min);
            let nearest: Vec<Combo> = candidates
                .iter()
                .zip(&dist)
                .filter(|(_, d)| **d <= closest + TIE_TOL)
                .map(|(c, _)| *c)
                .collect();
            decision.model_means = Some(means);
            decision.tie_break = TieBreak::Blrm;
            decision.next = Some(if nearest.len() == 1 {
                nearest[0]
            } else {
                decision.rng_draws_consumed += 1;
                nearest[rng.random_range(0..nearest.len())]
            });
            return Ok(decision);
        }
    }

    if tied.len() > 1 {
        decision.rng_draws_consumed += 1;
        decision.tie_break = TieBreak::Random;
        decision.next = Some(tied[rng.random_range(0..tied.len())]);
    } else {
        decision.next = Some(tied[0]);
    }
    Ok(decision)
}

/// Apply a decision to the state: elimination, move, and safety stop. No randomness.
pub fn commit(state: &TrialState, mask: &SubsetMask, decision: &Decision) -> Result<TrialState> {
    let mut next = match decision.eliminated {
        Some(c) => state.mark_eliminated(mask, c)?,
        None => state.clone(),
    };
    match (decision.action, decision.next) {
        (Action::Stop, _) => next.status = TrialStatus::StoppedSafety,
        (_, Some(to)) => {
            if !mask.contains(to) || next.is_eliminated(to) {
                return Err(invalid(format!("decision moves to inadmissible {to}")));
            }
            if to != state.current && !to.is_adjacent(state.current) {
                return Err(invalid(format!("decision jumps from {} to {to}", state.current)));
            }
            next.current = to;
        }
        (_, None) => return Err(invalid("non-stop decision without a next combination")),
    }
    Ok(next)
}

/// Whether the interval rule would keep the trial at the current combination.
fn would_stay(state: &TrialState, grid: &DoseGrid, mask: &SubsetMask, params: &DesignParams) -> bool {
    let cur = state.current;
    let n = state.n_at(cur);
    if n == 0 {
        return false;
    }
    match classify(state.y_at(cur), n, params.lambda_e, params.lambda_d) {
        IntervalCall::Stay => true,
        IntervalCall::Escalate => open_neighbors(state, grid, mask, params, Direction::Up).is_ok_and(|v| v.is_empty()),
        IntervalCall::Deescalate => {
            open_neighbors(state, grid, mask, params, Direction::Down).is_ok_and(|v| v.is_empty())
        }
    }
}

/// Stopping rule on a committed state, in precedence order: safety, convergence
/// (enough patients at a combination the rule would keep), exhausted cohorts.
pub fn check_stop(state: &TrialState, grid: &DoseGrid, mask: &SubsetMask, params: &DesignParams) -> Option<TrialStatus> {
    if state.status == TrialStatus::StoppedSafety || state.is_eliminated(Combo::START) {
        return Some(TrialStatus::StoppedSafety);
    }
    if let Some(limit) = params.earlystop_n {
        if state.n_at(state.current) >= limit && would_stay(state, grid, mask, params) {
            return Some(TrialStatus::StoppedConverged);
        }
    }
    if state.cohorts() >= params.max_cohorts {
        return Some(TrialStatus::StoppedMaxN);
    }
    None
}

/// One full conduct step: record the cohort at the current combination, decide,
/// commit, and apply the stopping rule.
#[allow(clippy::too_many_arguments)]
pub fn advance<R: Rng + ?Sized>(
    state: &TrialState,
    grid: &DoseGrid,
    mask: &SubsetMask,
    params: &DesignParams,
    dlt: u32,
    blrm_ctx: Option<&BlrmContext>,
    rng: &mut R,
) -> Result<(TrialState, Decision)> {
    if !state.status.is_running() {
        return Err(Error::State(format!("trial is not running ({:?})", state.status)));
    }
    let treated = state.apply_cohort(mask, state.current, dlt, params.cohort_size)?;
    let decision = decide_next(&treated, grid, mask, params, blrm_ctx, rng)?;
    let next = replay_step(&treated, grid, mask, params, &decision)?;
    Ok((next, decision))
}

/// Commit a recorded decision and apply the stopping rule. Used for replays.
pub fn replay_step(
    treated: &TrialState,
    grid: &DoseGrid,
    mask: &SubsetMask,
    params: &DesignParams,
    decision: &Decision,
) -> Result<TrialState> {
    let mut next = commit(treated, mask, decision)?;
    if let Some(status) = check_stop(&next, grid, mask, params) {
        next.status = status;
    }
    Ok(next)
}

/// What the rule would do at the current combination after each possible DLT
/// count in the next cohort. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePreview {
    pub dlt: u32,
    pub total_n: u32,
    pub total_dlt: u32,
    pub call: IntervalCall,
    pub eliminate: bool,
}

pub fn preview_outcomes(state: &TrialState, params: &DesignParams) -> Vec<OutcomePreview> {
    let cur = state.current;
    (0..=params.cohort_size)
        .map(|dlt| {
            let n = state.n_at(cur) + params.cohort_size;
            let y = state.y_at(cur) + dlt;
            OutcomePreview {
                dlt,
                total_n: n,
                total_dlt: y,
                call: classify(y, n, params.lambda_e, params.lambda_d),
                eliminate: eliminates(y, n, params, params.epsilon_at(cur)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::masks;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(i: usize, j: usize) -> Combo {
        Combo::new(i, j)
    }

    fn with(state: &TrialState, cells: &[(Combo, u32, u32)]) -> TrialState {
        let mut s = state.clone();
        for &(at, n, y) in cells {
            let k = (at.i - 1) * s.cols + (at.j - 1);
            s.n[k] = n;
            s.y[k] = y;
        }
        s
    }

    #[test]
    fn untried_pair_is_a_random_tie() {
        let g = DoseGrid::standard();
        let mask = masks::case_study(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let mut s = with(&TrialState::new(&g), &[(c(1, 1), 3, 0), (c(1, 2), 3, 0), (c(2, 2), 3, 0)]);
        s.current = c(2, 2);
        let mut seen = std::collections::HashSet::new();
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = decide_next(&s, &g, &mask, &p, None, &mut rng).unwrap();
            assert_eq!(d.action, Action::Escalate);
            assert_eq!(d.tie_break, TieBreak::Random);
            assert_eq!(d.candidates, vec![c(3, 2), c(2, 3)]);
            assert!((d.scores[0] - d.scores[1]).abs() < TIE_TOL);
            seen.insert(d.next.unwrap());
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn exploratory_deescalation_prefers_untried() {
        let g = DoseGrid::standard();
        let mask = masks::diagonal_band(&g);
        let p = DesignParams::standard(0.3).unwrap().with_design(Design::BoinCe);
        let mut s = with(
            &TrialState::new(&g),
            &[(c(3, 3), 6, 1), (c(4, 3), 3, 0), (c(4, 4), 3, 2)],
        );
        s.current = c(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = decide_next(&s, &g, &mask, &p, None, &mut rng).unwrap();
        assert_eq!(d.action, Action::Deescalate);
        assert_eq!(d.next, Some(c(3, 4)));
        assert_eq!(d.tie_break, TieBreak::ExploratoryUnvisited);

        // BOIN-CS compares interval probabilities instead
        let cs = p.clone().with_design(Design::BoinCs);
        let d = decide_next(&s, &g, &mask, &cs, None, &mut rng).unwrap();
        let s34 = interval_score(&s, &cs, c(3, 4));
        let s43 = interval_score(&s, &cs, c(4, 3));
        assert_eq!(d.next, Some(if s43 > s34 { c(4, 3) } else { c(3, 4) }));
    }

    #[test]
    fn stays_inside_interval() {
        let g = DoseGrid::standard();
        let mask = masks::case_study(&g);
        let p = DesignParams::standard(0.3).unwrap().with_epsilon(0.9);
        let mut s = with(&TrialState::new(&g), &[(c(3, 4), 9, 3)]);
        s.current = c(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = decide_next(&s, &g, &mask, &p, None, &mut rng).unwrap();
        assert_eq!(d.action, Action::Stay);
        assert_eq!(d.next, Some(c(3, 4)));
        assert_eq!(check_stop(&commit(&s, &mask, &d).unwrap(), &g, &mask, &p), Some(TrialStatus::StoppedConverged));
    }

    #[test]
    fn no_room_to_escalate_means_stay() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let mut s = with(&TrialState::new(&g), &[(c(4, 4), 3, 0)]);
        s.current = c(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = decide_next(&s, &g, &full, &p, None, &mut rng).unwrap();
        assert_eq!(d.action, Action::Stay);
        assert_eq!(d.rng_draws_consumed, 0);
    }

    #[test]
    fn eliminated_neighbours_are_skipped() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let mut s = with(&TrialState::new(&g), &[(c(2, 2), 3, 0)]);
        s.current = c(2, 2);
        s = s.mark_eliminated(&full, c(2, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = decide_next(&s, &g, &full, &p, None, &mut rng).unwrap();
        assert_eq!(d.next, Some(c(3, 2)));
        s = s.mark_eliminated(&full, c(3, 2)).unwrap();
        let d = decide_next(&s, &g, &full, &p, None, &mut rng).unwrap();
        assert_eq!(d.action, Action::Stay);
    }

    #[test]
    fn elimination_forces_deescalation() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let mut s = with(&TrialState::new(&g), &[(c(1, 1), 3, 0), (c(1, 2), 3, 3)]);
        s.current = c(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = decide_next(&s, &g, &full, &p, None, &mut rng).unwrap();
        assert_eq!(d.action, Action::EliminateAndMove);
        assert_eq!(d.eliminated, Some(c(1, 2)));
        assert_eq!(d.next, Some(c(1, 1)));
        let after = commit(&s, &full, &d).unwrap();
        assert!(after.is_eliminated(c(4, 4)) && after.is_eliminated(c(1, 2)));
        assert!(!after.is_eliminated(c(2, 1)));
    }

    #[test]
    fn losing_the_start_stops() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let s = with(&TrialState::new(&g), &[(c(1, 1), 3, 3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = decide_next(&s, &g, &full, &p, None, &mut rng).unwrap();
        assert_eq!(d.action, Action::Stop);
        let after = commit(&s, &full, &d).unwrap();
        assert_eq!(after.status, TrialStatus::StoppedSafety);
        assert!(decide_next(&after, &g, &full, &p, None, &mut rng).is_err());
    }

    #[test]
    fn conservative_start_cutoff() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let mut p = DesignParams::standard(0.3).unwrap();
        // 2/3 at the start: Pr(pi > 0.3) = 0.9163
        let s = with(&TrialState::new(&g), &[(c(1, 1), 3, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_ne!(decide_next(&s, &g, &full, &p, None, &mut rng).unwrap().action, Action::Stop);
        p.start_epsilon = Some(0.9);
        assert_eq!(decide_next(&s, &g, &full, &p, None, &mut rng).unwrap().action, Action::Stop);
    }

    #[test]
    fn boin_c_requires_full_mask() {
        let g = DoseGrid::standard();
        let band = masks::diagonal_band(&g);
        let p = DesignParams::standard(0.3).unwrap().with_design(Design::BoinC);
        let s = with(&TrialState::new(&g), &[(c(1, 1), 3, 0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(decide_next(&s, &g, &band, &p, None, &mut rng).is_err());
    }

    #[test]
    fn decide_requires_data_at_current() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(decide_next(&TrialState::new(&g), &g, &full, &p, None, &mut rng).is_err());
    }

    #[test]
    fn max_cohorts_stop() {
        let g = DoseGrid::standard();
        let full = SubsetMask::full(&g);
        let p = DesignParams::standard(0.3).unwrap();
        let mut s = TrialState::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // one DLT per cohort hovers in the lower-left corner
        for k in 0..15 {
            assert!(s.status.is_running(), "stopped early at cohort {k}");
            let dlt = if k % 2 == 0 { 1 } else { 0 };
            s = advance(&s, &g, &full, &p, dlt, None, &mut rng).unwrap().0;
            if !s.status.is_running() {
                break;
            }
        }
        assert!(!s.status.is_running());
        assert!(s.cohorts() <= 15);
    }

    #[test]
    fn preview_lists_each_count() {
        let g = DoseGrid::standard();
        let mut p = DesignParams::standard(0.3).unwrap();
        let s = with(&TrialState::new(&g), &[(c(1, 1), 6, 1)]);
        let rows = preview_outcomes(&s, &p);
        let calls: Vec<IntervalCall> = rows.iter().map(|r| r.call).collect();
        assert_eq!(
            calls,
            vec![IntervalCall::Escalate, IntervalCall::Escalate, IntervalCall::Stay, IntervalCall::Deescalate]
        );
        p.cohort_size = 1;
        assert_eq!(preview_outcomes(&s, &p).len(), 2);
    }
}
