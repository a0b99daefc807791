//! Edge-balanced bargaining dynamics with a fixed matching.
//!
//! Every matched player `i` with partner `p` moves toward the Nash split of
//! the current surplus over outside options:
//!
//! ```text
//! x_i(t+1) = x_i + alpha * ( clamp(y_i + (w - y_i - y_p)/2, 0, w) - x_i )
//! ```
//!
//! where `y_l` is the best alternate of player `l` at time `t`. All players
//! update simultaneously from the time-`t` state. Unmatched and pinned
//! nodes keep their value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{outside_option, sup_distance, Market, ProfitState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("horizon must be at least 1")]
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub horizon: usize,
}

impl DynamicsConfig {
    pub fn new(alpha: f64, epsilon: f64, horizon: usize) -> Result<Self, ConfigError> {
        check_alpha(alpha)?;
        if !(epsilon > 0.0) {
            return Err(ConfigError::Epsilon(epsilon));
        }
        if horizon == 0 {
            return Err(ConfigError::Horizon);
        }
        Ok(DynamicsConfig {
            alpha,
            epsilon,
            horizon,
        })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), ConfigError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(ConfigError::Alpha(alpha))
    }
}

/// Sampled orbit `x(0), x(1), ..., x(steps_taken)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub converged: bool,
    pub steps_taken: usize,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Result of a simulation that did not keep the orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_state: Vec<f64>,
    pub converged: bool,
    pub steps_taken: usize,
}

/// One synchronous step of the edge-balanced dynamics.
pub fn step(market: &Market, x: &ProfitState, alpha: f64) -> ProfitState {
    let mut out = x.values().to_vec();
    step_into(market, x.values(), alpha, &mut out);
    ProfitState::from_vec_unchecked(out)
}

/// Writes the successor of `x` into `out` (`out` must have the same length).
pub(crate) fn step_into(market: &Market, x: &[f64], alpha: f64, out: &mut [f64]) {
    let n = market.node_count();
    // every best alternate is read from the old state before anything moves
    let alternates: Vec<f64> = (0..n)
        .map(|i| match market.partner(i) {
            Some(_) => outside_option(market.unmatched_incident(i), x),
            None => 0.0,
        })
        .collect();
    for i in 0..n {
        out[i] = match market.partner(i) {
            Some(p) => {
                let w = market.matched_weight(i);
                let (yi, yp) = (alternates[i], alternates[p]);
                let target = (yi + 0.5 * (w - yi - yp)).max(0.0).min(w);
                x[i] + alpha * (target - x[i])
            }
            None => x[i],
        };
    }
}

/// Iterates [`step`] until successive states differ by at most `epsilon`
/// in sup-norm, or the horizon is reached. `observe` sees every state,
/// starting with `x0`.
pub fn simulate_observed<F>(
    market: &Market,
    x0: &ProfitState,
    cfg: &DynamicsConfig,
    mut observe: F,
) -> RunSummary
where
    F: FnMut(usize, &[f64]),
{
    let mut current = x0.values().to_vec();
    let mut next = current.clone();
    observe(0, &current);
    let mut converged = false;
    let mut steps = 0;
    while steps < cfg.horizon {
        step_into(market, &current, cfg.alpha, &mut next);
        steps += 1;
        let diff = sup_distance(&current, &next);
        std::mem::swap(&mut current, &mut next);
        observe(steps, &current);
        if diff <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    RunSummary {
        final_state: current,
        converged,
        steps_taken: steps,
    }
}

/// Full trajectory of the dynamics. Hitting the horizon is not an error;
/// it is reported through `converged = false`.
pub fn simulate(market: &Market, x0: &ProfitState, cfg: &DynamicsConfig) -> Trajectory {
    let mut states = Vec::new();
    let summary = simulate_observed(market, x0, cfg, |_, x| states.push(x.to_vec()));
    Trajectory {
        states,
        converged: summary.converged,
        steps_taken: summary.steps_taken,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("residuals are already below the floor at t = 0")]
    AtFixedPoint,
    #[error("residuals do not decrease over the fitted window")]
    InsufficientDecay,
    #[error("only {found} residual samples above the floor in the fit window (need {needed})")]
    TooFewSamples { found: usize, needed: usize },
    #[error("reference state has {found} entries, trajectory has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Least-squares fit of `ln r(t) = c - R t` over the tail window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// Empirical rate `R`.
    pub rate: f64,
    pub intercept: f64,
    pub window_start: usize,
    pub window_end: usize,
    /// Root-mean-square deviation of `ln r` from the fitted line.
    pub rms_log_residual: f64,
}

impl RateFit {
    pub fn time(&self) -> f64 {
        1.0 / self.rate
    }
}

pub const MIN_TAIL_SAMPLES: usize = 10;

/// Samples at or below this value are treated as rounding noise.
pub fn residual_floor(w_max: f64) -> f64 {
    100.0 * f64::EPSILON * w_max.max(f64::MIN_POSITIVE)
}

/// Fits the exponential decay rate of a residual sequence.
///
/// Samples from the first one at or below `floor` onward are discarded;
/// the fit uses the last half of what remains.
pub fn fit_decay_rate(residuals: &[f64], floor: f64) -> Result<RateFit, RateError> {
    if residuals.first().is_none_or(|&r| r <= floor) {
        return Err(RateError::AtFixedPoint);
    }
    let usable = residuals
        .iter()
        .position(|&r| !(r > floor))
        .unwrap_or(residuals.len());
    let start = usable / 2;
    let count = usable - start;
    if count < MIN_TAIL_SAMPLES {
        return Err(RateError::TooFewSamples {
            found: count,
            needed: MIN_TAIL_SAMPLES,
        });
    }

    let points: Vec<(f64, f64)> = (start..usable)
        .map(|t| (t as f64, residuals[t].ln()))
        .collect();
    let k = count as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(t, y)| {
        let dt = t - mean_t;
        (sxy + dt * (y - mean_y), sxx + dt * dt)
    });
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    if !(slope < 0.0) {
        return Err(RateError::InsufficientDecay);
    }
    let rms = (points
        .iter()
        .map(|&(t, y)| {
            let e = y - (intercept + slope * t);
            e * e
        })
        .sum::<f64>()
        / k)
        .sqrt();

    Ok(RateFit {
        rate: -slope,
        intercept,
        window_start: start,
        window_end: usable,
        rms_log_residual: rms,
    })
}

/// Sup-norm distances of every trajectory state to `x_star`.
pub fn residuals(traj: &Trajectory, x_star: &[f64]) -> Result<Vec<f64>, RateError> {
    let dim = traj.states[0].len();
    if x_star.len() != dim {
        return Err(RateError::DimensionMismatch {
            expected: dim,
            found: x_star.len(),
        });
    }
    Ok(traj
        .states
        .iter()
        .map(|s| sup_distance(s, x_star))
        .collect())
}

/// Empirical convergence rate of a trajectory toward `x_star`, with the
/// rounding floor scaled by the largest edge weight `w_max`.
pub fn estimate_rate(traj: &Trajectory, x_star: &[f64], w_max: f64) -> Result<RateFit, RateError> {
    fit_decay_rate(&residuals(traj, x_star)?, residual_floor(w_max))
}
