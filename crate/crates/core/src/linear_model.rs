//! Linear systems `v(t+1) = A v(t) + b` followed by the reduced dynamics of
//! the elementary graphs.
//!
//! Paths and cycles are linear from the start. Blossoms and bicycles are
//! linear once each gateway settles on one of its two loop neighbours; the
//! branch taken is a [`LoopCase`]. Every model is stored both at `alpha = 1`
//! (`base_a`, `base_b`) and shifted to `A = (1 - alpha) I + alpha A0`,
//! `b = alpha b0`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dynamics::{self, check_alpha, ConfigError, DynamicsConfig, Trajectory};
use crate::elementary::{ElementaryInstance, ElementarySpec, SpecError};
use crate::graph::{sup_distance, ProfitState};
use crate::linalg::{self, LinalgError, Matrix, Vector};

/// Branch taken at a gateway.
///
/// Case 1 couples the gateway's matched edge to the loop with `+1/2` and
/// contributes nothing to `b`; case 2 couples with `-1/2` and adds `1/2`
/// to `b`. For a blossom (and loop 2 of a bicycle) case 1 is
/// `1 - y_1 >= y_m`. Loop 1 of a bicycle is read in the direction seen
/// from the cross-bar, so its case 1 is `z_l >= 1 - z_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LoopCase {
    Case1,
    Case2,
}

impl LoopCase {
    pub fn from_flag(case1: bool) -> Self {
        if case1 {
            LoopCase::Case1
        } else {
            LoopCase::Case2
        }
    }

    fn number(self) -> u8 {
        match self {
            LoopCase::Case1 => 1,
            LoopCase::Case2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelFamily {
    Path,
    Cycle,
    Blossom(LoopCase),
    Bicycle(LoopCase, LoopCase),
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFamily::Path => write!(f, "path"),
            ModelFamily::Cycle => write!(f, "cycle"),
            ModelFamily::Blossom(c) => write!(f, "blossom_case{}", c.number()),
            ModelFamily::Bicycle(c1, c2) => {
                write!(f, "bicycle_case{}{}", c1.number(), c2.number())
            }
        }
    }
}

impl Serialize for ModelFamily {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("expected {expected} loop cases, got {found}")]
    CaseCount { expected: usize, found: usize },
    #[error("vector has dimension {found}, model has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("I - A is singular (smallest pivot {pivot:e}); the limit depends on the initial state")]
    SingularSystem { pivot: f64 },
    #[error("model is not an elementary-graph model: {0}")]
    Linalg(LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub family: ModelFamily,
    pub alpha: f64,
    pub base_a: Matrix,
    pub base_b: Vector,
    pub a: Matrix,
    pub b: Vector,
}

/// Tridiagonal matrix of a path: `1/2` on both off-diagonals.
pub fn path_matrix(n: usize) -> Matrix {
    let mut t = Matrix::zeros(n, n);
    write_path_block(&mut t, 0, n);
    t
}

fn write_path_block(a: &mut Matrix, offset: usize, len: usize) {
    for i in 0..len.saturating_sub(1) {
        a[(offset + i, offset + i + 1)] = 0.5;
        a[(offset + i + 1, offset + i)] = 0.5;
    }
}

impl LinearModel {
    fn from_base(family: ModelFamily, base_a: Matrix, base_b: Vector, alpha: f64) -> Result<Self, ModelError> {
        check_alpha(alpha)?;
        let dim = base_a.nrows();
        let a = Matrix::identity(dim, dim) * (1.0 - alpha) + &base_a * alpha;
        let b = &base_b * alpha;
        Ok(LinearModel {
            family,
            alpha,
            base_a,
            base_b,
            a,
            b,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Model of an elementary instance; `cases` holds one entry per loop
    /// and is ignored for paths and cycles.
    pub fn for_spec(spec: &ElementarySpec, cases: &[LoopCase], alpha: f64) -> Result<Self, ModelError> {
        spec.check()?;
        let expect_cases = |k: usize| {
            if cases.len() == k {
                Ok(())
            } else {
                Err(ModelError::CaseCount {
                    expected: k,
                    found: cases.len(),
                })
            }
        };
        match *spec {
            ElementarySpec::Path { n, x_plus, x_minus } => build_path(n, x_plus, x_minus, alpha),
            ElementarySpec::Cycle { n } => build_cycle(n, alpha),
            ElementarySpec::Blossom { n, m } => {
                expect_cases(1)?;
                build_blossom(n, m, cases[0], alpha)
            }
            ElementarySpec::Bicycle { l, n, m } => {
                expect_cases(2)?;
                build_bicycle(l, n, m, (cases[0], cases[1]), alpha)
            }
        }
    }
}

fn invalid(kind: &'static str, reason: &str) -> ModelError {
    ModelError::Spec(SpecError::SpecInvariantViolation {
        kind,
        reason: reason.to_string(),
    })
}

/// Path of `n` matched edges between anchors `x_plus` and `x_minus`.
pub fn build_path(n: usize, x_plus: f64, x_minus: f64, alpha: f64) -> Result<LinearModel, ModelError> {
    if n < 1 {
        return Err(invalid("path", "path needs n >= 1"));
    }
    let a0 = path_matrix(n);
    let mut b0 = Vector::zeros(n);
    b0[0] += (1.0 - x_plus) / 2.0;
    b0[n - 1] += x_minus / 2.0;
    LinearModel::from_base(ModelFamily::Path, a0, b0, alpha)
}

/// Even alternating cycle of `n` matched edges (circulant, `b = 0`).
pub fn build_cycle(n: usize, alpha: f64) -> Result<LinearModel, ModelError> {
    if n < 2 {
        return Err(invalid("cycle", "cycle needs n >= 2"));
    }
    let mut a0 = Matrix::zeros(n, n);
    for i in 0..n {
        a0[(i, (i + 1) % n)] += 0.5;
        a0[(i, (i + n - 1) % n)] += 0.5;
    }
    LinearModel::from_base(ModelFamily::Cycle, a0, Vector::zeros(n), alpha)
}

/// Couples loop `y` (offset `y0`, length `m`) to the bar/stem edge at
/// index `x` whose partner is the gateway. Writes the `x` row for `case`
/// and the first/last loop rows.
fn couple_gateway_partner(a: &mut Matrix, b: &mut Vector, x: usize, y0: usize, m: usize, case: LoopCase) {
    let (y1, ym) = (y0, y0 + m - 1);
    match case {
        LoopCase::Case1 => a[(x, y1)] += 0.5,
        LoopCase::Case2 => {
            a[(x, ym)] -= 0.5;
            b[x] += 0.5;
        }
    }
    a[(y1, x)] += 0.5;
    a[(ym, x)] -= 0.5;
    b[ym] += 0.5;
}

/// Blossom with a stem of `n` matched edges and a loop of `m`, state order
/// `(x_1..x_n, y_1..y_m)`.
pub fn build_blossom(n: usize, m: usize, case: LoopCase, alpha: f64) -> Result<LinearModel, ModelError> {
    if n < 1 || m < 2 {
        return Err(invalid("blossom", "blossom needs n >= 1 and m >= 2"));
    }
    let dim = n + m;
    let mut a0 = Matrix::zeros(dim, dim);
    let mut b0 = Vector::zeros(dim);
    write_path_block(&mut a0, 0, n);
    write_path_block(&mut a0, n, m);
    couple_gateway_partner(&mut a0, &mut b0, n - 1, n, m, case);
    LinearModel::from_base(ModelFamily::Blossom(case), a0, b0, alpha)
}

/// Bicycle with loops of `l` and `m` matched edges joined by a cross-bar of
/// `n`, state order `(z_1..z_l, x_1..x_n, y_1..y_m)`. `cases` = (loop 1,
/// loop 2).
pub fn build_bicycle(
    l: usize,
    n: usize,
    m: usize,
    cases: (LoopCase, LoopCase),
    alpha: f64,
) -> Result<LinearModel, ModelError> {
    if l < 2 || m < 2 || n < 1 {
        return Err(invalid("bicycle", "bicycle needs l, m >= 2 and n >= 1"));
    }
    let dim = l + n + m;
    let mut a0 = Matrix::zeros(dim, dim);
    let mut b0 = Vector::zeros(dim);
    write_path_block(&mut a0, 0, l);
    write_path_block(&mut a0, l, n);
    write_path_block(&mut a0, l + n, m);

    // loop 1: x_1 is the gateway itself, so the signs mirror the blossom
    let (z1, zl, x1) = (0, l - 1, l);
    a0[(z1, x1)] -= 0.5;
    b0[z1] += 0.5;
    a0[(zl, x1)] += 0.5;
    match cases.0 {
        LoopCase::Case1 => a0[(x1, zl)] += 0.5,
        LoopCase::Case2 => {
            a0[(x1, z1)] -= 0.5;
            b0[x1] += 0.5;
        }
    }

    couple_gateway_partner(&mut a0, &mut b0, l + n - 1, l + n, m, cases.1);
    LinearModel::from_base(ModelFamily::Bicycle(cases.0, cases.1), a0, b0, alpha)
}

/// `A v + b`.
pub fn linear_step(model: &LinearModel, v: &[f64]) -> Result<Vec<f64>, ModelError> {
    if v.len() != model.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim(),
            found: v.len(),
        });
    }
    let next = &model.a * Vector::from_column_slice(v) + &model.b;
    Ok(next.iter().copied().collect())
}

/// Iterates [`linear_step`] with the same stopping rule as
/// [`dynamics::simulate`].
pub fn linear_simulate(model: &LinearModel, v0: &[f64], cfg: &DynamicsConfig) -> Result<Trajectory, ModelError> {
    let mut states = vec![linear_step(model, v0).map(|_| v0.to_vec())?];
    let mut converged = false;
    let mut steps = 0;
    while steps < cfg.horizon {
        let next = linear_step(model, states.last().expect("non-empty"))?;
        steps += 1;
        let diff = sup_distance(&next, states.last().expect("non-empty"));
        states.push(next);
        if diff <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    Ok(Trajectory {
        states,
        converged,
        steps_taken: steps,
    })
}

/// Relative pivot size below which `I - A` is treated as singular.
pub const SINGULAR_PIVOT_TOLERANCE: f64 = 1e-10;

/// Solves `(I - A) x = b` by LU with partial pivoting.
pub fn fixed_point(model: &LinearModel) -> Result<Vec<f64>, ModelError> {
    let dim = model.dim();
    let lhs = Matrix::identity(dim, dim) - &model.a;
    match linalg::solve(&lhs, &model.b, SINGULAR_PIVOT_TOLERANCE) {
        Ok(x) => Ok(x.iter().copied().collect()),
        Err(LinalgError::Singular { pivot }) => Err(ModelError::SingularSystem { pivot }),
        Err(e) => Err(ModelError::Linalg(e)),
    }
}

/// Closed form of `y_1(t) + y_m(t)` for a loop of `m` matched edges
/// started from `y0` (at `alpha = 1`):
///
/// ```text
/// 1 - 2/(m+1) * sum_{k odd} f_k(y0) * lambda_k^t
/// f_k(y) = 1 + lambda_k - 2 sqrt(1 - lambda_k^2) sqrt((m+1)/2) v_k . y
/// ```
///
/// with `lambda_k`, `v_k` the eigenpairs of the path of `m` matched edges.
pub fn loop_sum_closed_form(m: usize, y0: &[f64], t: u32) -> Result<f64, ModelError> {
    if m < 2 {
        return Err(invalid("blossom", "loop needs m >= 2"));
    }
    if y0.len() != m {
        return Err(ModelError::DimensionMismatch {
            expected: m,
            found: y0.len(),
        });
    }
    let mp1 = (m + 1) as f64;
    let norm = (2.0 / mp1).sqrt();
    let mut sum = 0.0;
    for k in (1..=m).step_by(2) {
        let theta = PI * k as f64 / mp1;
        let lambda = theta.cos();
        let proj: f64 = y0
            .iter()
            .enumerate()
            .map(|(i, &y)| norm * (theta * (i + 1) as f64).sin() * y)
            .sum();
        let f = 1.0 + lambda - 2.0 * theta.sin() * (mp1 / 2.0).sqrt() * proj;
        sum += f * lambda.powi(t as i32);
    }
    Ok(1.0 - 2.0 / mp1 * sum)
}

/// Gateway margins within this band are ties: both branches give the same
/// update up to half the margin.
pub const TIE_BAND: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    /// First time from which every loop stays on its settled branch.
    #[serde(rename = "T0")]
    pub t0: usize,
    /// Per-loop settle times (loop 1 then loop 2 for a bicycle).
    pub loop_t0: Vec<usize>,
    pub settled_case: Vec<LoopCase>,
    pub horizon_used: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizationError {
    #[error("{0} has no gateway; it is linear from t = 0")]
    NotNonlinear(&'static str),
    #[error("branch still switching at t = {last_switch} of {horizon}")]
    HorizonTooShort { last_switch: usize, horizon: usize },
    #[error("initial state has {found} entries, instance has {expected} nodes")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Default horizon `50 (l + n + m)^2` for [`detect_linearization`].
pub fn default_linearization_horizon(spec: &ElementarySpec) -> usize {
    let d = spec.matched_edges();
    50 * d * d
}

/// Runs the nonlinear dynamics over `cfg.horizon` steps and reports when
/// every gateway has settled on one branch.
///
/// A margin within [`TIE_BAND`] counts as compatible with either branch.
/// Loops that only ever tie settle on case 1.
pub fn detect_linearization(
    inst: &ElementaryInstance,
    x0: &ProfitState,
    cfg: &DynamicsConfig,
) -> Result<LinearizationReport, LinearizationError> {
    if inst.gateways.is_empty() {
        return Err(LinearizationError::NotNonlinear(inst.spec.kind()));
    }
    if x0.len() != inst.market.node_count() {
        return Err(LinearizationError::DimensionMismatch {
            expected: inst.market.node_count(),
            found: x0.len(),
        });
    }
    let loops = inst.gateways.len();
    // per loop: the branch of the latest definite sample and when it last changed
    let mut current: Vec<Option<bool>> = vec![None; loops];
    let mut changed_at: Vec<usize> = vec![0; loops];

    // only an exactly stationary state ends the run early
    let run_cfg = DynamicsConfig {
        epsilon: 0.0,
        ..*cfg
    };
    let summary = dynamics::simulate_observed(&inst.market, x0, &run_cfg, |t, x| {
        for (k, g) in inst.gateways.iter().enumerate() {
            // option(case1) - option(case2)
            let margin = x[g.case2_neighbor] - x[g.case1_neighbor];
            let branch = if margin > TIE_BAND {
                Some(true)
            } else if margin < -TIE_BAND {
                Some(false)
            } else {
                None
            };
            if let Some(b) = branch {
                if current[k].is_some_and(|c| c != b) {
                    changed_at[k] = t;
                }
                current[k] = Some(b);
            }
        }
    });

    let horizon = summary.steps_taken;
    let last_switch = changed_at.iter().copied().max().unwrap_or(0);
    if last_switch > 0 && summary.steps_taken == cfg.horizon && last_switch * 10 >= horizon * 9 {
        return Err(LinearizationError::HorizonTooShort {
            last_switch,
            horizon,
        });
    }
    Ok(LinearizationReport {
        t0: last_switch,
        loop_t0: changed_at,
        settled_case: current
            .iter()
            .map(|c| LoopCase::from_flag(c.unwrap_or(true)))
            .collect(),
        horizon_used: horizon,
    })
}

#[derive(Serialize)]
struct ModelDocument<'a> {
    family: &'a ModelFamily,
    alpha: f64,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl LinearModel {
    /// `{"family": .., "alpha": .., "A": [[row], ..], "b": [..]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let doc = ModelDocument {
            family: &self.family,
            alpha: self.alpha,
            a: (0..self.dim())
                .map(|i| self.a.row(i).iter().copied().collect())
                .collect(),
            b: self.b.iter().copied().collect(),
        };
        serde_json::to_value(doc).expect("model document is plain data")
    }
}
