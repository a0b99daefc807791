//! Convergence-time scans over one size parameter of an elementary graph.
//!
//! Each row builds the instance, draws a random reduced start state,
//! simulates the full dynamics and compares three times: the exact one
//! from the spectrum, the leading-order formula, and `1/R` fitted to the
//! simulated decay.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, DynamicsConfig, Trajectory};
use crate::elementary::{self, split_spec, ElementaryInstance, ElementarySpec, SpecError};
use crate::io::{fmt_f64, IoError};
use crate::linear_model::{fixed_point, LinearModel, LoopCase};
use crate::spectral::{self, Classification};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("template {0:?} must mark exactly one size parameter with '*'")]
    Template(String),
    #[error("sizes must be positive and strictly increasing")]
    Sizes,
}

/// Random reduced state, uniform in `[0, 1)` per coordinate, from
/// ChaCha8 seeded with `seed`.
pub fn random_reduced(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub template: ElementarySpec,
    pub param: String,
    pub sizes: Vec<usize>,
    pub config: DynamicsConfig,
    pub seed: u64,
}

impl ScanPlan {
    /// `template` is a spec string with the scanned parameter written as
    /// `*`, e.g. `"blossom:n=2,m=*"`.
    pub fn new(template: &str, sizes: Vec<usize>, config: DynamicsConfig, seed: u64) -> Result<Self, ScanError> {
        let (_, params) = split_spec(template)?;
        let starred: Vec<&String> = params.iter().filter(|(_, v)| v.as_str() == "*").map(|(k, _)| k).collect();
        let [param] = starred[..] else {
            return Err(ScanError::Template(template.to_string()));
        };
        if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScanError::Sizes);
        }
        let placeholder = template.replace('*', "2");
        let base: ElementarySpec = placeholder.parse()?;
        let plan = ScanPlan {
            template: base,
            param: param.clone(),
            sizes,
            config,
            seed,
        };
        for spec in plan.specs()? {
            spec.check()?;
        }
        Ok(plan)
    }

    pub fn specs(&self) -> Result<Vec<ElementarySpec>, SpecError> {
        self.sizes
            .iter()
            .map(|&s| self.template.with_param(&self.param, s))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowFlag {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "NON_CONVERGENT")]
    NonConvergent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub family: &'static str,
    pub spec: String,
    pub size: usize,
    pub alpha: f64,
    pub t_exact: f64,
    pub t_asymptotic: f64,
    /// `1/R` from the fitted decay; `None` when no rate could be fitted.
    pub t_empirical: Option<f64>,
    pub steps_run: usize,
    pub converged: bool,
    /// `|x(t+2) - x(t)| <= 1e-10` while `|x(t+1) - x(t)| > 1e-3` at the end.
    pub period_two_tail: bool,
    pub flag: RowFlag,
    pub note: String,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl ScanRow {
    pub fn ratio_empirical(&self) -> Option<f64> {
        self.t_empirical.map(|t| t / self.t_asymptotic)
    }

    pub fn ratio_exact(&self) -> f64 {
        self.t_exact / self.t_asymptotic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub template: String,
    pub param: String,
    pub alpha: f64,
    pub seed: u64,
    /// Least-squares `p` in `T_empirical ~ c size^p` over the OK rows.
    pub exponent: Option<f64>,
    pub prefactor: Option<f64>,
    pub rows: Vec<ScanRow>,
}

/// Limit of a trajectory in reduced coordinates: the start average for
/// cycles, otherwise the fixed point of the model for the branches taken
/// in `final_state`.
pub fn reduced_limit(inst: &ElementaryInstance, v0: &[f64], final_state: &[f64], alpha: f64) -> Option<Vec<f64>> {
    if let ElementarySpec::Cycle { n } = inst.spec {
        // the sum is conserved, so the limit is the average
        let mean = v0.iter().sum::<f64>() / n as f64;
        return Some(vec![mean; n]);
    }
    let cases: Vec<LoopCase> = inst.loop_cases(final_state).into_iter().map(LoopCase::from_flag).collect();
    let model = LinearModel::for_spec(&inst.spec, &cases, alpha).ok()?;
    fixed_point(&model).ok()
}

fn period_two_tail(states: &[Vec<f64>]) -> bool {
    let k = states.len();
    if k < 3 {
        return false;
    }
    let d = |a: &[f64], b: &[f64]| crate::graph::sup_distance(a, b);
    d(&states[k - 1], &states[k - 3]) <= 1e-10 && d(&states[k - 1], &states[k - 2]) > 1e-3
}

/// Runs one row. `v0` is the reduced start state.
pub fn scan_row(spec: &ElementarySpec, v0: &[f64], cfg: &DynamicsConfig) -> Result<ScanRow, SpecError> {
    let start = Instant::now();
    let inst = elementary::build(spec)?;
    let report = spectral::spectrum_for(spec, cfg.alpha).map_err(|e| match e {
        spectral::SpectralError::Spec(s) => s,
        other => SpecError::SpecInvariantViolation {
            kind: spec.kind(),
            reason: other.to_string(),
        },
    })?;
    let t_asymptotic = spectral::asymptotic_time(spec, cfg.alpha).expect("spec and alpha already checked");
    let x0 = elementary::from_reduced(&inst, v0).map_err(|e| SpecError::SpecInvariantViolation {
        kind: spec.kind(),
        reason: e.to_string(),
    })?;

    let full = dynamics::simulate(&inst.market, &x0, cfg);
    let reduced = Trajectory {
        states: full
            .states
            .iter()
            .map(|s| elementary::to_reduced_slice(&inst, s).expect("pair sums are conserved"))
            .collect(),
        converged: full.converged,
        steps_taken: full.steps_taken,
    };
    let periodic = report.classification == Classification::PeriodicTail;

    let (t_empirical, note) = if periodic {
        (None, "spectrum contains -1".to_string())
    } else {
        match reduced_limit(&inst, v0, full.last(), cfg.alpha) {
            None => (None, "no fixed point".to_string()),
            Some(x_star) => match dynamics::estimate_rate(&reduced, &x_star, 1.0) {
                Ok(fit) => (Some(fit.time()), String::new()),
                Err(e) => (None, e.to_string()),
            },
        }
    };
    let flag = if t_empirical.is_some_and(|t| t > 0.0 && t.is_finite()) {
        RowFlag::Ok
    } else {
        RowFlag::NonConvergent
    };
    Ok(ScanRow {
        family: spec.kind(),
        spec: spec.to_string(),
        size: 0,
        alpha: cfg.alpha,
        t_exact: report.time,
        t_asymptotic,
        t_empirical,
        steps_run: full.steps_taken,
        converged: full.converged,
        period_two_tail: period_two_tail(&reduced.states),
        flag,
        note,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Least-squares fit of `ln y = ln c + p ln x`; returns `(p, c)`.
pub fn power_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let p = sxy / sxx;
    Some((p, (my - p * mx).exp()))
}

/// Runs every row of the plan. Each row draws its start state from a
/// fresh generator seeded with `plan.seed`.
pub fn run_scan(plan: &ScanPlan) -> Result<ScanSummary, SpecError> {
    let mut rows = Vec::with_capacity(plan.sizes.len());
    for (spec, &size) in plan.specs()?.iter().zip(&plan.sizes) {
        let v0 = random_reduced(spec.matched_edges(), plan.seed);
        let mut row = scan_row(spec, &v0, &plan.config)?;
        row.size = size;
        rows.push(row);
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.flag == RowFlag::Ok)
        .filter_map(|r| r.t_empirical.map(|t| (r.size as f64, t)))
        .collect();
    let fit = power_fit(&points);
    let template = plan.template.to_string().replace(
        &format!("{}=2", plan.param),
        &format!("{}=*", plan.param),
    );
    Ok(ScanSummary {
        template,
        param: plan.param.clone(),
        alpha: plan.config.alpha,
        seed: plan.seed,
        exponent: fit.map(|f| f.0),
        prefactor: fit.map(|f| f.1),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        fmt_f64(v)
    } else {
        "inf".to_string()
    }
}

/// Writes the rows as CSV. Wall-clock times go in a leading `#` comment so
/// the data lines are identical across runs.
pub fn write_scan_csv<W: Write>(summary: &ScanSummary, mut out: W) -> Result<(), IoError> {
    let times: Vec<String> = summary.rows.iter().map(|r| format!("{:.6}", r.wall_time_s)).collect();
    writeln!(out, "# wall_time_s: {}", times.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "family",
        "spec",
        "size",
        "alpha",
        "T_exact",
        "T_asymptotic",
        "T_empirical",
        "ratio_empirical_asymptotic",
        "ratio_exact_asymptotic",
        "steps_run",
        "converged",
        "period_two_tail",
        "flag",
    ])?;
    for r in &summary.rows {
        let flag = match r.flag {
            RowFlag::Ok => "OK",
            RowFlag::NonConvergent => "NON_CONVERGENT",
        };
        w.write_record([
            r.family.to_string(),
            r.spec.clone(),
            r.size.to_string(),
            fmt_f64(r.alpha),
            num(r.t_exact),
            num(r.t_asymptotic),
            opt(r.t_empirical),
            opt(r.ratio_empirical()),
            num(r.ratio_exact()),
            r.steps_run.to_string(),
            r.converged.to_string(),
            r.period_two_tail.to_string(),
            flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
