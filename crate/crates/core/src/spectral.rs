//! Closed-form spectra of the elementary-graph models, the alpha shift,
//! rates and times, and two numerical cross-checks (a determinant residual
//! and a Jacobi eigensolver).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dynamics::{check_alpha, ConfigError};
use crate::elementary::{ElementarySpec, SpecError};
use crate::linalg::{self, LinalgError, Matrix};

/// Distance from 1 (in modulus) at which an eigenvalue counts as on the
/// unit circle.
pub const UNIT_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    /// `cos(2 pi k / N)`: the stem/cross-bar family (and the path/cycle family).
    Lambda,
    /// `cos(pi (2k - 1) / (m + 1))`: odd modes of the (second) loop.
    Mu,
    /// `cos(pi (2k - 1) / (l + 1))`: odd modes of the first bicycle loop.
    Nu,
    MinusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub value: f64,
    pub family_tag: FamilyTag,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    GloballyAsymptoticallyStable,
    AsymptoticallyStable,
    PeriodicTail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub family: &'static str,
    pub sizes: BTreeMap<&'static str, usize>,
    pub alpha: f64,
    pub eigenvalues: Vec<Eigenvalue>,
    pub rho: f64,
    pub lambda2: f64,
    #[serde(rename = "R", serialize_with = "finite_or_inf")]
    pub rate: f64,
    #[serde(rename = "T", serialize_with = "finite_or_inf")]
    pub time: f64,
    pub classification: Classification,
    /// Orthonormal eigenvectors, one per eigenvalue (paths only).
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

/// JSON has no infinity; write it as the string `"inf"`.
fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("spectrum has -1 at alpha = 1: the tail is periodic and never converges")]
    PeriodicNoConvergence,
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error(transparent)]
    Linalg(LinalgError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// `cos(pi * num / den)`, with the exact values at the multiples of pi/2
/// that matter for classification.
fn cos_pi_ratio(num: usize, den: usize) -> f64 {
    if num == 0 {
        1.0
    } else if num == den {
        -1.0
    } else if 2 * num == den {
        0.0
    } else {
        (PI * num as f64 / den as f64).cos()
    }
}

fn eig(value: f64, family_tag: FamilyTag, k: usize) -> Eigenvalue {
    Eigenvalue {
        value,
        family_tag,
        k,
    }
}

impl SpectrumReport {
    fn new(family: &'static str, sizes: &[(&'static str, usize)], eigenvalues: Vec<Eigenvalue>) -> Self {
        let mut report = SpectrumReport {
            family,
            sizes: sizes.iter().copied().collect(),
            alpha: 1.0,
            eigenvalues,
            rho: 0.0,
            lambda2: 0.0,
            rate: 0.0,
            time: 0.0,
            classification: Classification::GloballyAsymptoticallyStable,
            eigenvectors: None,
        };
        report.refresh();
        report
    }

    fn refresh(&mut self) {
        let moduli = self.eigenvalues.iter().map(|e| e.value.abs());
        self.rho = moduli.clone().fold(0.0, f64::max);
        self.lambda2 = moduli.filter(|&r| r < 1.0 - UNIT_TOLERANCE).fold(0.0, f64::max);
        let on_circle = self.rho >= 1.0 - UNIT_TOLERANCE;
        let has_minus_one = self
            .eigenvalues
            .iter()
            .any(|e| (e.value + 1.0).abs() <= UNIT_TOLERANCE);
        self.classification = if !on_circle {
            Classification::GloballyAsymptoticallyStable
        } else if has_minus_one {
            Classification::PeriodicTail
        } else {
            Classification::AsymptoticallyStable
        };
        self.rate = match self.classification {
            Classification::GloballyAsymptoticallyStable => -self.rho.ln(),
            Classification::AsymptoticallyStable => -self.lambda2.ln(),
            Classification::PeriodicTail => 0.0,
        };
        self.time = 1.0 / self.rate;
    }

    pub fn values(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| e.value).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is plain data")
    }
}

/// Path of `n` matched edges: `cos(pi k / (n + 1))`, `k = 1..n`, with the
/// sine eigenvectors.
pub fn path_spectrum(n: usize) -> SpectrumReport {
    assert!(n >= 1, "path needs n >= 1");
    let values = (1..=n)
        .map(|k| eig(cos_pi_ratio(k, n + 1), FamilyTag::Lambda, k))
        .collect();
    let mut report = SpectrumReport::new("path", &[("n", n)], values);
    report.eigenvectors = Some((1..=n).map(|k| path_eigenvector(n, k)).collect());
    report
}

/// `v_k = sqrt(2/(n+1)) (sin(pi k i / (n+1)))_{i=1..n}`.
pub fn path_eigenvector(n: usize, k: usize) -> Vec<f64> {
    let scale = (2.0 / (n + 1) as f64).sqrt();
    (1..=n)
        .map(|i| scale * (PI * (k * i) as f64 / (n + 1) as f64).sin())
        .collect()
}

/// Cycle of `n` matched edges: `cos(2 pi (k - 1) / n)`, `k = 1..n`.
pub fn cycle_spectrum(n: usize) -> SpectrumReport {
    assert!(n >= 2, "cycle needs n >= 2");
    let values = (1..=n)
        .map(|k| {
            let v = cos_pi_ratio(2 * (k - 1), n);
            let tag = if v == -1.0 { FamilyTag::MinusOne } else { FamilyTag::Lambda };
            eig(v, tag, k)
        })
        .collect();
    SpectrumReport::new("cycle", &[("n", n)], values)
}

/// `cos(pi (2k - 1) / (len + 1))` for `k = 1..ceil(len/2)`.
fn odd_loop_modes(len: usize, tag: FamilyTag) -> impl Iterator<Item = Eigenvalue> {
    (1..=len.div_ceil(2)).map(move |k| eig(cos_pi_ratio(2 * k - 1, len + 1), tag, k))
}

/// Blossom with stem `n` and loop `m` (either case; the spectra coincide).
pub fn blossom_spectrum(n: usize, m: usize) -> SpectrumReport {
    assert!(n >= 1 && m >= 2, "blossom needs n >= 1 and m >= 2");
    let big = 2 * n + m + 1;
    let mut values: Vec<Eigenvalue> = (1..=n + m / 2)
        .map(|k| eig(cos_pi_ratio(2 * k, big), FamilyTag::Lambda, k))
        .collect();
    values.extend(odd_loop_modes(m, FamilyTag::Mu));
    SpectrumReport::new("blossom", &[("n", n), ("m", m)], values)
}

/// Bicycle with loops `l`, `m` and cross-bar `n`. When both loops are even
/// the last member of the lambda family is exactly `-1`.
pub fn bicycle_spectrum(l: usize, n: usize, m: usize) -> SpectrumReport {
    assert!(l >= 2 && m >= 2 && n >= 1, "bicycle needs l, m >= 2 and n >= 1");
    let big = 2 * n + l + m;
    let mut values: Vec<Eigenvalue> = odd_loop_modes(l, FamilyTag::Nu).collect();
    values.extend(odd_loop_modes(m, FamilyTag::Mu));
    values.extend((1..=n + l / 2 + m / 2).map(|k| {
        let v = cos_pi_ratio(2 * k, big);
        let tag = if v == -1.0 { FamilyTag::MinusOne } else { FamilyTag::Lambda };
        eig(v, tag, k)
    }));
    SpectrumReport::new("bicycle", &[("l", l), ("n", n), ("m", m)], values)
}

/// Spectrum of the base (`alpha = 1`) model for `spec`.
pub fn base_spectrum(spec: &ElementarySpec) -> Result<SpectrumReport, SpecError> {
    spec.check()?;
    Ok(match *spec {
        ElementarySpec::Path { n, .. } => path_spectrum(n),
        ElementarySpec::Cycle { n } => cycle_spectrum(n),
        ElementarySpec::Blossom { n, m } => blossom_spectrum(n, m),
        ElementarySpec::Bicycle { l, n, m } => bicycle_spectrum(l, n, m),
    })
}

/// Spectrum of the model for `spec` at smoothing `alpha`.
pub fn spectrum_for(spec: &ElementarySpec, alpha: f64) -> Result<SpectrumReport, SpectralError> {
    let base = base_spectrum(spec)?;
    alpha_shift(&base, alpha)
}

/// Maps every eigenvalue through `lambda -> 1 - alpha + alpha lambda`.
/// The report's `alpha` is multiplied by `alpha`, so shifting a shifted
/// report composes correctly.
pub fn alpha_shift(report: &SpectrumReport, alpha: f64) -> Result<SpectrumReport, SpectralError> {
    check_alpha(alpha)?;
    let mut out = report.clone();
    out.alpha = report.alpha * alpha;
    if alpha != 1.0 {
        for e in &mut out.eigenvalues {
            e.value = 1.0 - alpha + alpha * e.value;
            if e.family_tag == FamilyTag::MinusOne {
                e.family_tag = FamilyTag::Lambda;
            }
        }
    }
    out.refresh();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceTime {
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "T")]
    pub time: f64,
}

/// `R = ln(1/rho)` (or `ln(1/lambda2)` when 1 is an eigenvalue) and `T = 1/R`.
pub fn convergence_time(report: &SpectrumReport) -> Result<ConvergenceTime, SpectralError> {
    if report.classification == Classification::PeriodicTail {
        return Err(SpectralError::PeriodicNoConvergence);
    }
    Ok(ConvergenceTime {
        rate: report.rate,
        time: report.time,
    })
}

/// Leading-order convergence time of `spec` at smoothing `alpha`.
pub fn asymptotic_time(spec: &ElementarySpec, alpha: f64) -> Result<f64, SpectralError> {
    spec.check()?;
    check_alpha(alpha)?;
    let c = 2.0 / (alpha * PI * PI);
    let sq = |v: usize| (v * v) as f64;
    Ok(match *spec {
        ElementarySpec::Path { n, .. } => c * sq(n),
        ElementarySpec::Cycle { n } => sq(n) / (2.0 * alpha * PI * PI),
        ElementarySpec::Blossom { n, m } => {
            if m % 2 == 0 {
                c * sq(2 * n + m)
            } else {
                c * sq(m).max(sq(2 * n + m) / 4.0)
            }
        }
        ElementarySpec::Bicycle { l, n, m } => {
            if l % 2 == 0 || m % 2 == 0 {
                c * sq(2 * n + l + m)
            } else {
                c * sq(m).max(sq(l)).max(sq(2 * n + l + m) / 4.0)
            }
        }
    })
}

/// `|det(A - lam I)|` divided by `prod max(1, |pivot|)`, i.e. the product
/// of `min(1, |pivot|)` over the LU pivots. Small values certify `lam` as
/// an eigenvalue.
///
/// # Panics
/// If `a` is not square.
pub fn verify_eigen_det(a: &Matrix, lam: f64) -> f64 {
    assert!(a.is_square(), "verify_eigen_det needs a square matrix");
    let n = a.nrows();
    let shifted = a - Matrix::identity(n, n) * lam;
    let pivots = linalg::lu_pivots(&shifted).expect("square");
    pivots.iter().map(|p| p.abs().min(1.0)).product()
}

/// All eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigen_oracle(a: &Matrix) -> Result<Vec<f64>, SpectralError> {
    linalg::jacobi_eigenvalues(a, 1e-12, 1e-13).map_err(|e| match e {
        LinalgError::NotSymmetric { max_asymmetry } => SpectralError::NotSymmetric { max_asymmetry },
        other => SpectralError::Linalg(other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_model::{build_bicycle, build_blossom, build_cycle, path_matrix, LoopCase};

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn path_small() {
        assert!(close(&path_spectrum(2).values(), &[0.5, -0.5], 1e-15));
        let h = 2f64.sqrt() / 2.0;
        assert!(close(&path_spectrum(3).values(), &[h, 0.0, -h], 1e-15));
    }

    #[test]
    fn path_eigenvectors_orthonormal() {
        let n = 9;
        let vs = path_spectrum(n).eigenvectors.unwrap();
        for (i, a) in vs.iter().enumerate() {
            for (j, b) in vs.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        // and they are eigenvectors of the path matrix
        let a = path_matrix(n);
        for (k, v) in vs.iter().enumerate() {
            let lam = cos_pi_ratio(k + 1, n + 1);
            let av = &a * crate::linalg::Vector::from_column_slice(v);
            assert!(av.iter().zip(v).all(|(x, y)| (x - lam * y).abs() < 1e-14));
        }
    }

    #[test]
    fn cycle_small() {
        assert!(close(&cycle_spectrum(4).values(), &[1.0, 0.0, -1.0, 0.0], 1e-15));
        assert!(close(&cycle_spectrum(3).values(), &[1.0, -0.5, -0.5], 1e-15));
        for n in 2..12 {
            let has = cycle_spectrum(n).values().contains(&-1.0);
            assert_eq!(has, n % 2 == 0, "n = {n}");
        }
        assert_eq!(cycle_spectrum(4).classification, Classification::PeriodicTail);
        assert_eq!(cycle_spectrum(5).classification, Classification::AsymptoticallyStable);
    }

    #[test]
    fn blossom_one_two() {
        let v = blossom_spectrum(1, 2).values();
        let want = [(2.0 * PI / 5.0).cos(), (4.0 * PI / 5.0).cos(), 0.5];
        assert!(close(&v, &want, 1e-15));
    }

    #[test]
    fn blossom_counts_and_radius() {
        for n in 1..8 {
            for m in 2..12 {
                let r = blossom_spectrum(n, m);
                assert_eq!(r.eigenvalues.len(), n + m);
                assert!(r.rho < 1.0);
                let want = if m % 2 == 0 {
                    (PI / (2 * n + m + 1) as f64).cos()
                } else if m < 2 * n {
                    (2.0 * PI / (2 * n + m + 1) as f64).cos()
                } else {
                    (PI / (m + 1) as f64).cos()
                };
                assert!((r.rho - want).abs() < 1e-14, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn bicycle_small() {
        let r = bicycle_spectrum(2, 1, 2);
        let want = [0.5, 0.5, 0.5, -0.5, -1.0];
        assert!(close(&sorted(r.values()), &want, 1e-15));
        assert_eq!(r.eigenvalues.last().unwrap().family_tag, FamilyTag::MinusOne);
        assert_eq!(r.classification, Classification::PeriodicTail);
        let r = bicycle_spectrum(3, 1, 3);
        assert!(r.rho < 1.0);
        assert_eq!(r.eigenvalues.len(), 7);
    }

    #[test]
    fn alpha_shift_maps_values() {
        let r = alpha_shift(&cycle_spectrum(4), 0.5).unwrap();
        assert!(close(&r.values(), &[1.0, 0.5, 0.0, 0.5], 1e-15));
        assert_eq!(r.classification, Classification::AsymptoticallyStable);
        assert!((r.lambda2 - 0.5).abs() < 1e-15);
        let same = alpha_shift(&blossom_spectrum(2, 3), 1.0).unwrap();
        assert_eq!(same, blossom_spectrum(2, 3));
        let twice = alpha_shift(&alpha_shift(&path_spectrum(5), 0.5).unwrap(), 0.5).unwrap();
        let once = alpha_shift(&path_spectrum(5), 0.25).unwrap();
        assert!(close(&twice.values(), &once.values(), 1e-15));
        assert_eq!(twice.alpha, 0.25);
    }

    #[test]
    fn times() {
        let r = path_spectrum(8);
        let t = convergence_time(&r).unwrap();
        assert!((t.time - 1.0 / -(PI / 9.0).cos().ln()).abs() < 1e-12);
        let asym = asymptotic_time(&ElementarySpec::Path { n: 8, x_plus: 0.0, x_minus: 0.0 }, 1.0).unwrap();
        assert!((asym - 128.0 / (PI * PI)).abs() < 1e-12);
        // the O(1/n^2) correction is still about 24% at n = 8
        assert!((t.time / asym - 1.24).abs() < 0.01);
        let p32 = ElementarySpec::Path { n: 32, x_plus: 0.0, x_minus: 0.0 };
        let ratio = spectrum_for(&p32, 1.0).unwrap().time / asymptotic_time(&p32, 1.0).unwrap();
        assert!((ratio - 1.0).abs() < 0.1);
        assert_eq!(
            convergence_time(&cycle_spectrum(4)),
            Err(SpectralError::PeriodicNoConvergence)
        );
    }

    #[test]
    fn periodic_report_serializes_inf() {
        let doc = cycle_spectrum(4).to_json();
        assert_eq!(doc["T"], "inf");
        assert_eq!(doc["R"], 0.0);
        assert_eq!(doc["classification"], "PeriodicTail");
        assert_eq!(doc["eigenvalues"][2]["family_tag"], "minus_one");
    }

    #[test]
    fn det_residual_examples() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!(verify_eigen_det(&a, 0.5) < 1e-14);
        assert!((verify_eigen_det(&a, 0.4) - 0.09).abs() < 1e-14);
    }

    #[test]
    fn oracle_examples() {
        let got = symmetric_eigen_oracle(&path_matrix(5)).unwrap();
        let want = sorted(path_spectrum(5).values());
        assert!(close(&got, &want, 1e-10));
        let got = symmetric_eigen_oracle(&(Matrix::identity(4, 4) * 0.3)).unwrap();
        assert!(close(&got, &[0.3; 4], 1e-15));
        let got = symmetric_eigen_oracle(&build_cycle(6, 1.0).unwrap().a).unwrap();
        assert!(close(&got, &sorted(cycle_spectrum(6).values()), 1e-10));
        let asym = build_blossom(1, 2, LoopCase::Case1, 1.0).unwrap().a;
        assert!(matches!(
            symmetric_eigen_oracle(&asym),
            Err(SpectralError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn closed_forms_hold_for_every_case() {
        let cases = [LoopCase::Case1, LoopCase::Case2];
        for case in cases {
            let a = build_blossom(3, 5, case, 1.0).unwrap().a;
            for e in blossom_spectrum(3, 5).eigenvalues {
                assert!(verify_eigen_det(&a, e.value) < 1e-8, "{case:?} {e:?}");
            }
        }
        for c1 in cases {
            for c2 in cases {
                let a = build_bicycle(3, 2, 4, (c1, c2), 1.0).unwrap().a;
                for e in bicycle_spectrum(3, 2, 4).eigenvalues {
                    assert!(verify_eigen_det(&a, e.value) < 1e-8, "{c1:?} {c2:?} {e:?}");
                }
            }
        }
    }

    #[test]
    fn det_residual_rejects_non_eigenvalues() {
        let a = build_blossom(2, 3, LoopCase::Case1, 1.0).unwrap().a;
        assert!(verify_eigen_det(&a, 0.123) > 1e-4);
    }
}
