//! Reverse triangle inequality certificates.
//!
//! Every certificate states `factor * lhs <= rhs` with `lhs = int |f| dt` and
//! `rhs = |int f dt|`, so all theorems share one comparison and one tolerance
//! policy. A certificate is only issued when its hypothesis holds at the
//! grid nodes; otherwise the failing [`CheckReport`] comes back in the error.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::{from_discrete, FunctionError, SampledFunction};
use crate::hypotheses::{
    arc_bound, band_fit, check, minimal_k, minimal_rho, ortho_coefficients, CheckReport, HypothesisError,
    HypothesisParams,
};
use crate::quadrature::{integrate, QuadratureError, QuadratureRule};
use crate::space::{complete_basis, validate_orthonormal, validate_unit, SpaceElement, ToleranceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "T2_1")]
    T21,
    #[serde(rename = "C2_2")]
    C22,
    #[serde(rename = "C2_3")]
    C23,
    #[serde(rename = "T3_1")]
    T31,
    #[serde(rename = "C3_2")]
    C32,
    #[serde(rename = "C3_3")]
    C33,
    #[serde(rename = "P4_1")]
    P41,
    #[serde(rename = "KARAMATA")]
    Karamata,
    #[serde(rename = "P4_3")]
    P43,
    #[serde(rename = "P4_4")]
    P44,
    #[serde(rename = "DIAZ_METCALF")]
    DiazMetcalf,
}

impl TheoremId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::T21 => "T2_1",
            Self::C22 => "C2_2",
            Self::C23 => "C2_3",
            Self::T31 => "T3_1",
            Self::C32 => "C3_2",
            Self::C33 => "C3_3",
            Self::P41 => "P4_1",
            Self::Karamata => "KARAMATA",
            Self::P43 => "P4_3",
            Self::P44 => "P4_4",
            Self::DiazMetcalf => "DIAZ_METCALF",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error("{theorem}: hypothesis fails (worst margin {} at t = {})", report.worst_margin, report.worst_node)]
    HypothesisFailed { theorem: TheoremId, params: Box<HypothesisParams>, report: CheckReport },
    #[error("{theorem}: sum of k_i^2 = {sum_sq} exceeds 1, so no non-zero function can satisfy the hypothesis")]
    VacuousHypothesis { theorem: TheoremId, sum_sq: f64 },
    #[error("the integral of f vanishes; no direction can be certified")]
    ZeroIntegral,
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Function(#[from] FunctionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: TheoremId,
    pub parameters: HypothesisParams,
    pub factor: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
    pub tightness: f64,
    pub equality_residual: f64,
    pub hypothesis: CheckReport,
    pub quad_err: f64,
}

/// Additive form `lhs - rhs <= c * rhs` of the band certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveForm {
    /// `(sqrt M - sqrt m)^2 / (2 sqrt(mM))`, which equals `1/factor - 1`.
    pub coefficient_corrected: f64,
    /// `(sqrt M - sqrt m)^2 / (M + m)`; reported for comparison, never certified.
    pub coefficient_printed: f64,
    pub lhs_minus_rhs: f64,
    pub bound_corrected: f64,
    pub bound_printed: f64,
    pub printed_holds: bool,
}

impl AdditiveForm {
    fn new(m: f64, big_m: f64, cert: &Certificate, tol: &ToleranceConfig) -> Self {
        let gap = (big_m.sqrt() - m.sqrt()).powi(2);
        let coefficient_corrected = gap / (2.0 * (m * big_m).sqrt());
        let coefficient_printed = gap / (big_m + m);
        let lhs_minus_rhs = cert.lhs - cert.rhs;
        let bound_corrected = coefficient_corrected * cert.rhs;
        let bound_printed = coefficient_printed * cert.rhs;
        let allowance = tol.cert_abs_tol + tol.cert_rel_tol * cert.rhs + cert.quad_err;
        Self {
            coefficient_corrected,
            coefficient_printed,
            lhs_minus_rhs,
            bound_corrected,
            bound_printed,
            printed_holds: lhs_minus_rhs <= bound_printed + allowance,
        }
    }
}

/// Evaluates both sides and the equality residual against `lhs * target`,
/// where `target` is the theorem's equality direction scaled by its factor.
#[allow(clippy::too_many_arguments)]
fn assemble(
    f: &SampledFunction,
    rule: QuadratureRule,
    theorem: TheoremId,
    parameters: HypothesisParams,
    factor: f64,
    target: &SpaceElement,
    hypothesis: CheckReport,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    let q = integrate(f, rule)?;
    let lhs = q.scalar_value;
    let rhs = q.vector_value.norm();
    let quad_err = q.err_estimate();
    let bound = factor * lhs;
    let holds = bound <= rhs + tol.cert_abs_tol + tol.cert_rel_tol * rhs + factor * quad_err;
    let residual = (&q.vector_value - &target.scale(lhs)).norm();
    Ok(Certificate {
        theorem,
        parameters,
        factor,
        lhs,
        rhs,
        holds,
        slack: rhs - bound,
        tightness: bound / rhs.max(1e-300),
        equality_residual: residual / rhs.max(1e-300),
        hypothesis,
        quad_err,
    })
}

fn checked(
    f: &SampledFunction,
    theorem: TheoremId,
    params: &HypothesisParams,
    tol: &ToleranceConfig,
) -> Result<CheckReport, CertError> {
    let report = check(f, params, tol)?;
    if !report.holds {
        return Err(CertError::HypothesisFailed { theorem, params: Box::new(params.clone()), report });
    }
    Ok(report)
}

/// Reverse inequality under `|f(t)| <= K Re<f(t), e>`; factor `1/K`.
pub fn certify_unit_vector(
    f: &SampledFunction,
    e: &SpaceElement,
    k: f64,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    unit_vector_as(TheoremId::T21, f, e, k, rule, tol)
}

fn unit_vector_as(
    theorem: TheoremId,
    f: &SampledFunction,
    e: &SpaceElement,
    k: f64,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    let params = HypothesisParams::UnitK { e: e.clone(), k };
    let report = checked(f, theorem, &params, tol)?;
    let factor = 1.0 / k;
    assemble(f, rule, theorem, params, factor, &e.scale(factor), report, tol)
}

/// Reverse inequality under `|f(t) - e| <= rho`; factor `sqrt(1 - rho^2)`.
pub fn certify_disk(
    f: &SampledFunction,
    e: &SpaceElement,
    rho: f64,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    disk_as(TheoremId::C22, f, e, rho, rule, tol)
}

fn disk_as(
    theorem: TheoremId,
    f: &SampledFunction,
    e: &SpaceElement,
    rho: f64,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    let params = HypothesisParams::Disk { e: e.clone(), rho };
    let report = checked(f, theorem, &params, tol)?;
    let factor = (1.0 - rho * rho).sqrt();
    assemble(f, rule, theorem, params, factor, &e.scale(factor), report, tol)
}

/// Reverse inequality under the band condition between `m e` and `M e`;
/// factor `2 sqrt(mM)/(M + m)`, with its additive form.
pub fn certify_band(
    f: &SampledFunction,
    e: &SpaceElement,
    m: f64,
    big_m: f64,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<(Certificate, AdditiveForm), CertError> {
    band_as(TheoremId::C23, f, e, m, big_m, rule, tol)
}

fn band_as(
    theorem: TheoremId,
    f: &SampledFunction,
    e: &SpaceElement,
    m: f64,
    big_m: f64,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<(Certificate, AdditiveForm), CertError> {
    let params = HypothesisParams::Band { e: e.clone(), m, big_m };
    let report = checked(f, theorem, &params, tol)?;
    let factor = band_factor(m, big_m);
    let cert = assemble(f, rule, theorem, params, factor, &e.scale(factor), report, tol)?;
    let additive = AdditiveForm::new(m, big_m, &cert, tol);
    Ok((cert, additive))
}

pub fn band_factor(m: f64, big_m: f64) -> f64 {
    (2.0 * (m * big_m).sqrt() / (m + big_m)).min(1.0)
}

/// `sum_i k_i e_i`.
fn combination(basis: &[SpaceElement], k: &[f64]) -> SpaceElement {
    basis
        .iter()
        .zip(k)
        .fold(SpaceElement::zeros(basis[0].dim()), |acc, (e, ki)| &acc + &e.scale(*ki))
}

/// Shared body of the orthonormal-family theorems once `k` is known and the
/// theorem's own hypothesis has been checked.
#[allow(clippy::too_many_arguments)]
fn ortho_with(
    theorem: TheoremId,
    f: &SampledFunction,
    basis: &[SpaceElement],
    k: &[f64],
    params: HypothesisParams,
    report: CheckReport,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    let factor = k.iter().map(|ki| ki * ki).sum::<f64>().sqrt().min(1.0);
    assemble(f, rule, theorem, params, factor, &combination(basis, k), report, tol)
}

fn guard_sum_sq(theorem: TheoremId, k: &[f64], tol: &ToleranceConfig) -> Result<(), CertError> {
    let sum_sq: f64 = k.iter().map(|ki| ki * ki).sum();
    if sum_sq > 1.0 + tol.unit_tol {
        return Err(CertError::VacuousHypothesis { theorem, sum_sq });
    }
    Ok(())
}

fn require_orthonormal(basis: &[SpaceElement], tol: &ToleranceConfig) -> Result<(), CertError> {
    if basis.is_empty() || !validate_orthonormal(basis, tol) {
        return Err(HypothesisError::NotOrthonormal.into());
    }
    Ok(())
}

/// Reverse inequality for an orthonormal family with `k_i |f| <= Re<f, e_i>`;
/// factor `(sum k_i^2)^(1/2)`.
pub fn certify_ortho(
    f: &SampledFunction,
    basis: &[SpaceElement],
    k: &[f64],
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    require_orthonormal(basis, tol)?;
    guard_sum_sq(TheoremId::T31, k, tol)?;
    let params = HypothesisParams::OrthoK { basis: basis.to_vec(), k: k.to_vec() };
    let report = checked(f, TheoremId::T31, &params, tol)?;
    ortho_with(TheoremId::T31, f, basis, k, params, report, rule, tol)
}

/// Orthonormal family with `|f - e_i| <= rho_i`; runs the orthonormal
/// certificate with `k_i = sqrt(1 - rho_i^2)`.
pub fn certify_ortho_disk(
    f: &SampledFunction,
    basis: &[SpaceElement],
    rho: &[f64],
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    require_orthonormal(basis, tol)?;
    let k: Vec<f64> = rho.iter().map(|r| (1.0 - r * r).max(0.0).sqrt()).collect();
    guard_sum_sq(TheoremId::C32, &k, tol)?;
    let params = HypothesisParams::OrthoDisk { basis: basis.to_vec(), rho: rho.to_vec() };
    let report = checked(f, TheoremId::C32, &params, tol)?;
    ortho_with(TheoremId::C32, f, basis, &k, params, report, rule, tol)
}

/// Orthonormal family with per-vector bands; runs the orthonormal
/// certificate with `k_i = 2 sqrt(m_i M_i)/(m_i + M_i)`.
pub fn certify_ortho_band(
    f: &SampledFunction,
    basis: &[SpaceElement],
    m: &[f64],
    big_m: &[f64],
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<Certificate, CertError> {
    require_orthonormal(basis, tol)?;
    let params = HypothesisParams::OrthoBand { basis: basis.to_vec(), m: m.to_vec(), big_m: big_m.to_vec() };
    params.validate(f.dim(), tol)?;
    let k: Vec<f64> = m.iter().zip(big_m).map(|(mi, bi)| band_factor(*mi, *bi)).collect();
    guard_sum_sq(TheoremId::C33, &k, tol)?;
    let report = checked(f, TheoremId::C33, &params, tol)?;
    ortho_with(TheoremId::C33, f, basis, &k, params, report, rule, tol)
}

/// Complex-valued certificates. The function is embedded in the
/// two-dimensional real space, `e = alpha + i beta` becomes `(alpha, beta)`,
/// and the matching vector certificate runs there.
///
/// * `UnitK` gives P4_1, `Disk` gives P4_3, `Band` gives P4_4 with its additive form.
/// * `ComplexArg(theta)` gives KARAMATA: the argument bound is checked on the
///   complex data, then the unit-vector certificate runs with `e = 1`,
///   `K = 1/cos theta`.
/// * `ComplexRect` checks the rectangle first, then certifies P4_4 with
///   `e = alpha + i beta`.
pub fn certify_complex(
    f: &SampledFunction,
    params: &HypothesisParams,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<(Certificate, Option<AdditiveForm>), CertError> {
    if f.dim() != 1 {
        return Err(HypothesisError::NotComplex(f.dim()).into());
    }
    let plane = f.realify();
    let result = match params {
        HypothesisParams::UnitK { e, k } => {
            params.validate(1, tol)?;
            (unit_vector_as(TheoremId::P41, &plane, &e.realify(), *k, rule, tol)?, None)
        }
        HypothesisParams::Disk { e, rho } => {
            params.validate(1, tol)?;
            (disk_as(TheoremId::P43, &plane, &e.realify(), *rho, rule, tol)?, None)
        }
        HypothesisParams::Band { e, m, big_m } => {
            params.validate(1, tol)?;
            let (cert, additive) = band_as(TheoremId::P44, &plane, &e.realify(), *m, *big_m, rule, tol)?;
            (cert, Some(additive))
        }
        HypothesisParams::ComplexArg { theta } => {
            let report = checked(f, TheoremId::Karamata, params, tol)?;
            let k = 1.0 / theta.cos();
            let e = SpaceElement::real(&[1.0, 0.0]).expect("finite");
            let mut cert = unit_vector_as(TheoremId::Karamata, &plane, &e, k, rule, tol)?;
            cert.parameters = params.clone();
            cert.hypothesis = report;
            (cert, None)
        }
        HypothesisParams::ComplexRect { alpha, beta, m, big_m } => {
            let report = checked(f, TheoremId::P44, params, tol)?;
            let e = SpaceElement::real(&[*alpha, *beta]).map_err(|err| HypothesisError::InvalidParameter(err.to_string()))?;
            let (mut cert, additive) = band_as(TheoremId::P44, &plane, &e, *m, *big_m, rule, tol)?;
            cert.parameters = params.clone();
            cert.hypothesis = report;
            (cert, Some(additive))
        }
        other => {
            return Err(HypothesisError::InvalidParameter(format!(
                "no complex certificate for hypothesis class {}",
                class_name(other)
            ))
            .into())
        }
    };
    Ok(result)
}

fn class_name(params: &HypothesisParams) -> &'static str {
    match params {
        HypothesisParams::UnitK { .. } => "unit_k",
        HypothesisParams::Disk { .. } => "disk",
        HypothesisParams::Band { .. } => "band",
        HypothesisParams::OrthoK { .. } => "ortho_k",
        HypothesisParams::OrthoDisk { .. } => "ortho_disk",
        HypothesisParams::OrthoBand { .. } => "ortho_band",
        HypothesisParams::ComplexArg { .. } => "complex_arg",
        HypothesisParams::ComplexRect { .. } => "complex_rect",
    }
}

/// Discrete reverse inequality `r sum |x_i| <= |sum x_i|` for
/// `0 <= r <= Re<x_i, e>/|x_i|`, evaluated exactly through the step-function
/// reduction. For `r > 0` this is the unit-vector certificate with `K = 1/r`.
pub fn certify_discrete(xs: &[SpaceElement], e: &SpaceElement, r: f64, tol: &ToleranceConfig) -> Result<Certificate, CertError> {
    let f = from_discrete(xs)?;
    if !(r.is_finite() && r >= 0.0) {
        return Err(HypothesisError::InvalidParameter(format!("r must be >= 0, got {r}")).into());
    }
    // r cannot exceed 1; values just above it are rounding in the caller's estimate.
    let r = if r > 1.0 && r <= 1.0 + tol.margin_tol { 1.0 } else { r };
    if r > 0.0 {
        return unit_vector_as(TheoremId::DiazMetcalf, &f, e, 1.0 / r, QuadratureRule::Step, tol);
    }
    if !validate_unit(e, tol) {
        return Err(HypothesisError::NotUnit(e.norm()).into());
    }
    let params = HypothesisParams::OrthoK { basis: vec![e.clone()], k: vec![0.0] };
    let report = checked(&f, TheoremId::DiazMetcalf, &params, tol)?;
    assemble(&f, QuadratureRule::Step, TheoremId::DiazMetcalf, params, 0.0, &e.scale(0.0), report, tol)
}

/// One line of an automatic certification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AutoEntry {
    Certified {
        certificate: Certificate,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        additive: Option<AdditiveForm>,
    },
    Inapplicable {
        theorem: TheoremId,
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<CheckReport>,
    },
}

impl AutoEntry {
    pub fn theorem(&self) -> TheoremId {
        match self {
            Self::Certified { certificate, .. } => certificate.theorem,
            Self::Inapplicable { theorem, .. } => *theorem,
        }
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Self::Certified { certificate, .. } => Some(certificate),
            Self::Inapplicable { .. } => None,
        }
    }

    fn inapplicable(theorem: TheoremId, err: &CertError) -> Self {
        let report = match err {
            CertError::HypothesisFailed { report, .. } => Some(report.clone()),
            _ => None,
        };
        Self::Inapplicable { theorem, reason: err.to_string(), report }
    }

    fn from_result(theorem: TheoremId, result: Result<Certificate, CertError>) -> Self {
        match result {
            Ok(certificate) => Self::Certified { certificate, additive: None },
            Err(err) => Self::inapplicable(theorem, &err),
        }
    }
}

/// Parameter estimates behind an automatic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Estimates {
    pub e: Option<SpaceElement>,
    #[serde(rename = "K_star")]
    pub k_star: Option<f64>,
    pub rho_star: Option<f64>,
    pub band: Option<crate::hypotheses::BandFit>,
    pub theta_star: Option<f64>,
    pub basis: Option<Vec<SpaceElement>>,
    pub k: Option<Vec<f64>>,
    /// Why each estimator that produced nothing was inapplicable.
    pub notes: Vec<String>,
}

/// The smallest positive stand-in for a fitted radius or angle of exactly 0,
/// which the open-interval parameter ranges exclude.
fn open_interval_floor(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE)
}

/// Fits every hypothesis class to `f` around `e` and collects the estimates.
pub fn estimate(f: &SampledFunction, e: &SpaceElement, basis: Option<&[SpaceElement]>, tol: &ToleranceConfig) -> Estimates {
    let mut est = Estimates { e: Some(e.clone()), ..Default::default() };
    match minimal_k(f, e, tol) {
        Ok(k) => est.k_star = Some(k),
        Err(err) => est.notes.push(format!("K*: {err}")),
    }
    match minimal_rho(f, e, tol) {
        Ok(rho) => {
            if rho >= 1.0 - tol.margin_tol {
                est.notes.push(format!("rho*: {rho} >= 1, disk hypothesis inapplicable"));
            }
            est.rho_star = Some(rho);
        }
        Err(err) => est.notes.push(format!("rho*: {err}")),
    }
    match band_fit(f, e, tol) {
        Ok(fit) => est.band = Some(fit),
        Err(err) => est.notes.push(format!("band: {err}")),
    }
    if f.dim() == 1 {
        match arc_bound(f) {
            Ok(theta) => est.theta_star = Some(theta),
            Err(err) => est.notes.push(format!("theta*: {err}")),
        }
    }
    let basis = match basis {
        Some(b) => Some(b.to_vec()),
        None => complete_basis(e).ok(),
    };
    if let Some(basis) = basis {
        match ortho_coefficients(f, &basis, tol) {
            Ok(k) => est.k = Some(k),
            Err(err) => est.notes.push(format!("k_i: {err}")),
        }
        est.basis = Some(basis);
    }
    est
}

/// Certifies `f` under every applicable hypothesis class with estimated
/// optimal parameters. `e` defaults to the [`direction_search`] winner.
/// Entries are ordered by factor (descending) then theorem; inapplicable
/// classes follow, by theorem.
pub fn auto_certify(
    f: &SampledFunction,
    e: Option<&SpaceElement>,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> (Vec<AutoEntry>, Estimates) {
    let mut theorems = vec![TheoremId::T21, TheoremId::C22, TheoremId::C23];
    if f.dim() == 1 {
        theorems.push(TheoremId::Karamata);
    } else {
        theorems.push(TheoremId::T31);
    }

    let e = match e {
        Some(e) => e.clone(),
        None => match direction_search(f, rule, tol) {
            Ok((e, _)) => e,
            Err(err) => {
                let entries = theorems.into_iter().map(|t| AutoEntry::inapplicable(t, &err)).collect();
                let est = Estimates { notes: vec![format!("direction: {err}")], ..Default::default() };
                return (entries, est);
            }
        },
    };
    let est = estimate(f, &e, None, tol);

    let mut entries = Vec::with_capacity(theorems.len());
    for theorem in theorems {
        let entry = match theorem {
            TheoremId::T21 => match est.k_star {
                Some(k) => AutoEntry::from_result(theorem, certify_unit_vector(f, &e, k, rule, tol)),
                None => missing(theorem, &est, "K*"),
            },
            TheoremId::C22 => match est.rho_star {
                Some(rho) if rho < 1.0 - tol.margin_tol => {
                    AutoEntry::from_result(theorem, certify_disk(f, &e, open_interval_floor(rho), rule, tol))
                }
                Some(rho) => AutoEntry::Inapplicable {
                    theorem,
                    reason: format!("rho* = {rho} is not below 1"),
                    report: None,
                },
                None => missing(theorem, &est, "rho*"),
            },
            TheoremId::C23 => match est.band {
                Some(fit) => match certify_band(f, &e, fit.m, fit.big_m, rule, tol) {
                    Ok((certificate, additive)) => AutoEntry::Certified { certificate, additive: Some(additive) },
                    Err(err) => AutoEntry::inapplicable(theorem, &err),
                },
                None => missing(theorem, &est, "band"),
            },
            TheoremId::Karamata => match est.theta_star {
                Some(theta) => {
                    let params = HypothesisParams::ComplexArg { theta: open_interval_floor(theta) };
                    match certify_complex(f, &params, rule, tol) {
                        Ok((certificate, _)) => AutoEntry::Certified { certificate, additive: None },
                        Err(err) => AutoEntry::inapplicable(theorem, &err),
                    }
                }
                None => missing(theorem, &est, "theta*"),
            },
            TheoremId::T31 => match (&est.basis, &est.k) {
                (Some(basis), Some(k)) => AutoEntry::from_result(theorem, certify_ortho(f, basis, k, rule, tol)),
                _ => missing(theorem, &est, "k_i"),
            },
            _ => unreachable!("auto_certify only runs the estimated classes"),
        };
        entries.push(entry);
    }
    sort_entries(&mut entries);
    (entries, est)
}

fn missing(theorem: TheoremId, est: &Estimates, key: &str) -> AutoEntry {
    let reason = est
        .notes
        .iter()
        .find(|n| n.starts_with(key))
        .cloned()
        .unwrap_or_else(|| format!("{key} unavailable"));
    AutoEntry::Inapplicable { theorem, reason, report: None }
}

fn sort_entries(entries: &mut [AutoEntry]) {
    entries.sort_by(|x, y| match (x.certificate(), y.certificate()) {
        (Some(a), Some(b)) => b.factor.partial_cmp(&a.factor).unwrap_or(Ordering::Equal).then(a.theorem.cmp(&b.theorem)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => x.theorem().cmp(&y.theorem()),
    });
}

/// Score of a direction: the unit-vector factor `1/K*`, or 0 where no finite K exists.
fn direction_score(f: &SampledFunction, e: &SpaceElement, tol: &ToleranceConfig) -> f64 {
    minimal_k(f, e, tol).map(|k| 1.0 / k).unwrap_or(0.0)
}

/// Perturbation steps of the local refinement, from 1e-2 halving down to 1e-6.
fn refinement_steps() -> impl Iterator<Item = f64> {
    std::iter::successors(Some(1e-2), |s| Some(s * 0.5)).take_while(|s| *s >= 1e-6)
}

/// Picks the unit direction with the best unit-vector factor among the
/// normalized integral and the normalized mean of normalized node values,
/// then, for dimension <= 3, improves it by coordinate perturbations.
pub fn direction_search(
    f: &SampledFunction,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
) -> Result<(SpaceElement, Certificate), CertError> {
    let q = integrate(f, rule)?;
    let integral = q.vector_value;
    if integral.norm() <= q.vector_err.max(1e-300) {
        return Err(CertError::ZeroIntegral);
    }
    let mut candidates = vec![integral.normalized().map_err(|_| CertError::ZeroIntegral)?];
    let mean = f
        .active_nodes()
        .filter_map(|(_, x)| x.normalized().ok())
        .fold(SpaceElement::zeros(f.dim()), |acc, u| &acc + &u);
    if let Ok(u) = mean.normalized() {
        candidates.push(u);
    }

    let mut best = candidates[0].clone();
    let mut best_score = direction_score(f, &best, tol);
    for c in &candidates[1..] {
        let s = direction_score(f, c, tol);
        if s > best_score {
            best = c.clone();
            best_score = s;
        }
    }

    if f.dim() <= 3 {
        let dim = f.dim();
        for step in refinement_steps() {
            loop {
                let mut improved = false;
                for j in 0..dim {
                    for unit in [num_complex::Complex64::new(1.0, 0.0), num_complex::Complex64::new(0.0, 1.0)] {
                        for sign in [1.0, -1.0] {
                            let mut coords = best.coords().to_vec();
                            coords[j] += unit * (sign * step);
                            let Ok(trial) = SpaceElement::new(coords).and_then(|v| v.normalized()) else {
                                continue;
                            };
                            let s = direction_score(f, &trial, tol);
                            if s > best_score {
                                best = trial;
                                best_score = s;
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
        }
    }

    let k = minimal_k(f, &best, tol).map_err(CertError::from)?;
    let cert = certify_unit_vector(f, &best, k, rule, tol)?;
    Ok((best, cert))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::function::{sample_family, FamilySpec, FunctionKind, Grid};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn one() -> SpaceElement {
        SpaceElement::complex(1.0, 0.0).unwrap()
    }

    fn unit_grid() -> Grid {
        Grid::uniform(0.0, 1.0, 3).unwrap()
    }

    fn constant(v: SpaceElement) -> SampledFunction {
        sample_family(&FamilySpec::Constant { v }, &unit_grid()).unwrap()
    }

    fn arc(theta: f64) -> SampledFunction {
        let grid = Grid::uniform(-theta, theta, 129).unwrap();
        sample_family(&FamilySpec::ComplexArc { omega: 1.0, phi0: 0.0 }, &grid).unwrap()
    }

    #[test]
    fn unit_vector_constant() {
        let e1 = SpaceElement::basis(2, 0);
        let c = certify_unit_vector(&constant(e1.clone()), &e1, 1.0, QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!((c.lhs, c.rhs, c.factor, c.slack, c.equality_residual), (1.0, 1.0, 1.0, 0.0, 0.0));
        assert!(c.holds);
    }

    #[test]
    fn unit_vector_two_piece_equality() {
        let f = sample_family(&FamilySpec::TwoPieceEquality { k: 2.0 }, &unit_grid()).unwrap();
        let c = certify_unit_vector(&f, &one(), 2.0, QuadratureRule::Step, &tol()).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-15);
        assert!((c.rhs - 0.5).abs() < 1e-15);
        assert_eq!(c.factor, 0.5);
        assert!(c.slack.abs() < 1e-15);
        assert!(c.equality_residual <= 1e-12);
    }

    #[test]
    fn unit_vector_complex_arc() {
        let theta = PI / 3.0;
        let c = certify_unit_vector(&arc(theta), &one(), 2.0, QuadratureRule::Simpson, &tol()).unwrap();
        assert!((c.lhs - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((c.rhs - 3f64.sqrt()).abs() < 1e-8);
        assert!(c.holds);
        assert!((c.factor * c.lhs - PI / 3.0).abs() < 1e-12);
        assert!((c.tightness - 0.6046).abs() < 1e-4);
        assert!(c.equality_residual > 0.1);
    }

    #[test]
    fn refused_when_hypothesis_fails() {
        let err = certify_unit_vector(&arc(PI / 3.0), &one(), 1.5, QuadratureRule::Simpson, &tol()).unwrap_err();
        let CertError::HypothesisFailed { report, .. } = err else { panic!("expected hypothesis failure") };
        assert!(!report.holds);
    }

    #[test]
    fn disk_examples() {
        let grid = Grid::uniform(0.0, 2.0 * PI, 257).unwrap();
        let f = sample_family(&FamilySpec::DiskOrbit { e: one(), r: 0.5, omega: 1.0 }, &grid).unwrap();
        let c = certify_disk(&f, &one(), 0.5, QuadratureRule::Simpson, &tol()).unwrap();
        assert!((c.factor - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((c.rhs - 2.0 * PI).abs() < 1e-9);
        assert!((c.lhs - 6.68).abs() < 0.01);
        assert!(c.holds);

        let e1 = SpaceElement::basis(2, 0);
        let c = certify_disk(&constant(e1.clone()), &e1, 0.1, QuadratureRule::Simpson, &tol()).unwrap();
        assert!((c.factor - 0.99f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.lhs, c.rhs);
        assert!(c.holds);
        let c = certify_disk(&constant(e1.clone()), &e1, 0.999, QuadratureRule::Simpson, &tol()).unwrap();
        assert!((c.factor - 0.0447).abs() < 1e-4);
        assert!(c.holds && c.slack > 0.9);
        assert!(certify_disk(&constant(e1.clone()), &e1, 1.0, QuadratureRule::Simpson, &tol()).is_err());
    }

    #[test]
    fn band_examples() {
        assert_eq!(band_factor(1.0, 4.0), 0.8);
        let e1 = SpaceElement::basis(2, 0);
        let (c, add) = certify_band(&constant(e1.clone()), &e1, 1.0, 1.0, QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!(c.factor, 1.0);
        assert_eq!((add.coefficient_corrected, add.coefficient_printed), (0.0, 0.0));
        assert_eq!(c.lhs, c.rhs);

        let f = sample_family(&FamilySpec::BandEquality { m: 1.0, big_m: 4.0 }, &unit_grid()).unwrap();
        let (c, add) = certify_band(&f, &one(), 1.0, 4.0, QuadratureRule::Step, &tol()).unwrap();
        assert!((c.lhs - 2.0).abs() < 1e-15);
        assert!((c.rhs - 1.6).abs() < 1e-15);
        assert!((add.coefficient_printed - 0.2).abs() < 1e-15);
        assert!((add.coefficient_corrected - 0.25).abs() < 1e-15);
        assert!((add.lhs_minus_rhs - 0.4).abs() < 1e-14);
        assert!((add.bound_corrected - 0.4).abs() < 1e-14);
        assert!((add.bound_printed - 0.32).abs() < 1e-14);
        assert!(!add.printed_holds);
    }

    #[test]
    fn ortho_examples() {
        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let basis = [e1.clone(), e2.clone()];
        let s = 1.0 / 2f64.sqrt();
        let c = certify_ortho(&constant(&e1 + &e2), &basis, &[s, s], QuadratureRule::Simpson, &tol()).unwrap();
        assert!((c.factor - 1.0).abs() < 1e-15);
        assert!((c.lhs - 2f64.sqrt()).abs() < 1e-15 && (c.rhs - 2f64.sqrt()).abs() < 1e-15);
        assert!(c.equality_residual <= 1e-12);

        let c = certify_ortho(&constant(e1.clone()), &basis, &[1.0, 0.0], QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!(c.factor, 1.0);
        assert_eq!(c.equality_residual, 0.0);

        let not_ortho = [e1.clone(), e1.clone()];
        assert!(certify_ortho(&constant(e1), &not_ortho, &[0.5, 0.5], QuadratureRule::Simpson, &tol()).is_err());
    }

    #[test]
    fn ortho_reduces_to_unit_vector() {
        let f = arc(PI / 4.0);
        let k1 = (PI / 4.0).cos();
        let a = certify_ortho(&f, &[one()], &[k1], QuadratureRule::Simpson, &tol()).unwrap();
        let b = certify_unit_vector(&f, &one(), 1.0 / k1, QuadratureRule::Simpson, &tol()).unwrap();
        assert!((a.factor - b.factor).abs() < 1e-12);
        assert!((a.equality_residual - b.equality_residual).abs() < 1e-12);
    }

    #[test]
    fn ortho_disk_examples() {
        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let basis = [e1.clone(), e2.clone()];
        let s = 1.0 / 2f64.sqrt();
        let f = constant((&e1 + &e2).scale(0.5));
        let c = certify_ortho_disk(&f, &basis, &[s, s], QuadratureRule::Simpson, &tol()).unwrap();
        assert!((c.factor - 1.0).abs() < 1e-15);
        assert!((c.lhs - s).abs() < 1e-15 && (c.rhs - s).abs() < 1e-15);
        assert!(c.equality_residual <= 1e-12);

        let factor = (2.0f64 - 2.0 * 0.999 * 0.999).sqrt();
        assert!((factor - 0.0632).abs() < 1e-4);
    }

    #[test]
    fn ortho_disk_single_vector_matches_disk() {
        let grid = Grid::uniform(0.0, 2.0 * PI, 65).unwrap();
        let f = sample_family(&FamilySpec::DiskOrbit { e: one(), r: 0.4, omega: 1.0 }, &grid).unwrap();
        let a = certify_ortho_disk(&f, &[one()], &[0.4], QuadratureRule::Simpson, &tol()).unwrap();
        let b = certify_disk(&f, &one(), 0.4, QuadratureRule::Simpson, &tol()).unwrap();
        assert!((a.factor - b.factor).abs() < 1e-15);
        assert!((a.slack - b.slack).abs() < 1e-12);
    }

    #[test]
    fn ortho_band_guards() {
        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let basis = [e1.clone(), e2.clone()];
        let f = constant(&e1 + &e2);
        let err = certify_ortho_band(&f, &basis, &[1.0, 1.0], &[4.0, 4.0], QuadratureRule::Simpson, &tol()).unwrap_err();
        let CertError::VacuousHypothesis { sum_sq, .. } = err else { panic!("expected vacuity guard") };
        assert!((sum_sq.sqrt() - 1.1314).abs() < 1e-4);

        let diag = (&e1 + &e2).scale(1.0 / 2f64.sqrt());
        let f = constant(diag);
        let params = HypothesisParams::OrthoBand { basis: basis.to_vec(), m: vec![1.0, 1.0], big_m: vec![1.0, 1.0] };
        assert!(!check(&f, &params, &tol()).unwrap().holds);
        assert!(certify_ortho_band(&f, &basis, &[1.0, 1.0], &[1.0, 1.0], QuadratureRule::Simpson, &tol()).is_err());
    }

    #[test]
    fn ortho_band_single_matches_band() {
        let f = sample_family(&FamilySpec::BandEquality { m: 1.0, big_m: 4.0 }, &unit_grid()).unwrap();
        let c = certify_ortho_band(&f, &[one()], &[1.0], &[4.0], QuadratureRule::Step, &tol()).unwrap();
        let (b, _) = certify_band(&f, &one(), 1.0, 4.0, QuadratureRule::Step, &tol()).unwrap();
        assert_eq!(c.factor, 0.8);
        assert_eq!(c.factor, b.factor);
    }

    #[test]
    fn karamata_matches_unit_vector() {
        let theta = PI / 3.0;
        let f = arc(theta);
        let (k, _) = certify_complex(&f, &HypothesisParams::ComplexArg { theta }, QuadratureRule::Simpson, &tol()).unwrap();
        let u = certify_unit_vector(&f, &one(), 1.0 / theta.cos(), QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!(k.theorem, TheoremId::Karamata);
        assert_eq!((k.factor, k.lhs, k.rhs, k.slack), (u.factor, u.lhs, u.rhs, u.slack));
        assert_eq!(k.equality_residual, u.equality_residual);
    }

    #[test]
    fn complex_rect_on_positive_multiple() {
        let s = 1.0 / 2f64.sqrt();
        let f = constant(SpaceElement::complex(1.0, 1.0).unwrap());
        let params = HypothesisParams::ComplexRect { alpha: s, beta: s, m: 1.0, big_m: 2.0 };
        let (c, add) = certify_complex(&f, &params, QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!(c.theorem, TheoremId::P44);
        assert!(c.holds);
        assert!((c.tightness - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
        assert!(add.is_some());
    }

    #[test]
    fn complex_disk_delegates_to_plane() {
        let grid = Grid::uniform(0.0, 2.0 * PI, 129).unwrap();
        let f = sample_family(&FamilySpec::DiskOrbit { e: one(), r: 0.5, omega: 1.0 }, &grid).unwrap();
        let params = HypothesisParams::Disk { e: one(), rho: 0.5 };
        let (c, _) = certify_complex(&f, &params, QuadratureRule::Simpson, &tol()).unwrap();
        let d = certify_disk(&f.realify(), &one().realify(), 0.5, QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!(c.theorem, TheoremId::P43);
        assert_eq!((c.factor, c.lhs, c.rhs, c.equality_residual), (d.factor, d.lhs, d.rhs, d.equality_residual));
        let plain = certify_disk(&f, &one(), 0.5, QuadratureRule::Simpson, &tol()).unwrap();
        assert_eq!((c.lhs, c.rhs), (plain.lhs, plain.rhs));
    }

    #[test]
    fn complex_requires_dimension_one() {
        let f = constant(SpaceElement::basis(2, 0));
        let err = certify_complex(&f, &HypothesisParams::ComplexArg { theta: 0.5 }, QuadratureRule::Simpson, &tol());
        assert!(matches!(err, Err(CertError::Hypothesis(HypothesisError::NotComplex(2)))));
    }

    #[test]
    fn discrete_examples() {
        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let c = certify_discrete(&[e1.clone(), e1.clone()], &e1, 1.0, &tol()).unwrap();
        assert_eq!((c.lhs, c.rhs, c.equality_residual), (2.0, 2.0, 0.0));

        let third = PI / 3.0;
        let xs = [
            SpaceElement::complex(third.cos(), third.sin()).unwrap(),
            SpaceElement::complex(third.cos(), -third.sin()).unwrap(),
        ];
        let c = certify_discrete(&xs, &one(), 0.5, &tol()).unwrap();
        assert!((c.lhs - 2.0).abs() < 1e-15 && (c.rhs - 1.0).abs() < 1e-15);
        assert!(c.slack.abs() < 1e-15 && c.equality_residual < 1e-15);

        let diag = (&e1 + &e2).scale(1.0 / 2f64.sqrt());
        let r = 1.0 / 2f64.sqrt();
        let c = certify_discrete(&[e1.clone(), e2.clone()], &diag, r, &tol()).unwrap();
        assert_eq!(c.lhs, 2.0);
        assert!((c.rhs - 2f64.sqrt()).abs() < 1e-15);
        assert!((c.factor * c.lhs - c.rhs).abs() < 1e-15);
        assert!(c.equality_residual < 1e-15);

        assert!(matches!(certify_discrete(&[e1.clone(), e2], &e1, 0.5, &tol()), Err(CertError::HypothesisFailed { .. })));
    }

    #[test]
    fn auto_on_complex_arc() {
        let (entries, est) = auto_certify(&arc(PI / 3.0), None, QuadratureRule::Simpson, &tol());
        let factor = |t: TheoremId| {
            entries.iter().find(|e| e.theorem() == t).and_then(|e| e.certificate()).map(|c| c.factor)
        };
        assert!((factor(TheoremId::T21).unwrap() - 0.5).abs() < 1e-9);
        assert!((factor(TheoremId::Karamata).unwrap() - 0.5).abs() < 1e-12);
        assert!((factor(TheoremId::C23).unwrap() - 0.5).abs() < 1e-9);
        assert!(factor(TheoremId::C22).is_none());
        assert!((est.rho_star.unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(entries.last(), Some(AutoEntry::Inapplicable { theorem: TheoremId::C22, .. })));
    }

    #[test]
    fn auto_on_constant_is_all_equalities() {
        let v = SpaceElement::real(&[0.6, 0.8, 0.0]).unwrap();
        let (entries, _) = auto_certify(&constant(v), None, QuadratureRule::Simpson, &tol());
        assert_eq!(entries.len(), 4);
        for entry in &entries {
            let c = entry.certificate().unwrap_or_else(|| panic!("{entry:?}"));
            assert!((c.factor - 1.0).abs() < 1e-9, "{}: {}", c.theorem, c.factor);
            assert!(c.equality_residual < 1e-6);
        }
    }

    #[test]
    fn auto_on_cancelling_pair_is_inapplicable() {
        let e1 = SpaceElement::basis(2, 0);
        let f = from_discrete(&[e1.clone(), e1.scale(-1.0)]).unwrap();
        let (entries, _) = auto_certify(&f, None, QuadratureRule::Step, &tol());
        assert!(!entries.is_empty());
        assert!(entries.iter().all(|e| e.certificate().is_none()));
    }

    #[test]
    fn direction_search_examples() {
        let (e, c) = direction_search(&arc(PI / 3.0), QuadratureRule::Simpson, &tol()).unwrap();
        assert!((&e - &one()).norm() < 1e-6);
        assert!((c.factor - 0.5).abs() < 1e-9);

        let v = SpaceElement::real(&[3.0, 4.0]).unwrap();
        let (e, c) = direction_search(&constant(v.clone()), QuadratureRule::Simpson, &tol()).unwrap();
        assert!((&e - &v.scale(0.2)).norm() < 1e-12);
        assert!((c.factor - 1.0).abs() < 1e-12);

        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let f = from_discrete(&[e1.clone(), e2.clone()]).unwrap();
        let (e, c) = direction_search(&f, QuadratureRule::Step, &tol()).unwrap();
        assert!((&e - &(&e1 + &e2).scale(1.0 / 2f64.sqrt())).norm() < 1e-9);
        assert!((c.factor - 1.0 / 2f64.sqrt()).abs() < 1e-12);

        let g = from_discrete(&[e1.clone(), e1.scale(-1.0)]).unwrap();
        assert_eq!(direction_search(&g, QuadratureRule::Step, &tol()).unwrap_err(), CertError::ZeroIntegral);
    }

    #[test]
    fn certificates_keep_sandwich_on_step_functions() {
        let grid = Grid::new(vec![0.0, 0.3, 1.0]).unwrap();
        let vals = vec![
            SpaceElement::complex(1.0, 0.2).unwrap(),
            SpaceElement::complex(0.5, -0.4).unwrap(),
            SpaceElement::complex(0.5, -0.4).unwrap(),
        ];
        let f = SampledFunction::new(grid, vals, FunctionKind::Step).unwrap();
        let k = minimal_k(&f, &one(), &tol()).unwrap();
        let c = certify_unit_vector(&f, &one(), k, QuadratureRule::Step, &tol()).unwrap();
        assert!(c.factor * c.lhs <= c.rhs + 1e-15);
        assert!(c.rhs <= c.lhs);
    }
}
