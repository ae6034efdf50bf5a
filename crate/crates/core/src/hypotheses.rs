//! Pointwise hypothesis checks on sampled functions, and estimators for the
//! best hypothesis parameters a data set supports.
//!
//! A check evaluates the slack of the defining inequality at every observable
//! node (all nodes, minus the last node of a step function), normalizes it by
//! `max(1, |f(t)|)`, and reports the worst one. The hypothesis holds when the
//! worst normalized margin is at least `-margin_tol`; boundary cases (margin
//! exactly zero) hold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::SampledFunction;
use crate::space::{validate_orthonormal, validate_unit, Scalar, SpaceElement, ToleranceConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypothesisError {
    #[error("dimension mismatch: function has dimension {function}, parameters have dimension {params}")]
    DimensionMismatch { function: usize, params: usize },
    #[error("complex hypothesis needs a one-dimensional function, got dimension {0}")]
    NotComplex(usize),
    #[error("e is not a unit vector (|e| = {0})")]
    NotUnit(f64),
    #[error("family is not orthonormal")]
    NotOrthonormal,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no finite K exists: Re<f(t), e> = {re} <= 0 with |f(t)| = {norm} at t = {t}")]
    NoFiniteK { t: f64, re: f64, norm: f64 },
    #[error("no band exists: Re<f(t), e> = {re} <= 0 at t = {t}")]
    BandInfeasible { t: f64, re: f64 },
    #[error("argument bound needs Re f(t) > 0, got {re} at t = {t}")]
    NonPositiveReal { t: f64, re: f64 },
}

/// Parameters of every supported hypothesis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum HypothesisParams {
    /// `|f(t)| <= K Re<f(t), e>`.
    UnitK { e: SpaceElement, #[serde(rename = "K")] k: f64 },
    /// `|f(t) - e| <= rho`.
    Disk { e: SpaceElement, rho: f64 },
    /// `Re<M e - f(t), f(t) - m e> >= 0`, equivalently `|f(t) - (M+m)/2 e| <= (M-m)/2`.
    Band { e: SpaceElement, m: f64, #[serde(rename = "M")] big_m: f64 },
    /// `k_i |f(t)| <= Re<f(t), e_i>` for every i.
    OrthoK { basis: Vec<SpaceElement>, k: Vec<f64> },
    /// `|f(t) - e_i| <= rho_i` for every i.
    OrthoDisk { basis: Vec<SpaceElement>, rho: Vec<f64> },
    /// Band condition against every `e_i` with its own `(m_i, M_i)`.
    OrthoBand { basis: Vec<SpaceElement>, m: Vec<f64>, #[serde(rename = "M")] big_m: Vec<f64> },
    /// `|arg f(t)| <= theta` in one complex dimension.
    ComplexArg { theta: f64 },
    /// `m alpha <= Re f <= M alpha` and `m beta <= Im f <= M beta`.
    ComplexRect { alpha: f64, beta: f64, m: f64, #[serde(rename = "M")] big_m: f64 },
}

/// Outcome of a pointwise check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub holds: bool,
    /// Smallest normalized margin over the observable nodes.
    pub worst_margin: f64,
    /// The t-value where `worst_margin` occurs; smallest t among ties.
    pub worst_node: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_node_margins: Option<Vec<f64>>,
    /// For rectangle checks: worst margin of the implied complex band form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implied_band_margin: Option<f64>,
}

impl CheckReport {
    fn from_margins(nodes: &[f64], margins: Vec<f64>, tol: &ToleranceConfig, keep_margins: bool) -> Self {
        let mut worst_margin = f64::INFINITY;
        let mut worst_node = nodes.first().copied().unwrap_or(f64::NAN);
        for (&t, &m) in nodes.iter().zip(&margins) {
            if m < worst_margin {
                worst_margin = m;
                worst_node = t;
            }
        }
        if margins.is_empty() {
            worst_margin = 0.0;
        }
        Self {
            holds: worst_margin >= -tol.margin_tol,
            worst_margin,
            worst_node,
            per_node_margins: keep_margins.then_some(margins),
            implied_band_margin: None,
        }
    }

    pub fn without_margins(mut self) -> Self {
        self.per_node_margins = None;
        self
    }
}

fn scale_of(x: &SpaceElement) -> f64 {
    x.norm().max(1.0)
}

fn invalid(msg: impl Into<String>) -> HypothesisError {
    HypothesisError::InvalidParameter(msg.into())
}

fn require_unit(e: &SpaceElement, dim: usize, tol: &ToleranceConfig) -> Result<(), HypothesisError> {
    if e.dim() != dim {
        return Err(HypothesisError::DimensionMismatch { function: dim, params: e.dim() });
    }
    if !validate_unit(e, tol) {
        return Err(HypothesisError::NotUnit(e.norm()));
    }
    Ok(())
}

fn require_basis(basis: &[SpaceElement], len: usize, dim: usize, tol: &ToleranceConfig) -> Result<(), HypothesisError> {
    if basis.is_empty() {
        return Err(invalid("orthonormal family must be non-empty"));
    }
    if basis.len() != len {
        return Err(invalid(format!("{} basis vectors but {} coefficients", basis.len(), len)));
    }
    if let Some(e) = basis.iter().find(|e| e.dim() != dim) {
        return Err(HypothesisError::DimensionMismatch { function: dim, params: e.dim() });
    }
    if !validate_orthonormal(basis, tol) {
        return Err(HypothesisError::NotOrthonormal);
    }
    Ok(())
}

fn require_band(m: f64, big_m: f64) -> Result<(), HypothesisError> {
    if !(m.is_finite() && big_m.is_finite() && m > 0.0 && m <= big_m) {
        return Err(invalid(format!("band needs 0 < m <= M, got m = {m}, M = {big_m}")));
    }
    Ok(())
}

fn require_open_unit(name: &str, value: f64) -> Result<(), HypothesisError> {
    if !(value > 0.0 && value < 1.0) {
        return Err(invalid(format!("{name} must lie in (0, 1), got {value}")));
    }
    Ok(())
}

impl HypothesisParams {
    /// Range and shape validation against a function of dimension `dim`.
    pub fn validate(&self, dim: usize, tol: &ToleranceConfig) -> Result<(), HypothesisError> {
        match self {
            Self::UnitK { e, k } => {
                require_unit(e, dim, tol)?;
                if !(k.is_finite() && *k >= 1.0) {
                    return Err(invalid(format!("K must be finite and >= 1, got {k}")));
                }
            }
            Self::Disk { e, rho } => {
                require_unit(e, dim, tol)?;
                require_open_unit("rho", *rho)?;
            }
            Self::Band { e, m, big_m } => {
                require_unit(e, dim, tol)?;
                require_band(*m, *big_m)?;
            }
            Self::OrthoK { basis, k } => {
                require_basis(basis, k.len(), dim, tol)?;
                if k.iter().any(|ki| !(ki.is_finite() && *ki >= 0.0)) {
                    return Err(invalid("every k_i must be finite and >= 0"));
                }
            }
            Self::OrthoDisk { basis, rho } => {
                require_basis(basis, rho.len(), dim, tol)?;
                for r in rho {
                    require_open_unit("rho_i", *r)?;
                }
            }
            Self::OrthoBand { basis, m, big_m } => {
                require_basis(basis, m.len(), dim, tol)?;
                if m.len() != big_m.len() {
                    return Err(invalid("m and M lists differ in length"));
                }
                for (mi, bi) in m.iter().zip(big_m) {
                    require_band(*mi, *bi)?;
                }
            }
            Self::ComplexArg { theta } => {
                if dim != 1 {
                    return Err(HypothesisError::NotComplex(dim));
                }
                if !(*theta > 0.0 && *theta < std::f64::consts::FRAC_PI_2) {
                    return Err(invalid(format!("theta must lie in (0, pi/2), got {theta}")));
                }
            }
            Self::ComplexRect { alpha, beta, m, big_m } => {
                if dim != 1 {
                    return Err(HypothesisError::NotComplex(dim));
                }
                if ((alpha * alpha + beta * beta).sqrt() - 1.0).abs() > tol.unit_tol {
                    return Err(HypothesisError::NotUnit((alpha * alpha + beta * beta).sqrt()));
                }
                require_band(*m, *big_m)?;
            }
        }
        Ok(())
    }

    /// Normalized slack of the hypothesis at a single value.
    fn margin(&self, x: &SpaceElement) -> f64 {
        let scale = scale_of(x);
        match self {
            Self::UnitK { e, k } => (k * x.re_inner(e) - x.norm()) / scale,
            Self::Disk { e, rho } => (rho - (x - e).norm()) / scale,
            Self::Band { e, m, big_m } => band_margin(x, e, *m, *big_m),
            Self::OrthoK { basis, k } => basis
                .iter()
                .zip(k)
                .map(|(e, ki)| (x.re_inner(e) - ki * x.norm()) / scale)
                .fold(f64::INFINITY, f64::min),
            Self::OrthoDisk { basis, rho } => basis
                .iter()
                .zip(rho)
                .map(|(e, r)| (r - (x - e).norm()) / scale)
                .fold(f64::INFINITY, f64::min),
            Self::OrthoBand { basis, m, big_m } => basis
                .iter()
                .zip(m.iter().zip(big_m))
                .map(|(e, (mi, bi))| band_margin(x, e, *mi, *bi))
                .fold(f64::INFINITY, f64::min),
            Self::ComplexArg { theta } => {
                let z = x.coords()[0];
                if z == Scalar::new(0.0, 0.0) {
                    // the zero value carries no argument constraint
                    *theta
                } else {
                    theta - z.im.atan2(z.re).abs()
                }
            }
            Self::ComplexRect { alpha, beta, m, big_m } => {
                let z = x.coords()[0];
                [z.re - m * alpha, big_m * alpha - z.re, z.im - m * beta, big_m * beta - z.im]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
                    / scale
            }
        }
    }
}

/// Both forms of the band condition, each evaluated on its own, and the
/// smaller normalized slack returned. The quadratic form is normalized by the
/// square of the scale to keep the two comparable.
fn band_margin(x: &SpaceElement, e: &SpaceElement, m: f64, big_m: f64) -> f64 {
    let scale = scale_of(x);
    let upper = e.scale(big_m);
    let lower = e.scale(m);
    let quadratic = (&upper - x).re_inner(&(x - &lower));
    let center = e.scale(0.5 * (big_m + m));
    let ball = 0.5 * (big_m - m) - (x - &center).norm();
    (quadratic / (scale * scale)).min(ball / scale)
}

/// Checks `params` at every observable node of `f`.
pub fn check(f: &SampledFunction, params: &HypothesisParams, tol: &ToleranceConfig) -> Result<CheckReport, HypothesisError> {
    check_with(f, params, tol, false)
}

/// As [`check`], also returning the per-node margins.
pub fn check_detailed(
    f: &SampledFunction,
    params: &HypothesisParams,
    tol: &ToleranceConfig,
) -> Result<CheckReport, HypothesisError> {
    check_with(f, params, tol, true)
}

fn check_with(
    f: &SampledFunction,
    params: &HypothesisParams,
    tol: &ToleranceConfig,
    keep_margins: bool,
) -> Result<CheckReport, HypothesisError> {
    params.validate(f.dim(), tol)?;
    let (nodes, margins): (Vec<f64>, Vec<f64>) = f.active_nodes().map(|(t, x)| (t, params.margin(x))).unzip();
    let mut report = CheckReport::from_margins(&nodes, margins, tol, keep_margins);

    if let HypothesisParams::ComplexRect { alpha, beta, m, big_m } = params {
        let e = Scalar::new(*alpha, *beta);
        let implied = f
            .active_nodes()
            .map(|(_, x)| complex_band_form(x.coords()[0], e, *m, *big_m) / (scale_of(x) * scale_of(x)))
            .fold(f64::INFINITY, f64::min);
        report.implied_band_margin = Some(implied);
        if report.holds && implied < -tol.margin_tol {
            report.holds = false;
        }
    }
    Ok(report)
}

/// `Re[(M e - z)(conj(z) - m conj(e))]`, the complex band expression.
pub fn complex_band_form(z: Scalar, e: Scalar, m: f64, big_m: f64) -> f64 {
    ((e * big_m - z) * (z.conj() - e.conj() * m)).re
}

/// Checks the rectangle conditions and, when they hold, confirms the implied
/// complex band form is non-negative at every node.
pub fn rect_check(
    f: &SampledFunction,
    alpha: f64,
    beta: f64,
    m: f64,
    big_m: f64,
    tol: &ToleranceConfig,
) -> Result<CheckReport, HypothesisError> {
    check(f, &HypothesisParams::ComplexRect { alpha, beta, m, big_m }, tol)
}

/// Smallest `K >= 1` with `|f(t)| <= K Re<f(t), e>` at every observable node.
/// Zero-valued nodes are skipped. Floating-point results below 1 are clamped
/// up to 1.
pub fn minimal_k(f: &SampledFunction, e: &SpaceElement, tol: &ToleranceConfig) -> Result<f64, HypothesisError> {
    require_unit(e, f.dim(), tol)?;
    let mut k: f64 = 1.0;
    for (t, x) in f.active_nodes() {
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        let re = x.re_inner(e);
        if re <= 0.0 {
            return Err(HypothesisError::NoFiniteK { t, re, norm });
        }
        k = k.max(norm / re);
    }
    Ok(k)
}

/// Largest distance `|f(t) - e|`. Values `>= 1` are returned as-is; the
/// caller decides applicability.
pub fn minimal_rho(f: &SampledFunction, e: &SpaceElement, tol: &ToleranceConfig) -> Result<f64, HypothesisError> {
    require_unit(e, f.dim(), tol)?;
    Ok(f.active_nodes().map(|(_, x)| (x - e).norm()).fold(0.0, f64::max))
}

/// A fitted band and its reverse factor `2 sqrt(mM)/(M + m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub factor: f64,
}

/// Node data `(b_t, q_t) = (Re<f(t), e>, |f(t) - b_t e|^2)` for the band search.
pub(crate) fn band_data(f: &SampledFunction, e: &SpaceElement) -> Result<Vec<(f64, f64)>, HypothesisError> {
    f.active_nodes()
        .map(|(t, x)| {
            let re = x.re_inner(e);
            if re <= 0.0 {
                Err(HypothesisError::BandInfeasible { t, re })
            } else {
                Ok((re, (x - &e.scale(re)).norm_sqr()))
            }
        })
        .collect()
}

/// `D(u) = max_t ((1 - 2 b_t u)^2 + 4 u^2 q_t)` with `u = 1/(m + M)`.
/// Convex in `u` as a maximum of convex parabolas; equals 1 at `u = 0` and at
/// `u = min_t b_t/|f(t)|^2`.
pub(crate) fn band_discriminant(data: &[(f64, f64)], u: f64) -> f64 {
    data.iter()
        .map(|&(b, q)| (1.0 - 2.0 * b * u).powi(2) + 4.0 * u * u * q)
        .fold(0.0, f64::max)
}

/// Golden-section iterations; the bracket shrinks by 0.618 per step, so 120
/// steps reach the limit of double precision from any starting width.
const GOLDEN_STEPS: usize = 120;

/// The band `(m, M)` maximizing `2 sqrt(mM)/(M + m)` subject to
/// `|f(t)|^2 + mM <= (M + m) Re<f(t), e>` at every node.
///
/// With `u = 1/(m + M)` the constraint reads `mM u^2 <= b_t u - |f(t)|^2 u^2`,
/// and `1 - 4 mM u^2 >= D(u)` (see [`band_discriminant`]). The best band
/// minimizes `D` over `u`; then `factor = sqrt(1 - D)` and
/// `m, M = (1 -+ sqrt D)/(2u)`. Working with `D` instead of `mM` keeps the
/// width `M - m` accurate when the band is nearly degenerate.
pub fn band_fit(f: &SampledFunction, e: &SpaceElement, tol: &ToleranceConfig) -> Result<BandFit, HypothesisError> {
    require_unit(e, f.dim(), tol)?;
    let data = band_data(f, e)?;
    // b_t > 0 at every node, so the bracket is finite.
    let u_max = data.iter().map(|&(b, q)| b / (b * b + q)).fold(f64::INFINITY, f64::min);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, u_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut d1 = band_discriminant(&data, x1);
    let mut d2 = band_discriminant(&data, x2);
    for _ in 0..GOLDEN_STEPS {
        if d1 > d2 {
            lo = x1;
            x1 = x2;
            d1 = d2;
            x2 = lo + inv_phi * (hi - lo);
            d2 = band_discriminant(&data, x2);
        } else {
            hi = x2;
            x2 = x1;
            d2 = d1;
            x1 = hi - inv_phi * (hi - lo);
            d1 = band_discriminant(&data, x1);
        }
        if hi - lo <= f64::EPSILON * u_max {
            break;
        }
    }
    let (u, d) = [(x1, d1), (x2, d2), (hi, band_discriminant(&data, hi))]
        .into_iter()
        .fold((x1, d1), |best, cand| if cand.1 < best.1 { cand } else { best });
    if !(d < 1.0 && u > 0.0) {
        return Err(invalid("band search found no feasible band"));
    }

    let root = d.sqrt();
    let big_m = (1.0 + root) / (2.0 * u);
    let m = (1.0 - root) / (2.0 * u);
    Ok(BandFit { m, big_m, factor: (1.0 - d).sqrt().min(1.0) })
}

/// `k_i = max(0, min_t Re<f(t), e_i>/|f(t)|)` over non-zero observable nodes.
pub fn ortho_coefficients(
    f: &SampledFunction,
    basis: &[SpaceElement],
    tol: &ToleranceConfig,
) -> Result<Vec<f64>, HypothesisError> {
    require_basis(basis, basis.len(), f.dim(), tol)?;
    Ok(basis
        .iter()
        .map(|e| {
            f.active_nodes()
                .filter_map(|(_, x)| {
                    let n = x.norm();
                    (n > 0.0).then(|| x.re_inner(e) / n)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .map(|k| if k.is_finite() { k.max(0.0) } else { 0.0 })
        .collect())
}

/// Largest `|arg f(t)|` over observable nodes of a one-dimensional function.
pub fn arc_bound(f: &SampledFunction) -> Result<f64, HypothesisError> {
    if f.dim() != 1 {
        return Err(HypothesisError::NotComplex(f.dim()));
    }
    let mut theta: f64 = 0.0;
    for (t, x) in f.active_nodes() {
        let z = x.coords()[0];
        if z.re <= 0.0 {
            return Err(HypothesisError::NonPositiveReal { t, re: z.re });
        }
        theta = theta.max(z.im.atan2(z.re).abs());
    }
    Ok(theta)
}
