//! Composite quadrature for the vector integral `int f dt` and the scalar
//! norm integral `int |f| dt`.
//!
//! Every rule works on one real-valued sequence at a time. Vector integrals
//! apply it to the real and imaginary part of each coordinate separately, in
//! a fixed order. Error estimates compare the full grid against the grid with
//! every other interior node dropped (Richardson), plus a rounding floor.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::{sample_family, FamilySpec, FunctionError, FunctionKind, Grid, SampledFunction};
use crate::space::{Scalar, SpaceElement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("simpson needs an even number of subintervals, got {0}")]
    SimpsonOddSubintervals(usize),
    #[error("rule `{rule}` cannot integrate a {kind:?} function")]
    IncompatibleRule { rule: QuadratureRule, kind: FunctionKind },
    #[error("gauss-legendre order must be in 2..=10, got {0}")]
    InvalidGaussOrder(usize),
    #[error("gauss-legendre needs at least one panel")]
    InvalidPanels,
    #[error("convergence study needs at least 3 grid sizes, got {0}")]
    TooFewSizes(usize),
    #[error("grid sizes must be strictly increasing and at least 2")]
    InvalidSizes,
    #[error("convergence study needs a smooth family")]
    NotSmooth,
    #[error(transparent)]
    Function(#[from] FunctionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Exact for step functions.
    Step,
    Trapezoid,
    Simpson,
    GaussLegendre { order: usize, panels: usize },
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Step => write!(f, "step"),
            Self::Trapezoid => write!(f, "trapezoid"),
            Self::Simpson => write!(f, "simpson"),
            Self::GaussLegendre { order, panels } => write!(f, "gauss_legendre({order},{panels})"),
        }
    }
}

impl QuadratureRule {
    /// Asymptotic order used to scale the Richardson difference. The
    /// Gauss–Legendre rule reads node data through piecewise-linear
    /// interpolation, which caps it at 2.
    fn order(&self) -> i32 {
        match self {
            Self::Step => 0,
            Self::Trapezoid | Self::GaussLegendre { .. } => 2,
            Self::Simpson => 4,
        }
    }

    fn check_compatible(&self, f: &SampledFunction) -> Result<(), QuadratureError> {
        let ok = match (self, f.kind()) {
            (Self::Step, FunctionKind::Step) => true,
            (Self::Step, FunctionKind::Smooth) | (_, FunctionKind::Step) => false,
            _ => true,
        };
        if !ok {
            return Err(QuadratureError::IncompatibleRule { rule: *self, kind: f.kind() });
        }
        match *self {
            Self::Simpson if !f.grid().subintervals().is_multiple_of(2) => {
                Err(QuadratureError::SimpsonOddSubintervals(f.grid().subintervals()))
            }
            Self::GaussLegendre { order, .. } if !(2..=10).contains(&order) => {
                Err(QuadratureError::InvalidGaussOrder(order))
            }
            Self::GaussLegendre { panels: 0, .. } => Err(QuadratureError::InvalidPanels),
            _ => Ok(()),
        }
    }
}

/// Both integrals with their absolute error estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub vector_value: SpaceElement,
    pub vector_err: f64,
    pub scalar_value: f64,
    pub scalar_err: f64,
}

impl QuadratureResult {
    pub fn err_estimate(&self) -> f64 {
        self.vector_err + self.scalar_err
    }
}

pub fn integrate(f: &SampledFunction, rule: QuadratureRule) -> Result<QuadratureResult, QuadratureError> {
    let (vector_value, vector_err) = integrate_vector(f, rule)?;
    let (scalar_value, scalar_err) = integrate_norm(f, rule)?;
    Ok(QuadratureResult { vector_value, vector_err, scalar_value, scalar_err })
}

/// Coordinatewise integral of `f`. The error is the Euclidean norm of the
/// per-component estimates.
pub fn integrate_vector(f: &SampledFunction, rule: QuadratureRule) -> Result<(SpaceElement, f64), QuadratureError> {
    rule.check_compatible(f)?;
    let grid = f.grid();
    let mut coords = Vec::with_capacity(f.dim());
    let mut err_sq = 0.0;
    let mut ys = vec![0.0; grid.len()];
    for j in 0..f.dim() {
        let mut parts = [0.0; 2];
        for (part, slot) in parts.iter_mut().enumerate() {
            for (y, v) in ys.iter_mut().zip(f.values()) {
                let c = v.coords()[j];
                *y = if part == 0 { c.re } else { c.im };
            }
            let (value, err) = integrate_samples(grid, f.kind(), &ys, rule);
            *slot = value;
            err_sq += err * err;
        }
        coords.push(Scalar::new(parts[0], parts[1]));
    }
    Ok((SpaceElement::from_coords_unchecked(coords), err_sq.sqrt()))
}

/// Integral of `t -> |f(t)|`, interpolating the node norms directly.
pub fn integrate_norm(f: &SampledFunction, rule: QuadratureRule) -> Result<(f64, f64), QuadratureError> {
    rule.check_compatible(f)?;
    let ys: Vec<f64> = f.values().iter().map(SpaceElement::norm).collect();
    let (value, err) = integrate_samples(f.grid(), f.kind(), &ys, rule);
    Ok((value.max(0.0), err))
}

/// Applies `rule` to node values `ys`; returns the value and an error estimate.
fn integrate_samples(grid: &Grid, kind: FunctionKind, ys: &[f64], rule: QuadratureRule) -> (f64, f64) {
    let ts = grid.nodes();
    match rule {
        QuadratureRule::Step => {
            debug_assert_eq!(kind, FunctionKind::Step);
            let value = ts.windows(2).zip(ys).map(|(w, y)| y * (w[1] - w[0])).sum();
            (value, 0.0)
        }
        QuadratureRule::Trapezoid | QuadratureRule::Simpson => {
            let value = node_rule(ts, ys, rule);
            let richardson = coarse_estimate(ts, ys, rule)
                .map(|coarse| (value - coarse).abs() / (2f64.powi(rule.order()) - 1.0))
                .unwrap_or_else(|| match rule {
                    // No usable coarse grid: fall back to the Simpson/trapezoid gap.
                    QuadratureRule::Simpson => (value - trapezoid(ts, ys)).abs(),
                    _ => 0.0,
                });
            (value, richardson + rounding_floor(ts, ys))
        }
        QuadratureRule::GaussLegendre { order, panels } => {
            let value = gauss_legendre(ts, ys, order, panels);
            let refined = gauss_legendre(ts, ys, order, 2 * panels);
            (value, (value - refined).abs() + rounding_floor(ts, ys))
        }
    }
}

fn node_rule(ts: &[f64], ys: &[f64], rule: QuadratureRule) -> f64 {
    match rule {
        QuadratureRule::Simpson => simpson(ts, ys),
        _ => trapezoid(ts, ys),
    }
}

/// Same rule on the grid with every other interior node removed (the last
/// node is always kept). `None` when the coarse grid cannot carry the rule.
fn coarse_estimate(ts: &[f64], ys: &[f64], rule: QuadratureRule) -> Option<f64> {
    let n = ts.len() - 1;
    if n < 2 {
        return None;
    }
    let keep: Vec<usize> = (0..=n).filter(|&i| i % 2 == 0 || i == n).collect();
    let cts: Vec<f64> = keep.iter().map(|&i| ts[i]).collect();
    let cys: Vec<f64> = keep.iter().map(|&i| ys[i]).collect();
    let coarse_n = cts.len() - 1;
    match rule {
        QuadratureRule::Simpson if coarse_n < 2 => None,
        // Odd pair count: Simpson on the leading pairs, a cubic through the last four nodes.
        QuadratureRule::Simpson if !coarse_n.is_multiple_of(2) => {
            if coarse_n < 3 {
                return None;
            }
            let split = coarse_n - 3;
            Some(simpson(&cts[..=split], &cys[..=split]) + cubic_panel(&cts[split..], &cys[split..]))
        }
        _ => Some(node_rule(&cts, &cys, rule)),
    }
}

/// Exact integral of the cubic through four nodes, by two-point Gauss-Legendre.
fn cubic_panel(ts: &[f64], ys: &[f64]) -> f64 {
    let lagrange = |t: f64| {
        (0..4)
            .map(|i| {
                let basis: f64 = (0..4).filter(|&j| j != i).map(|j| (t - ts[j]) / (ts[i] - ts[j])).product();
                ys[i] * basis
            })
            .sum::<f64>()
    };
    let half = 0.5 * (ts[3] - ts[0]);
    let mid = 0.5 * (ts[3] + ts[0]);
    let x = 1.0 / 3f64.sqrt();
    half * (lagrange(mid - half * x) + lagrange(mid + half * x))
}

/// Roughly four roundings per term of `sum |w_i y_i|`.
fn rounding_floor(ts: &[f64], ys: &[f64]) -> f64 {
    let abs: Vec<f64> = ys.iter().map(|y| y.abs()).collect();
    4.0 * f64::EPSILON * trapezoid(ts, &abs) * (ts.len() as f64).log2().max(1.0)
}

fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2).zip(ys.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

/// Composite Simpson on consecutive pairs of subintervals; the three-point
/// weights account for unequal widths and reduce to 1-4-1 on uniform pairs.
fn simpson(ts: &[f64], ys: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < ts.len() {
        let h0 = ts[i + 1] - ts[i];
        let h1 = ts[i + 2] - ts[i + 1];
        let span = h0 + h1;
        let w0 = 2.0 - h1 / h0;
        let w1 = span * span / (h0 * h1);
        let w2 = 2.0 - h0 / h1;
        total += span / 6.0 * (w0 * ys[i] + w1 * ys[i + 1] + w2 * ys[i + 2]);
        i += 2;
    }
    total
}

fn interpolate(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let t = t.clamp(ts[0], ts[ts.len() - 1]);
    let i = ts.partition_point(|&node| node <= t).saturating_sub(1).min(ts.len() - 2);
    let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

fn gauss_legendre(ts: &[f64], ys: &[f64], order: usize, panels: usize) -> f64 {
    let (xs, ws) = gauss_legendre_nodes(order);
    let (a, b) = (ts[0], ts[ts.len() - 1]);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mid = lo + 0.5 * width;
        let mut panel = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            panel += w * interpolate(ts, ys, mid + 0.5 * width * x);
        }
        total += 0.5 * width * panel;
    }
    total
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre_nodes(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Outcome of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ConvergenceOrder {
    /// Every measured error is at rounding level.
    Exact,
    Order(f64),
}

/// Detailed convergence measurement: per-size errors and the fitted slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub sizes: Vec<usize>,
    pub errors: Vec<f64>,
    pub reference: SpaceElement,
    pub order: ConvergenceOrder,
}

/// Refinement factor of the reference grid over the finest requested grid.
const REFERENCE_REFINEMENT: usize = 64;

/// Least-squares slope of `log(error)` against `log(h)`, where each error is
/// measured against the same rule on a grid 64 times finer than the finest
/// requested size.
pub fn convergence_order(
    spec: &FamilySpec,
    rule: QuadratureRule,
    a: f64,
    b: f64,
    sizes: &[usize],
) -> Result<ConvergenceStudy, QuadratureError> {
    if sizes.len() < 3 {
        return Err(QuadratureError::TooFewSizes(sizes.len()));
    }
    if sizes[0] < 2 || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QuadratureError::InvalidSizes);
    }
    if spec.is_step() {
        return Err(QuadratureError::NotSmooth);
    }
    let finest = sizes[sizes.len() - 1];
    let reference_grid = Grid::uniform(a, b, (finest - 1) * REFERENCE_REFINEMENT + 1)?;
    let (reference, _) = integrate_vector(&sample_family(spec, &reference_grid)?, rule)?;

    let mut errors = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let f = sample_family(spec, &Grid::uniform(a, b, n)?)?;
        let (value, _) = integrate_vector(&f, rule)?;
        errors.push((&value - &reference).norm());
    }

    let floor = 64.0 * f64::EPSILON * reference.norm().max(1.0) * (b - a).abs().max(1.0);
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > floor)
        .map(|(&n, &e)| (((b - a) / (n - 1) as f64).abs().ln(), e.ln()))
        .collect();
    let order = if points.len() < 2 { ConvergenceOrder::Exact } else { ConvergenceOrder::Order(ls_slope(&points)) };
    Ok(ConvergenceStudy { sizes: sizes.to_vec(), errors, reference, order })
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::function::from_discrete;

    fn smooth(grid: Grid, f: impl Fn(f64) -> SpaceElement) -> SampledFunction {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        SampledFunction::new(grid, values, FunctionKind::Smooth).unwrap()
    }

    #[test]
    fn simpson_is_exact_on_quadratic_pair() {
        let f = smooth(Grid::uniform(0.0, 1.0, 11).unwrap(), |t| SpaceElement::real(&[t, t * t]).unwrap());
        let (v, err) = integrate_vector(&f, QuadratureRule::Simpson).unwrap();
        assert!((v.coords()[0].re - 0.5).abs() <= 1e-12);
        assert!((v.coords()[1].re - 1.0 / 3.0).abs() <= 1e-12);
        assert!(err <= 1e-12);
    }

    #[test]
    fn step_rule_is_exact() {
        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let f = from_discrete(&[e1.clone(), e2.clone()]).unwrap();
        let (v, err) = integrate_vector(&f, QuadratureRule::Step).unwrap();
        assert_eq!(v, &e1 + &e2);
        assert_eq!(err, 0.0);

        let f = from_discrete(&[e1.scale(3.0), e2.scale(4.0)]).unwrap();
        assert_eq!(integrate_norm(&f, QuadratureRule::Step).unwrap(), (7.0, 0.0));
    }

    #[test]
    fn complex_arc_closed_forms() {
        let theta = PI / 3.0;
        let grid = Grid::uniform(-theta, theta, 129).unwrap();
        let f = sample_family(&FamilySpec::ComplexArc { omega: 1.0, phi0: 0.0 }, &grid).unwrap();
        let (v, _) = integrate_vector(&f, QuadratureRule::Simpson).unwrap();
        assert!((v.coords()[0].re - 2.0 * theta.sin()).abs() < 1e-9);
        assert!(v.coords()[0].im.abs() < 1e-14);
        let (n, _) = integrate_norm(&f, QuadratureRule::Simpson).unwrap();
        assert!((n - 2.0 * theta).abs() < 1e-13);
    }

    #[test]
    fn incompatible_rules_are_rejected() {
        let f = from_discrete(&[SpaceElement::basis(1, 0)]).unwrap();
        assert!(matches!(integrate_vector(&f, QuadratureRule::Trapezoid), Err(QuadratureError::IncompatibleRule { .. })));
        let g = smooth(Grid::uniform(0.0, 1.0, 4).unwrap(), |t| SpaceElement::real(&[t]).unwrap());
        assert!(matches!(integrate_vector(&g, QuadratureRule::Step), Err(QuadratureError::IncompatibleRule { .. })));
        assert_eq!(integrate_norm(&g, QuadratureRule::Simpson).unwrap_err(), QuadratureError::SimpsonOddSubintervals(3));
        let bad = QuadratureRule::GaussLegendre { order: 11, panels: 1 };
        assert_eq!(integrate_norm(&g, bad).unwrap_err(), QuadratureError::InvalidGaussOrder(11));
    }

    #[test]
    fn gauss_legendre_nodes_integrate_polynomials() {
        for order in 2..=10 {
            let (xs, ws) = gauss_legendre_nodes(order);
            let total: f64 = ws.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "order {order}");
            // exact up to degree 2n - 1
            let deg = 2 * order - 2;
            let integral: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((integral - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "order {order}");
        }
    }

    /// Oracle: composite trapezoid on a very fine grid of the closed form.
    fn trapezoid_oracle(g: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let inner: f64 = (1..panels).map(|i| g(a + h * i as f64)).sum();
        h * (0.5 * g(a) + inner + 0.5 * g(b))
    }

    #[test]
    fn gauss_legendre_norm_integral_matches_fine_oracle() {
        let grid = Grid::uniform(0.0, 2.0 * PI, 4097).unwrap();
        let e = SpaceElement::complex(1.0, 0.0).unwrap();
        let f = sample_family(&FamilySpec::DiskOrbit { e, r: 0.5, omega: 1.0 }, &grid).unwrap();
        let (value, err) = integrate_norm(&f, QuadratureRule::GaussLegendre { order: 6, panels: 64 }).unwrap();
        let oracle = trapezoid_oracle(|t| (1.25 + t.cos()).sqrt(), 0.0, 2.0 * PI, 1_000_000);
        // The node data itself carries O(h^2) interpolation error on top of the panel error.
        let h = 2.0 * PI / 4096.0;
        assert!((value - oracle).abs() <= err + h * h, "value {value} oracle {oracle} err {err}");
    }

    #[test]
    fn richardson_estimate_tracks_true_error() {
        let grid = Grid::uniform(0.0, 1.0, 17).unwrap();
        let f = smooth(grid, |t| SpaceElement::real(&[t.exp()]).unwrap());
        let exact = 1f64.exp() - 1.0;
        for rule in [QuadratureRule::Trapezoid, QuadratureRule::Simpson] {
            let (v, err) = integrate_vector(&f, rule).unwrap();
            let actual = (v.coords()[0].re - exact).abs();
            assert!(err > 0.2 * actual && err < 5.0 * actual, "{rule}: err {err} actual {actual}");
        }
    }

    #[test]
    fn nonuniform_simpson_is_exact_on_quadratics() {
        let grid = Grid::new(vec![0.0, 0.1, 0.4, 0.45, 1.0]).unwrap();
        let f = smooth(grid, |t| SpaceElement::real(&[3.0 * t * t - t + 2.0]).unwrap());
        let (v, _) = integrate_vector(&f, QuadratureRule::Simpson).unwrap();
        assert!((v.coords()[0].re - 2.5).abs() < 1e-14);
    }

    #[test]
    fn convergence_orders() {
        let arc = FamilySpec::ComplexArc { omega: 1.0, phi0: 0.0 };
        let sizes = [17, 33, 65, 129];
        let trap = convergence_order(&arc, QuadratureRule::Trapezoid, 0.0, 1.0, &sizes).unwrap();
        let ConvergenceOrder::Order(p) = trap.order else { panic!("expected an order") };
        assert!((1.8..=2.2).contains(&p), "trapezoid order {p}");
        let simp = convergence_order(&arc, QuadratureRule::Simpson, 0.0, 1.0, &sizes).unwrap();
        let ConvergenceOrder::Order(p) = simp.order else { panic!("expected an order") };
        assert!((3.5..=4.5).contains(&p), "simpson order {p}");

        let constant = FamilySpec::Constant { v: SpaceElement::basis(2, 0) };
        for rule in [QuadratureRule::Trapezoid, QuadratureRule::Simpson] {
            let study = convergence_order(&constant, rule, 0.0, 1.0, &sizes).unwrap();
            assert_eq!(study.order, ConvergenceOrder::Exact);
        }
        assert_eq!(
            convergence_order(&arc, QuadratureRule::Trapezoid, 0.0, 1.0, &[17, 33]).unwrap_err(),
            QuadratureError::TooFewSizes(2)
        );
    }
}
