//! Sampled vector-valued functions on a compact interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{complete_basis, validate_orthonormal, validate_unit, Scalar, SpaceElement, SpaceError, ToleranceConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionError {
    #[error("grid needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("non-increasing grid at node {index}")]
    NonIncreasing { index: usize },
    #[error("non-finite grid node at index {index}")]
    NonFiniteNode { index: usize },
    #[error("expected {expected} values (one per node), got {actual}")]
    ValueCount { expected: usize, actual: usize },
    #[error("value {index} has dimension {actual}, expected {expected}")]
    MixedDimensions { index: usize, expected: usize, actual: usize },
    #[error("t = {t} lies outside [{a}, {b}]")]
    OutOfRange { t: f64, a: f64, b: f64 },
    #[error("cannot build a function from an empty vector list")]
    EmptyList,
    #[error("invalid family parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Strictly increasing nodes; `a` and `b` are the first and last node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<f64>) -> Result<Self, FunctionError> {
        if nodes.len() < 2 {
            return Err(FunctionError::TooFewNodes(nodes.len()));
        }
        if let Some(index) = nodes.iter().position(|t| !t.is_finite()) {
            return Err(FunctionError::NonFiniteNode { index });
        }
        if let Some(index) = nodes.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FunctionError::NonIncreasing { index: index + 1 });
        }
        Ok(Self { nodes })
    }

    /// `count` equally spaced nodes with exact endpoints.
    pub fn uniform(a: f64, b: f64, count: usize) -> Result<Self, FunctionError> {
        if count < 2 {
            return Err(FunctionError::TooFewNodes(count));
        }
        let n = (count - 1) as f64;
        let nodes = (0..count)
            .map(|i| match i {
                0 => a,
                _ if i == count - 1 => b,
                _ => a + (b - a) * (i as f64 / n),
            })
            .collect();
        Self::new(nodes)
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn subintervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index `i` of the subinterval `[t_i, t_{i+1})` containing `t`; the
    /// right endpoint `b` belongs to the last subinterval.
    pub(crate) fn locate(&self, t: f64) -> usize {
        let upper = self.nodes.partition_point(|&node| node <= t);
        upper.saturating_sub(1).min(self.subintervals() - 1)
    }

    fn with_node(&self, t: f64) -> Self {
        if self.nodes.contains(&t) || t <= self.a() || t >= self.b() {
            return self.clone();
        }
        let mut nodes = self.nodes.clone();
        let at = nodes.partition_point(|&node| node < t);
        nodes.insert(at, t);
        Self { nodes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    /// Point samples of a smooth function, linearly interpolated.
    Smooth,
    /// `values[i]` holds on `[t_i, t_{i+1})`; the last value is ignored by integration.
    Step,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<SpaceElement>,
    kind: FunctionKind,
}

impl SampledFunction {
    pub fn new(grid: Grid, values: Vec<SpaceElement>, kind: FunctionKind) -> Result<Self, FunctionError> {
        if values.len() != grid.len() {
            return Err(FunctionError::ValueCount { expected: grid.len(), actual: values.len() });
        }
        let dim = values[0].dim();
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| v.dim() != dim) {
            return Err(FunctionError::MixedDimensions { index, expected: dim, actual: v.dim() });
        }
        Ok(Self { grid, values, kind })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[SpaceElement] {
        &self.values
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    /// Nodes at which the function's pointwise hypotheses are observable:
    /// all nodes, except the final node of a step function.
    pub fn active_nodes(&self) -> impl Iterator<Item = (f64, &SpaceElement)> {
        let count = match self.kind {
            FunctionKind::Smooth => self.values.len(),
            FunctionKind::Step => self.values.len() - 1,
        };
        self.grid.nodes.iter().copied().zip(&self.values).take(count)
    }

    /// Applies `op` to every node value, keeping grid and kind.
    pub fn map_values(&self, op: impl Fn(&SpaceElement) -> SpaceElement) -> Result<Self, FunctionError> {
        Self::new(self.grid.clone(), self.values.iter().map(op).collect(), self.kind)
    }

    /// Embeds a one-dimensional complex function in the two-dimensional real space.
    pub fn realify(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(SpaceElement::realify).collect(),
            kind: self.kind,
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<SpaceElement, FunctionError> {
        let (a, b) = (self.grid.a(), self.grid.b());
        if !(a..=b).contains(&t) {
            return Err(FunctionError::OutOfRange { t, a, b });
        }
        Ok(self.evaluate_clamped(t))
    }

    pub(crate) fn evaluate_clamped(&self, t: f64) -> SpaceElement {
        let t = t.clamp(self.grid.a(), self.grid.b());
        let i = self.grid.locate(t);
        match self.kind {
            FunctionKind::Step => self.values[i].clone(),
            FunctionKind::Smooth => {
                let (t0, t1) = (self.grid.nodes[i], self.grid.nodes[i + 1]);
                let w = (t - t0) / (t1 - t0);
                let (v0, v1) = (&self.values[i], &self.values[i + 1]);
                SpaceElement::from_coords_unchecked(
                    v0.coords().iter().zip(v1.coords()).map(|(x, y)| x * (1.0 - w) + y * w).collect(),
                )
            }
        }
    }
}

/// Step function on `[0, len]` with unit subintervals carrying `xs[i]`.
pub fn from_discrete(xs: &[SpaceElement]) -> Result<SampledFunction, FunctionError> {
    let Some(last) = xs.last() else {
        return Err(FunctionError::EmptyList);
    };
    let grid = Grid::new((0..=xs.len()).map(|i| i as f64).collect())?;
    let mut values = xs.to_vec();
    values.push(last.clone());
    SampledFunction::new(grid, values, FunctionKind::Step)
}

/// Analytic test families. Every variant is sampled exactly at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    Constant { v: SpaceElement },
    /// `exp(i (omega t + phi0))` in one complex dimension.
    ComplexArc { omega: f64, phi0: f64 },
    /// `e + r (cos(omega t) u1 + sin(omega t) u2)`; in one dimension `e + r exp(i omega t)`.
    DiskOrbit { e: SpaceElement, r: f64, omega: f64 },
    /// `exp(+i theta)` then `exp(-i theta)` on the two halves, `cos theta = 1/k`.
    TwoPieceEquality { k: f64 },
    /// `sqrt(m M) exp(+-i theta)` on the two halves, `cos theta = 2 sqrt(m M)/(m + M)`;
    /// the equality configuration of the band hypothesis.
    BandEquality { m: f64, #[serde(rename = "M")] big_m: f64 },
    /// Constant `sum_i c_i e_i`.
    OrthoMix { c: Vec<f64>, basis: Vec<SpaceElement> },
    /// `sum_j coeffs_j t^j`.
    Polynomial { coeffs: Vec<SpaceElement> },
}

impl FamilySpec {
    pub fn is_step(&self) -> bool {
        matches!(self, Self::TwoPieceEquality { .. } | Self::BandEquality { .. })
    }

    fn invalid(msg: impl Into<String>) -> FunctionError {
        FunctionError::InvalidParameter(msg.into())
    }

    fn validate(&self) -> Result<(), FunctionError> {
        let tol = ToleranceConfig::default();
        match self {
            Self::Constant { .. } => Ok(()),
            Self::ComplexArc { omega, phi0 } => {
                if !omega.is_finite() || !phi0.is_finite() {
                    return Err(Self::invalid("complex_arc parameters must be finite"));
                }
                Ok(())
            }
            Self::DiskOrbit { e, r, omega } => {
                if !validate_unit(e, &tol) {
                    return Err(Self::invalid(format!("disk_orbit centre must be a unit vector, |e| = {}", e.norm())));
                }
                if !(r.is_finite() && *r >= 0.0) {
                    return Err(Self::invalid(format!("disk_orbit radius must be >= 0, got {r}")));
                }
                if !omega.is_finite() {
                    return Err(Self::invalid("disk_orbit omega must be finite"));
                }
                Ok(())
            }
            Self::TwoPieceEquality { k } => {
                if !(k.is_finite() && *k >= 1.0) {
                    return Err(Self::invalid(format!("two_piece_equality needs K >= 1, got {k}")));
                }
                Ok(())
            }
            Self::BandEquality { m, big_m } => {
                if !(m.is_finite() && big_m.is_finite() && *m > 0.0 && m <= big_m) {
                    return Err(Self::invalid(format!("band_equality needs 0 < m <= M, got m = {m}, M = {big_m}")));
                }
                Ok(())
            }
            Self::OrthoMix { c, basis } => {
                if c.len() != basis.len() || c.is_empty() {
                    return Err(Self::invalid("ortho_mix needs one coefficient per basis vector"));
                }
                if c.iter().any(|ci| !(ci.is_finite() && *ci >= 0.0)) {
                    return Err(Self::invalid("ortho_mix coefficients must be >= 0"));
                }
                if !validate_orthonormal(basis, &tol) {
                    return Err(Self::invalid("ortho_mix basis is not orthonormal"));
                }
                Ok(())
            }
            Self::Polynomial { coeffs } => {
                let Some(first) = coeffs.first() else {
                    return Err(Self::invalid("polynomial needs at least one coefficient"));
                };
                if coeffs.iter().any(|c| c.dim() != first.dim()) {
                    return Err(Self::invalid("polynomial coefficients must share one dimension"));
                }
                Ok(())
            }
        }
    }
}

fn unit_phase(angle: f64) -> SpaceElement {
    SpaceElement::from_coords_unchecked(vec![Scalar::new(angle.cos(), angle.sin())])
}

/// Samples `spec` on `grid`. Step families get a node inserted at the
/// interval midpoint when the grid lacks one.
pub fn sample_family(spec: &FamilySpec, grid: &Grid) -> Result<SampledFunction, FunctionError> {
    spec.validate()?;
    let nodes = grid.nodes();
    match spec {
        FamilySpec::Constant { v } => {
            SampledFunction::new(grid.clone(), vec![v.clone(); nodes.len()], FunctionKind::Smooth)
        }
        FamilySpec::ComplexArc { omega, phi0 } => {
            let values = nodes.iter().map(|t| unit_phase(omega * t + phi0)).collect();
            SampledFunction::new(grid.clone(), values, FunctionKind::Smooth)
        }
        FamilySpec::DiskOrbit { e, r, omega } => {
            let values = match e.dim() {
                1 => {
                    let c = e.coords()[0];
                    nodes
                        .iter()
                        .map(|t| {
                            let w = Scalar::new((omega * t).cos(), (omega * t).sin());
                            SpaceElement::from_coords_unchecked(vec![c + w * *r])
                        })
                        .collect()
                }
                _ => {
                    let (u1, u2) = orbit_plane(e)?;
                    nodes
                        .iter()
                        .map(|t| {
                            let (s, c) = (omega * t).sin_cos();
                            let offset = &u1.scale(c) + &u2.scale(s);
                            e + &offset.scale(*r)
                        })
                        .collect()
                }
            };
            SampledFunction::new(grid.clone(), values, FunctionKind::Smooth)
        }
        FamilySpec::TwoPieceEquality { k } => {
            let theta = (1.0 / k).acos();
            two_piece(grid, 1.0, theta)
        }
        FamilySpec::BandEquality { m, big_m } => {
            let root = (m * big_m).sqrt();
            let theta = (2.0 * root / (m + big_m)).min(1.0).acos();
            two_piece(grid, root, theta)
        }
        FamilySpec::OrthoMix { c, basis } => {
            let v = c
                .iter()
                .zip(basis)
                .fold(SpaceElement::zeros(basis[0].dim()), |acc, (ci, ei)| &acc + &ei.scale(*ci));
            SampledFunction::new(grid.clone(), vec![v; nodes.len()], FunctionKind::Smooth)
        }
        FamilySpec::Polynomial { coeffs } => {
            let values = nodes
                .iter()
                .map(|&t| {
                    coeffs
                        .iter()
                        .rev()
                        .fold(SpaceElement::zeros(coeffs[0].dim()), |acc, c| &acc.scale(t) + c)
                })
                .collect();
            SampledFunction::new(grid.clone(), values, FunctionKind::Smooth)
        }
    }
}

fn two_piece(grid: &Grid, radius: f64, theta: f64) -> Result<SampledFunction, FunctionError> {
    let mid = 0.5 * (grid.a() + grid.b());
    let grid = grid.with_node(mid);
    let values = grid
        .nodes()
        .iter()
        .map(|&t| unit_phase(if t < mid { theta } else { -theta }).scale(radius))
        .collect();
    SampledFunction::new(grid, values, FunctionKind::Step)
}

/// Orthonormal `(u1, u2)` with `Re<u_i, e> = 0`, used by the disk orbit in
/// dimension >= 2. In dimension 2 the complement of `e` has a single complex
/// direction `u1`, and `u2 = i u1`.
fn orbit_plane(e: &SpaceElement) -> Result<(SpaceElement, SpaceElement), FunctionError> {
    let basis = complete_basis(e)?;
    match basis.len() {
        2 => {
            let u1 = basis[1].clone();
            let u2 = u1.scale_complex(Scalar::new(0.0, 1.0));
            Ok((u1, u2))
        }
        _ => Ok((basis[1].clone(), basis[2].clone())),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn close(x: &SpaceElement, y: &SpaceElement, tol: f64) -> bool {
        (x - y).norm() <= tol
    }

    #[test]
    fn grid_validation() {
        assert_eq!(Grid::new(vec![0.0]).unwrap_err(), FunctionError::TooFewNodes(1));
        assert_eq!(Grid::new(vec![0.0, 0.5, 0.5]).unwrap_err(), FunctionError::NonIncreasing { index: 2 });
        assert!(Grid::new(vec![0.0, f64::NAN]).is_err());
        let g = Grid::uniform(0.0, 1.0, 5).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn constant_family() {
        let e1 = SpaceElement::basis(2, 0);
        let f = sample_family(&FamilySpec::Constant { v: e1.clone() }, &Grid::uniform(0.0, 1.0, 4).unwrap()).unwrap();
        assert!(f.values().iter().all(|v| *v == e1));
        assert_eq!(f.kind(), FunctionKind::Smooth);
    }

    #[test]
    fn complex_arc_point() {
        let grid = Grid::new(vec![0.0, PI / 3.0, 1.5]).unwrap();
        let f = sample_family(&FamilySpec::ComplexArc { omega: 1.0, phi0: 0.0 }, &grid).unwrap();
        let expected = SpaceElement::complex(0.5, 3f64.sqrt() / 2.0).unwrap();
        assert!(close(&f.values()[1], &expected, 1e-15));
    }

    #[test]
    fn two_piece_equality_has_midpoint_and_conjugate_halves() {
        let grid = Grid::uniform(0.0, 1.0, 4).unwrap(); // no node at 0.5
        let f = sample_family(&FamilySpec::TwoPieceEquality { k: 2.0 }, &grid).unwrap();
        assert_eq!(f.kind(), FunctionKind::Step);
        assert!(f.grid().nodes().contains(&0.5));
        let up = SpaceElement::complex(0.5, 3f64.sqrt() / 2.0).unwrap();
        let down = SpaceElement::complex(0.5, -3f64.sqrt() / 2.0).unwrap();
        assert!(close(&f.evaluate(0.25).unwrap(), &up, 1e-15));
        assert!(close(&f.evaluate(0.5).unwrap(), &down, 1e-15));
        assert!(close(&f.evaluate(1.0).unwrap(), &down, 1e-15));
    }

    #[test]
    fn disk_orbit_stays_on_sphere() {
        let grid = Grid::uniform(0.0, 2.0 * PI, 33).unwrap();
        let e3 = SpaceElement::new(vec![Scalar::new(0.6, 0.0), Scalar::new(0.0, 0.8), Scalar::new(0.0, 0.0)]).unwrap();
        for e in [SpaceElement::complex(1.0, 0.0).unwrap(), SpaceElement::basis(2, 1), e3] {
            let f = sample_family(&FamilySpec::DiskOrbit { e: e.clone(), r: 0.3, omega: 1.0 }, &grid).unwrap();
            for v in f.values() {
                assert!(((v - &e).norm() - 0.3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn family_parameter_errors() {
        let grid = Grid::uniform(0.0, 1.0, 3).unwrap();
        let e = SpaceElement::complex(1.0, 0.0).unwrap();
        assert!(sample_family(&FamilySpec::DiskOrbit { e: e.clone(), r: -0.1, omega: 1.0 }, &grid).is_err());
        let not_unit = SpaceElement::complex(2.0, 0.0).unwrap();
        assert!(sample_family(&FamilySpec::DiskOrbit { e: not_unit, r: 0.1, omega: 1.0 }, &grid).is_err());
        assert!(sample_family(&FamilySpec::TwoPieceEquality { k: 0.5 }, &grid).is_err());
        assert!(sample_family(&FamilySpec::BandEquality { m: 2.0, big_m: 1.0 }, &grid).is_err());
    }

    #[test]
    fn polynomial_family_uses_horner() {
        let coeffs = vec![
            SpaceElement::real(&[1.0, 0.0]).unwrap(),
            SpaceElement::real(&[0.0, 2.0]).unwrap(),
            SpaceElement::real(&[3.0, 0.0]).unwrap(),
        ];
        let grid = Grid::new(vec![0.0, 2.0]).unwrap();
        let f = sample_family(&FamilySpec::Polynomial { coeffs }, &grid).unwrap();
        assert_eq!(f.values()[1], SpaceElement::real(&[13.0, 4.0]).unwrap());
    }

    #[test]
    fn from_discrete_layout() {
        let e1 = SpaceElement::basis(2, 0);
        let e2 = SpaceElement::basis(2, 1);
        let f = from_discrete(&[e1.clone(), e2.clone()]).unwrap();
        assert_eq!(f.grid().nodes(), &[0.0, 1.0, 2.0]);
        assert_eq!(f.evaluate(0.5).unwrap(), e1);
        assert_eq!(f.evaluate(1.0).unwrap(), e2);
        assert_eq!(from_discrete(&[]).unwrap_err(), FunctionError::EmptyList);
    }

    #[test]
    fn evaluate_step_and_smooth() {
        let grid = Grid::new(vec![0.0, 1.0]).unwrap();
        let step = SampledFunction::new(
            grid.clone(),
            vec![SpaceElement::basis(1, 0), SpaceElement::zeros(1)],
            FunctionKind::Step,
        )
        .unwrap();
        assert_eq!(step.evaluate(0.5).unwrap(), SpaceElement::basis(1, 0));

        let smooth = SampledFunction::new(
            grid,
            vec![SpaceElement::real(&[0.0]).unwrap(), SpaceElement::real(&[1.0]).unwrap()],
            FunctionKind::Smooth,
        )
        .unwrap();
        assert_eq!(smooth.evaluate(0.5).unwrap(), SpaceElement::real(&[0.5]).unwrap());
        assert!(matches!(smooth.evaluate(1.5), Err(FunctionError::OutOfRange { .. })));
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let grid = Grid::new(vec![0.0, 1.0]).unwrap();
        let err = SampledFunction::new(grid, vec![SpaceElement::zeros(1), SpaceElement::zeros(2)], FunctionKind::Smooth)
            .unwrap_err();
        assert_eq!(err, FunctionError::MixedDimensions { index: 1, expected: 1, actual: 2 });
    }
}
