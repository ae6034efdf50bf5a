//! Finite-dimensional complex inner-product space arithmetic.
//!
//! Every vector is a [`SpaceElement`] with complex coordinates. Real-valued
//! data is carried with zero imaginary parts; there is no separate real path.
//! The inner product is linear in the first argument and conjugate-linear in
//! the second: `<x, y> = sum_j x_j * conj(y_j)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A field element. Real inputs use `im = 0`.
pub type Scalar = Complex64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("a space element needs at least one coordinate")]
    Empty,
    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },
    #[error("rank deficiency: vector {index} is numerically dependent on its predecessors")]
    RankDeficient { index: usize },
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("invalid tolerance `{name}` = {value}: tolerances must be strictly positive")]
    InvalidTolerance { name: &'static str, value: f64 },
}

/// A vector in an n-dimensional complex inner-product space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Scalar>", into = "Vec<Scalar>")]
pub struct SpaceElement {
    coords: Vec<Scalar>,
}

impl TryFrom<Vec<Scalar>> for SpaceElement {
    type Error = SpaceError;

    fn try_from(coords: Vec<Scalar>) -> Result<Self, Self::Error> {
        Self::new(coords)
    }
}

impl From<SpaceElement> for Vec<Scalar> {
    fn from(x: SpaceElement) -> Self {
        x.coords
    }
}

impl SpaceElement {
    pub fn new(coords: Vec<Scalar>) -> Result<Self, SpaceError> {
        if coords.is_empty() {
            return Err(SpaceError::Empty);
        }
        if let Some(index) = coords.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SpaceError::NonFinite { index });
        }
        Ok(Self { coords })
    }

    /// Real coordinates, imaginary parts zero.
    pub fn real(values: &[f64]) -> Result<Self, SpaceError> {
        Self::new(values.iter().map(|&v| Scalar::new(v, 0.0)).collect())
    }

    /// A one-dimensional element holding a single complex number.
    pub fn complex(re: f64, im: f64) -> Result<Self, SpaceError> {
        Self::new(vec![Scalar::new(re, im)])
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self { coords: vec![Scalar::new(0.0, 0.0); dim] }
    }

    /// The `index`-th standard basis vector of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dimension {dim}");
        let mut x = Self::zeros(dim);
        x.coords[index] = Scalar::new(1.0, 0.0);
        x
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Scalar] {
        &self.coords
    }

    pub(crate) fn from_coords_unchecked(coords: Vec<Scalar>) -> Self {
        debug_assert!(!coords.is_empty());
        Self { coords }
    }

    fn ensure_same_dim(&self, other: &Self) -> Result<(), SpaceError> {
        if self.dim() != other.dim() {
            return Err(SpaceError::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        Ok(())
    }

    /// `<self, other> = sum_j self_j * conj(other_j)`.
    pub fn inner(&self, other: &Self) -> Result<Scalar, SpaceError> {
        self.ensure_same_dim(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Self) -> Scalar {
        self.coords
            .iter()
            .zip(&other.coords)
            .fold(Scalar::new(0.0, 0.0), |acc, (x, y)| acc + x * y.conj())
    }

    /// Real part of the inner product; the quantity every hypothesis uses.
    pub(crate) fn re_inner(&self, other: &Self) -> f64 {
        self.inner_unchecked(other).re
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coords.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { coords: self.coords.iter().map(|c| c * factor).collect() }
    }

    pub fn scale_complex(&self, factor: Scalar) -> Self {
        Self { coords: self.coords.iter().map(|c| c * factor).collect() }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, SpaceError> {
        self.ensure_same_dim(other)?;
        Ok(self.zip_with(other, |x, y| x + y))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, SpaceError> {
        self.ensure_same_dim(other)?;
        Ok(self.zip_with(other, |x, y| x - y))
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Scalar, Scalar) -> Scalar) -> Self {
        Self { coords: self.coords.iter().zip(&other.coords).map(|(x, y)| op(*x, *y)).collect() }
    }

    pub fn normalized(&self) -> Result<Self, SpaceError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(SpaceError::ZeroVector);
        }
        Ok(self.scale(1.0 / n))
    }

    /// Largest absolute real or imaginary component.
    pub fn max_abs_component(&self) -> f64 {
        self.coords.iter().fold(0.0_f64, |m, c| m.max(c.re.abs()).max(c.im.abs()))
    }

    /// Embeds `C^n` into `R^{2n}` as `(re_0, im_0, re_1, im_1, ...)`. The real
    /// part of the inner product is preserved exactly.
    pub fn realify(&self) -> Self {
        Self {
            coords: self
                .coords
                .iter()
                .flat_map(|c| [Scalar::new(c.re, 0.0), Scalar::new(c.im, 0.0)])
                .collect(),
        }
    }
}

impl fmt::Display for SpaceElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else {
                write!(f, "{}{:+}i", c.re, c.im)?;
            }
        }
        write!(f, ")")
    }
}

// Operator forms panic on dimension mismatch; use `try_add`/`try_sub` when
// the dimensions are not already known to agree.
impl Add for &SpaceElement {
    type Output = SpaceElement;
    fn add(self, rhs: &SpaceElement) -> SpaceElement {
        self.try_add(rhs).expect("dimension mismatch in vector addition")
    }
}

impl Sub for &SpaceElement {
    type Output = SpaceElement;
    fn sub(self, rhs: &SpaceElement) -> SpaceElement {
        self.try_sub(rhs).expect("dimension mismatch in vector subtraction")
    }
}

impl Mul<f64> for &SpaceElement {
    type Output = SpaceElement;
    fn mul(self, rhs: f64) -> SpaceElement {
        self.scale(rhs)
    }
}

impl Neg for &SpaceElement {
    type Output = SpaceElement;
    fn neg(self) -> SpaceElement {
        self.scale(-1.0)
    }
}

/// Inner product; errors on dimension mismatch.
pub fn inner(x: &SpaceElement, y: &SpaceElement) -> Result<Scalar, SpaceError> {
    x.inner(y)
}

pub fn norm(x: &SpaceElement) -> f64 {
    x.norm()
}

/// Tolerances shared by every check and certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub unit_tol: f64,
    pub ortho_tol: f64,
    /// Relative; margins are normalized by `max(1, |f(t)|)` before comparison.
    pub margin_tol: f64,
    pub cert_abs_tol: f64,
    pub cert_rel_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { unit_tol: 1e-9, ortho_tol: 1e-9, margin_tol: 1e-12, cert_abs_tol: 1e-10, cert_rel_tol: 1e-8 }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<(), SpaceError> {
        let fields = [
            ("unit_tol", self.unit_tol),
            ("ortho_tol", self.ortho_tol),
            ("margin_tol", self.margin_tol),
            ("cert_abs_tol", self.cert_abs_tol),
            ("cert_rel_tol", self.cert_rel_tol),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SpaceError::InvalidTolerance { name, value });
            }
        }
        Ok(())
    }
}

pub fn validate_unit(e: &SpaceElement, tol: &ToleranceConfig) -> bool {
    (e.norm() - 1.0).abs() <= tol.unit_tol
}

/// True iff `|<e_i, e_j> - delta_ij| <= ortho_tol` for every pair. Mixed
/// dimensions or more vectors than the dimension never pass.
pub fn validate_orthonormal(family: &[SpaceElement], tol: &ToleranceConfig) -> bool {
    let Some(first) = family.first() else {
        return true;
    };
    let dim = first.dim();
    if family.len() > dim || family.iter().any(|v| v.dim() != dim) {
        return false;
    }
    for (i, ei) in family.iter().enumerate() {
        for (j, ej) in family.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            let g = ei.inner_unchecked(ej);
            if (g - Scalar::new(target, 0.0)).norm() > tol.ortho_tol {
                return false;
            }
        }
    }
    true
}

/// Residual norm below this fraction of the input norm counts as dependent.
const RANK_TOL: f64 = 1e-12;

/// Modified Gram–Schmidt with one full re-orthogonalization pass.
pub fn gram_schmidt(vectors: &[SpaceElement]) -> Result<Vec<SpaceElement>, SpaceError> {
    let mut out: Vec<SpaceElement> = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        if let Some(q) = out.first() {
            v.ensure_same_dim(q)?;
        }
        let input_norm = v.norm();
        let mut w = v.clone();
        for _pass in 0..2 {
            for q in &out {
                let c = w.inner_unchecked(q);
                w = w.zip_with(q, |wj, qj| wj - c * qj);
            }
        }
        let residual = w.norm();
        if input_norm == 0.0 || residual < RANK_TOL * input_norm {
            return Err(SpaceError::RankDeficient { index });
        }
        out.push(w.scale(1.0 / residual));
    }
    Ok(out)
}

/// Extends the unit direction of `lead` to an orthonormal basis of the whole
/// space by Gram–Schmidt against the standard basis, skipping dependent
/// candidates. The first element is `lead / |lead|`.
pub fn complete_basis(lead: &SpaceElement) -> Result<Vec<SpaceElement>, SpaceError> {
    let dim = lead.dim();
    let mut basis = vec![lead.normalized()?];
    for j in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut candidate = basis.clone();
        candidate.push(SpaceElement::basis(dim, j));
        if let Ok(q) = gram_schmidt(&candidate) {
            basis = q;
        }
    }
    Ok(basis)
}

/// Evaluates, independently, `Re<Z - x, x - z> >= 0` and
/// `|x - (Z + z)/2| <= |Z - z|/2`. Both comparisons are inclusive and allow a
/// few ulps of rounding relative to the magnitudes involved.
pub fn ball_quadrant_equiv(
    x: &SpaceElement,
    z: &SpaceElement,
    big_z: &SpaceElement,
) -> Result<(bool, bool), SpaceError> {
    x.ensure_same_dim(z)?;
    x.ensure_same_dim(big_z)?;
    let scale = x.norm().max(z.norm()).max(big_z.norm());
    let slack = 16.0 * f64::EPSILON * scale;

    let quadrant = (big_z - x).re_inner(&(x - z));
    let first = quadrant >= -slack * scale;

    let center = (big_z + z).scale(0.5);
    let distance = (x - &center).norm();
    let radius = 0.5 * (big_z - z).norm();
    let second = distance <= radius + slack;

    Ok((first, second))
}
