//! Certified reverses of the continuous triangle inequality
//! `|int f| <= int |f|` for sampled functions with values in a finite-dimensional
//! complex inner product space.

#![forbid(unsafe_code)]

pub mod certificates;
pub mod cli;
pub mod function;
pub mod hypotheses;
pub mod io;
pub mod quadrature;
pub mod report;
pub mod space;

pub use certificates::{
    auto_certify, certify_band, certify_complex, certify_discrete, certify_disk, certify_ortho, certify_ortho_band,
    certify_ortho_disk, certify_unit_vector, direction_search, AdditiveForm, AutoEntry, CertError, Certificate,
    Estimates, TheoremId,
};
pub use function::{from_discrete, sample_family, FamilySpec, FunctionKind, Grid, SampledFunction};
pub use hypotheses::{check, minimal_k, minimal_rho, band_fit, BandFit, CheckReport, HypothesisParams};
pub use quadrature::{integrate, QuadratureResult, QuadratureRule};
pub use space::{SpaceElement, ToleranceConfig};
