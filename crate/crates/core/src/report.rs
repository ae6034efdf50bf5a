//! Certification reports and their JSON encoding.
//!
//! Every floating-point number is written as `{:.16e}`, i.e. with 17
//! significant digits, which is enough for an exact round trip.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::certificates::{AdditiveForm, AutoEntry, Certificate, Estimates, TheoremId};
use crate::function::{FunctionKind, SampledFunction};
use crate::hypotheses::CheckReport;
use crate::quadrature::QuadratureRule;

pub const TOOL_NAME: &str = "revtri";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pretty JSON with 17 significant digits per float.
pub struct ExactFloatFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for ExactFloatFormatter<'_> {
    fn default() -> Self {
        Self { inner: PrettyFormatter::new() }
    }
}

impl Formatter for ExactFloatFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloatFormatter::default());
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
    pub nodes: usize,
    pub kind: FunctionKind,
}

impl InputDigest {
    pub fn of(f: &SampledFunction) -> Self {
        Self { a: f.grid().a(), b: f.grid().b(), dim: f.dim(), nodes: f.grid().len(), kind: f.kind() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveEntry {
    pub theorem: TheoremId,
    #[serde(flatten)]
    pub form: AdditiveForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InapplicableEntry {
    pub theorem: TheoremId,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CheckReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub input: InputDigest,
    pub rule: QuadratureRule,
    pub requested: String,
    pub all_hold: bool,
    pub certificates: Vec<Certificate>,
    pub additive_forms: Vec<AdditiveEntry>,
    pub inapplicable: Vec<InapplicableEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Estimates>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(f: &SampledFunction, rule: QuadratureRule, requested: &str) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            input: InputDigest::of(f),
            rule,
            requested: requested.into(),
            all_hold: true,
            certificates: Vec::new(),
            additive_forms: Vec::new(),
            inapplicable: Vec::new(),
            estimates: None,
            warnings: Vec::new(),
        }
    }

    pub fn push_certificate(&mut self, cert: Certificate, additive: Option<AdditiveForm>) {
        self.all_hold &= cert.holds;
        if let Some(form) = additive {
            self.additive_forms.push(AdditiveEntry { theorem: cert.theorem, form });
        }
        self.certificates.push(cert);
    }

    pub fn push_inapplicable(&mut self, theorem: TheoremId, reason: String, report: Option<CheckReport>) {
        self.all_hold = false;
        self.inapplicable.push(InapplicableEntry { theorem, reason, report });
    }

    pub fn push_entry(&mut self, entry: AutoEntry) {
        match entry {
            AutoEntry::Certified { certificate, additive } => self.push_certificate(certificate, additive),
            AutoEntry::Inapplicable { theorem, reason, report } => self.push_inapplicable(theorem, reason, report),
        }
    }

    /// Holds only if at least one certificate was issued and every requested one holds.
    pub fn succeeded(&self) -> bool {
        self.all_hold && !self.certificates.is_empty()
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        to_json_string(self)
    }

    /// Fixed-width table of the certificates, then the inapplicable entries.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<12} {:>23} {:>23} {:>23} {:>24} {:>23} {:>23} {:>5}\n",
            "theorem", "factor", "lhs", "rhs", "slack", "tightness", "equality_residual", "holds"
        );
        for c in &self.certificates {
            out.push_str(&format!(
                "{:<12} {:>23.16e} {:>23.16e} {:>23.16e} {:>24.16e} {:>23.16e} {:>23.16e} {:>5}\n",
                c.theorem.as_str(),
                c.factor,
                c.lhs,
                c.rhs,
                c.slack,
                c.tightness,
                c.equality_residual,
                c.holds
            ));
        }
        for a in &self.additive_forms {
            out.push_str(&format!(
                "{} additive: lhs - rhs = {:.16e}, corrected bound {:.16e}, printed bound {:.16e} (printed holds: {})\n",
                a.theorem.as_str(),
                a.form.lhs_minus_rhs,
                a.form.bound_corrected,
                a.form.bound_printed,
                a.form.printed_holds
            ));
        }
        for i in &self.inapplicable {
            out.push_str(&format!("{} inapplicable: {}\n", i.theorem.as_str(), i.reason));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        let text = to_json_string(&[0.1, 1.0, -0.0, 1e-300]).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("1.0000000000000000e0"));
        assert!(text.contains("-0.0000000000000000e0"));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vec![0.1, 1.0, -0.0, 1e-300]);
        assert!(back[2].is_sign_negative());
    }

    #[test]
    fn non_finite_becomes_null() {
        assert!(to_json_string(&[f64::NAN]).unwrap().contains("null"));
    }
}
