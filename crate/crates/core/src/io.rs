//! Loading and saving sampled functions.
//!
//! JSON is the canonical format:
//!
//! ```json
//! {"a": 0.0, "b": 1.0, "dim": 1, "field": "complex", "kind": "smooth",
//!  "samples": [{"t": 0.0, "value": [[1.0, 0.0]]}, {"t": 1.0, "value": [[1.0, 0.0]]}]}
//! ```
//!
//! A component is an `[re, im]` pair, or a bare real when `field` is `"real"`.
//! CSV is a convenience importer with a `t,v0_re,v0_im,...` (complex) or
//! `t,v0,v1,...` (real) header and optional `# key=value` metadata lines.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::{FunctionError, FunctionKind, Grid, SampledFunction};
use crate::report::to_json_string;
use crate::space::SpaceElement;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: u64, column: u64, message: String },
    #[error("non-increasing grid at row {row}")]
    NonIncreasing { row: usize },
    #[error("dimension mismatch at row {row}: expected {expected} components, got {actual}")]
    DimensionMismatch { row: usize, expected: usize, actual: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("invalid function file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Json,
    Csv,
}

impl InputFormat {
    /// `.csv` files are CSV, everything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Pair([f64; 2]),
    Real(f64),
}

impl Component {
    fn to_scalar(self) -> Complex64 {
        match self {
            Self::Pair([re, im]) => Complex64::new(re, im),
            Self::Real(re) => Complex64::new(re, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub t: f64,
    pub value: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
    pub field: Field,
    pub kind: FunctionKind,
    pub samples: Vec<Sample>,
}

impl FunctionFile {
    pub fn from_function(f: &SampledFunction) -> Self {
        let real = f.values().iter().all(|v| v.coords().iter().all(|z| z.im == 0.0));
        let samples = f
            .grid()
            .nodes()
            .iter()
            .zip(f.values())
            .map(|(&t, v)| Sample {
                t,
                value: v
                    .coords()
                    .iter()
                    .map(|z| if real { Component::Real(z.re) } else { Component::Pair([z.re, z.im]) })
                    .collect(),
            })
            .collect();
        Self {
            a: f.grid().a(),
            b: f.grid().b(),
            dim: f.dim(),
            field: if real { Field::Real } else { Field::Complex },
            kind: f.kind(),
            samples,
        }
    }

    pub fn into_function(self) -> Result<SampledFunction, IoError> {
        if self.dim == 0 {
            return Err(IoError::Invalid("dim must be at least 1".into()));
        }
        let mut nodes = Vec::with_capacity(self.samples.len());
        let mut values = Vec::with_capacity(self.samples.len());
        for (i, sample) in self.samples.into_iter().enumerate() {
            let row = i + 1;
            if sample.value.len() != self.dim {
                return Err(IoError::DimensionMismatch { row, expected: self.dim, actual: sample.value.len() });
            }
            if self.field == Field::Real && sample.value.iter().any(|c| matches!(c, Component::Pair([_, im]) if *im != 0.0)) {
                return Err(IoError::Invalid(format!("row {row}: non-zero imaginary part in a real-valued file")));
            }
            let coords: Vec<Complex64> = sample.value.into_iter().map(Component::to_scalar).collect();
            if !sample.t.is_finite() || coords.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(IoError::NonFinite { row });
            }
            push_node(&mut nodes, sample.t, row)?;
            values.push(SpaceElement::new(coords).map_err(FunctionError::from)?);
        }
        check_endpoints(&nodes, Some(self.a), Some(self.b))?;
        Ok(SampledFunction::new(Grid::new(nodes)?, values, self.kind)?)
    }
}

fn push_node(nodes: &mut Vec<f64>, t: f64, row: usize) -> Result<(), IoError> {
    if let Some(&last) = nodes.last() {
        if t <= last {
            return Err(IoError::NonIncreasing { row });
        }
    }
    nodes.push(t);
    Ok(())
}

fn check_endpoints(nodes: &[f64], a: Option<f64>, b: Option<f64>) -> Result<(), IoError> {
    if nodes.len() < 2 {
        return Err(IoError::Invalid(format!("need at least 2 samples, got {}", nodes.len())));
    }
    if let Some(a) = a {
        if nodes[0] != a {
            return Err(IoError::Invalid(format!("first t = {} differs from a = {a}", nodes[0])));
        }
    }
    if let Some(b) = b {
        let last = nodes[nodes.len() - 1];
        if last != b {
            return Err(IoError::Invalid(format!("last t = {last} differs from b = {b}")));
        }
    }
    Ok(())
}

pub fn parse_json(text: &str) -> Result<SampledFunction, IoError> {
    let file: FunctionFile = serde_json::from_str(text).map_err(|e| IoError::Parse {
        line: e.line() as u64,
        column: e.column() as u64,
        message: e.to_string(),
    })?;
    file.into_function()
}

#[derive(Default)]
struct CsvMeta {
    a: Option<f64>,
    b: Option<f64>,
    dim: Option<usize>,
    field: Option<Field>,
    kind: Option<FunctionKind>,
}

fn parse_meta(text: &str) -> Result<CsvMeta, IoError> {
    let mut meta = CsvMeta::default();
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.trim_start().strip_prefix('#') else { continue };
        let Some((key, value)) = body.split_once('=') else { continue };
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| IoError::Parse {
            line: i as u64 + 1,
            column: 1,
            message: format!("invalid {what} '{value}'"),
        };
        match key {
            "a" => meta.a = Some(parse_finite(value).ok_or_else(|| bad("a"))?),
            "b" => meta.b = Some(parse_finite(value).ok_or_else(|| bad("b"))?),
            "dim" => meta.dim = Some(value.parse().map_err(|_| bad("dim"))?),
            "field" => {
                meta.field = Some(match value {
                    "real" => Field::Real,
                    "complex" => Field::Complex,
                    _ => return Err(bad("field")),
                })
            }
            "kind" => {
                meta.kind = Some(match value {
                    "smooth" => FunctionKind::Smooth,
                    "step" => FunctionKind::Step,
                    _ => return Err(bad("kind")),
                })
            }
            _ => {
                return Err(IoError::Parse {
                    line: i as u64 + 1,
                    column: 1,
                    message: format!("unknown metadata key '{key}'"),
                })
            }
        }
    }
    Ok(meta)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Reads the header and returns the field type and dimension it encodes.
fn parse_header(header: &csv::StringRecord) -> Result<(Field, usize), IoError> {
    let names: Vec<&str> = header.iter().collect();
    let err = |column: usize, message: String| IoError::Parse {
        line: header.position().map_or(1, |p| p.line()),
        column: column as u64,
        message,
    };
    if names.first() != Some(&"t") {
        return Err(err(1, "header must start with 't'".into()));
    }
    let rest = &names[1..];
    if rest.is_empty() {
        return Err(err(2, "header has no value columns".into()));
    }
    if rest[0] == "v0_re" {
        if !rest.len().is_multiple_of(2) {
            return Err(err(names.len(), "complex header needs re/im column pairs".into()));
        }
        for (i, pair) in rest.chunks(2).enumerate() {
            let expected = [format!("v{i}_re"), format!("v{i}_im")];
            for (j, (got, want)) in pair.iter().zip(&expected).enumerate() {
                if got != want {
                    return Err(err(2 + 2 * i + j, format!("expected column '{want}', got '{got}'")));
                }
            }
        }
        Ok((Field::Complex, rest.len() / 2))
    } else {
        for (i, got) in rest.iter().enumerate() {
            let want = format!("v{i}");
            if *got != want {
                return Err(err(2 + i, format!("expected column '{want}', got '{got}'")));
            }
        }
        Ok((Field::Real, rest.len()))
    }
}

/// CSV import. `a` and `b` come from the first and last `t` (metadata, when
/// present, must agree); `kind` defaults to smooth.
pub fn parse_csv(text: &str) -> Result<SampledFunction, IoError> {
    let meta = parse_meta(text)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        IoError::Parse { line, column: 1, message: e.to_string() }
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let (field, dim) = parse_header(&header)?;
    if let Some(expected) = meta.dim {
        if expected != dim {
            return Err(IoError::Invalid(format!("metadata dim = {expected} but the header has {dim} components")));
        }
    }
    if let Some(f) = meta.field {
        if f != field {
            return Err(IoError::Invalid("metadata field disagrees with the header".into()));
        }
    }

    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        let line = record.position().map_or(0, |p| p.line());
        let mut numbers = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let x: f64 = cell.parse().map_err(|_| IoError::Parse {
                line,
                column: j as u64 + 1,
                message: format!("invalid number '{cell}'"),
            })?;
            if !x.is_finite() {
                return Err(IoError::NonFinite { row });
            }
            numbers.push(x);
        }
        push_node(&mut nodes, numbers[0], row)?;
        let coords: Vec<Complex64> = match field {
            Field::Complex => numbers[1..].chunks(2).map(|p| Complex64::new(p[0], p[1])).collect(),
            Field::Real => numbers[1..].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        values.push(SpaceElement::new(coords).map_err(FunctionError::from)?);
    }
    check_endpoints(&nodes, meta.a, meta.b)?;
    let kind = meta.kind.unwrap_or(FunctionKind::Smooth);
    Ok(SampledFunction::new(Grid::new(nodes)?, values, kind)?)
}

pub fn load_function(path: &Path, format: InputFormat) -> Result<SampledFunction, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })?;
    match format {
        InputFormat::Json => parse_json(&text),
        InputFormat::Csv => parse_csv(&text),
    }
}

/// Writes `f` as canonical JSON with 17 significant digits per number.
pub fn save_function(f: &SampledFunction, path: &Path) -> Result<(), IoError> {
    let text = function_to_json(f)?;
    fs::write(path, text).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

pub fn function_to_json(f: &SampledFunction) -> Result<String, IoError> {
    Ok(to_json_string(&FunctionFile::from_function(f))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_constant() {
        let text = r#"{"a": 0, "b": 1, "dim": 1, "field": "complex", "kind": "smooth",
            "samples": [{"t": 0, "value": [[1, 0]]}, {"t": 1, "value": [[1, 0]]}]}"#;
        let f = parse_json(text).unwrap();
        assert_eq!(f.grid().nodes(), &[0.0, 1.0]);
        assert_eq!(f.values()[1], SpaceElement::complex(1.0, 0.0).unwrap());
    }

    #[test]
    fn json_real_field_takes_bare_reals() {
        let text = r#"{"a": 0, "b": 2, "dim": 2, "field": "real", "kind": "step",
            "samples": [{"t": 0, "value": [1, 2]}, {"t": 2, "value": [1, 2]}]}"#;
        let f = parse_json(text).unwrap();
        assert_eq!(f.kind(), FunctionKind::Step);
        assert_eq!(f.values()[0], SpaceElement::real(&[1.0, 2.0]).unwrap());
    }

    #[test]
    fn json_errors() {
        let bad_dim = r#"{"a": 0, "b": 1, "dim": 2, "field": "real", "kind": "smooth",
            "samples": [{"t": 0, "value": [1, 2]}, {"t": 1, "value": [1]}]}"#;
        assert!(matches!(parse_json(bad_dim), Err(IoError::DimensionMismatch { row: 2, .. })));
        let repeated = r#"{"a": 0, "b": 1, "dim": 1, "field": "real", "kind": "smooth",
            "samples": [{"t": 0, "value": [1]}, {"t": 0, "value": [1]}, {"t": 1, "value": [1]}]}"#;
        assert_eq!(parse_json(repeated).unwrap_err().to_string(), "non-increasing grid at row 2");
        let endpoint = r#"{"a": 0, "b": 2, "dim": 1, "field": "real", "kind": "smooth",
            "samples": [{"t": 0, "value": [1]}, {"t": 1, "value": [1]}]}"#;
        assert!(matches!(parse_json(endpoint), Err(IoError::Invalid(_))));
        let truncated = r#"{"a": 0, "b": 1, "#;
        assert!(matches!(parse_json(truncated), Err(IoError::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_three_nodes() {
        let f = parse_csv("t,v0_re,v0_im\n0,1,0\n0.5,0,1\n1,-1,0\n").unwrap();
        assert_eq!(f.grid().len(), 3);
        assert_eq!(f.kind(), FunctionKind::Smooth);
        assert_eq!(f.values()[1], SpaceElement::complex(0.0, 1.0).unwrap());
    }

    #[test]
    fn csv_metadata_and_real_header() {
        let f = parse_csv("# kind=step\n# a=0\nt,v0,v1\n0,1,0\n1,1,0\n").unwrap();
        assert_eq!(f.kind(), FunctionKind::Step);
        assert_eq!(f.dim(), 2);
        assert!(parse_csv("# a=0.5\nt,v0\n0,1\n1,1\n").is_err());
        assert!(parse_csv("# colour=red\nt,v0\n0,1\n1,1\n").is_err());
    }

    #[test]
    fn csv_errors() {
        let err = parse_csv("t,v0_re,v0_im\n0,1,0\n0.5,0,1\n0.5,-1,0\n").unwrap_err();
        assert_eq!(err.to_string(), "non-increasing grid at row 3");
        let err = parse_csv("t,v0\n0,1\n1,abc\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 3, column: 2, .. }), "{err}");
        assert!(matches!(parse_csv("t,v0\n0,NaN\n1,1\n"), Err(IoError::NonFinite { row: 1 })));
        assert!(matches!(parse_csv("t,v0\n0,1\n1,inf\n"), Err(IoError::NonFinite { row: 2 })));
        assert!(matches!(parse_csv("t,v0\n0,1,2\n1,1\n"), Err(IoError::Parse { .. })));
        assert!(matches!(parse_csv("x,v0\n0,1\n1,1\n"), Err(IoError::Parse { column: 1, .. })));
        assert!(matches!(parse_csv("t,v0_re\n0,1\n1,1\n"), Err(IoError::Parse { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let vals = vec![
            SpaceElement::complex(0.1, 1.0 / 3.0).unwrap(),
            SpaceElement::complex(-2.5e-300, 7.0).unwrap(),
            SpaceElement::complex(f64::MAX, -0.0).unwrap(),
        ];
        let f = SampledFunction::new(Grid::new(vec![0.0, 0.1, 0.7]).unwrap(), vals, FunctionKind::Smooth).unwrap();
        let text = function_to_json(&f).unwrap();
        let g = parse_json(&text).unwrap();
        assert_eq!(f, g);
        assert_eq!(function_to_json(&g).unwrap(), text);
    }

    #[test]
    fn real_functions_save_as_real() {
        let f = SampledFunction::new(
            Grid::new(vec![0.0, 1.0]).unwrap(),
            vec![SpaceElement::real(&[1.0]).unwrap(), SpaceElement::real(&[2.0]).unwrap()],
            FunctionKind::Smooth,
        )
        .unwrap();
        let file = FunctionFile::from_function(&f);
        assert_eq!(file.field, Field::Real);
        assert_eq!(file.samples[1].value, vec![Component::Real(2.0)]);
    }
}
