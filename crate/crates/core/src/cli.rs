//! The `revtri` command line.
//!
//! Exit codes: 0 when every requested certificate was issued and holds, 2 when
//! a hypothesis is inapplicable or a certificate fails, 1 on usage or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::certificates::{
    auto_certify, certify_band, certify_complex, certify_disk, certify_ortho, certify_ortho_band, certify_ortho_disk,
    certify_unit_vector, direction_search, estimate, AdditiveForm, CertError, Certificate, Estimates, TheoremId,
};
use crate::function::{sample_family, FamilySpec, FunctionKind, Grid, SampledFunction};
use crate::hypotheses::{arc_bound, band_fit, minimal_k, minimal_rho, ortho_coefficients, HypothesisError, HypothesisParams};
use crate::io::{load_function, InputFormat};
use crate::quadrature::{convergence_order, ConvergenceOrder, QuadratureRule};
use crate::report::{to_json_string, Report};
use crate::space::{complete_basis, SpaceElement, ToleranceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

/// Environment variable overriding `cert_rel_tol`.
pub const TOL_ENV: &str = "REVTRI_TOL";

#[derive(Debug, Parser)]
#[command(name = "revtri", version, about = "Certify reverse triangle inequalities for sampled vector-valued functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check hypotheses and issue reverse-inequality certificates.
    Certify(CertifyArgs),
    /// Estimate the best hypothesis parameters for an input.
    Estimate(EstimateArgs),
    /// Certify a parametrized family over a range of one parameter and write CSV.
    Sweep(SweepArgs),
    /// Measure the convergence order of a quadrature rule on a family.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Sampled function file (.json, or .csv).
    #[arg(long, conflicts_with = "family")]
    input: Option<PathBuf>,
    /// Analytic family, e.g. "complex_arc:omega=1" or "disk_orbit:e=[1,0],r=0.5".
    #[arg(long)]
    family: Option<String>,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    a: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 129)]
    nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Theorem {
    Auto,
    T21,
    C22,
    C23,
    T31,
    C32,
    C33,
    P41,
    Karamata,
    P43,
    P44,
}

impl Theorem {
    fn id(self) -> Option<TheoremId> {
        Some(match self {
            Self::Auto => return None,
            Self::T21 => TheoremId::T21,
            Self::C22 => TheoremId::C22,
            Self::C23 => TheoremId::C23,
            Self::T31 => TheoremId::T31,
            Self::C32 => TheoremId::C32,
            Self::C33 => TheoremId::C33,
            Self::P41 => TheoremId::P41,
            Self::Karamata => TheoremId::Karamata,
            Self::P43 => TheoremId::P43,
            Self::P44 => TheoremId::P44,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// step, trapezoid, simpson or gauss_legendre[(order,panels)]; chosen from the input when omitted.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long, value_enum, default_value_t = Theorem::Auto)]
    theorem: Theorem,
    /// Unit vector "re,im;re,im;...", one pair (or bare real) per coordinate.
    #[arg(long, allow_hyphen_values = true)]
    e: Option<String>,
    #[arg(long = "K")]
    big_k: Option<f64>,
    /// Disk radius; a comma-separated list for c32.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    /// Lower band constant; a comma-separated list for c33.
    #[arg(long, allow_hyphen_values = true)]
    m: Option<String>,
    /// Upper band constant; a comma-separated list for c33.
    #[arg(long = "M", allow_hyphen_values = true)]
    big_m: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// Coefficients k_i for t31.
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    /// Orthonormal family "vector|vector|...", each in the --e format.
    #[arg(long, allow_hyphen_values = true)]
    basis: Option<String>,
    /// For p44: read (m, M) as the rectangle bounds along e = alpha + i beta.
    #[arg(long)]
    rect: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    e: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    basis: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Family name with optional fixed parameters, e.g. "band_equality:m=1".
    #[arg(long)]
    family: String,
    /// theta (complex_arc), rho (disk_orbit), M (band_equality) or K (two_piece_equality).
    #[arg(long)]
    param: String,
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    #[arg(long, allow_negative_numbers = true)]
    steps: i64,
    #[arg(long)]
    theorem: Option<Theorem>,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long, default_value_t = 129)]
    nodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[arg(long)]
    family: String,
    #[arg(long)]
    rule: String,
    /// Comma-separated node counts, at least three.
    #[arg(long)]
    sizes: String,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    a: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    b: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

/// Failure that ends a command before a report exists.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Inapplicable(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Inapplicable(_) => EXIT_FAILED,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Inapplicable(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parameter or rule errors are the caller's fault; failed or infeasible
/// hypotheses mean the theorem does not apply to this input.
fn is_inapplicable(err: &CertError) -> bool {
    match err {
        CertError::HypothesisFailed { .. } | CertError::VacuousHypothesis { .. } | CertError::ZeroIntegral => true,
        CertError::Hypothesis(h) => is_infeasible(h),
        CertError::Quadrature(_) | CertError::Function(_) => false,
    }
}

fn is_infeasible(err: &HypothesisError) -> bool {
    matches!(
        err,
        HypothesisError::NoFiniteK { .. } | HypothesisError::BandInfeasible { .. } | HypothesisError::NonPositiveReal { .. }
    )
}

/// Entry point for the binary: reads `REVTRI_TOL` and uses the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let tol_env = std::env::var(TOL_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, tol_env.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one invocation with explicit streams and tolerance override.
pub fn run_with<I, T>(args: I, tol_env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = tolerance(tol_env).and_then(|tol| match &cli.command {
        Command::Certify(args) => cmd_certify(args, &tol, out, err),
        Command::Estimate(args) => cmd_estimate(args, &tol, out),
        Command::Sweep(args) => cmd_sweep(args, &tol, out),
        Command::Convergence(args) => cmd_convergence(args, out),
    });
    match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(err, "revtri: {}", failure.message());
            failure.code()
        }
    }
}

fn tolerance(env: Option<&str>) -> Result<ToleranceConfig, Failure> {
    let mut tol = ToleranceConfig::default();
    if let Some(raw) = env {
        let raw = raw.trim();
        if !raw.is_empty() {
            tol.cert_rel_tol = raw.parse().map_err(|_| usage(format!("{TOL_ENV}: not a decimal number: '{raw}'")))?;
            tol.validate().map_err(|e| usage(format!("{TOL_ENV}: {e}")))?;
        }
    }
    Ok(tol)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => out.write_all(text.as_bytes()).map_err(|e| usage(format!("stdout: {e}"))),
    }
}

// ---- argument parsing helpers ----

fn parse_number(s: &str, what: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("{what}: not a finite decimal number: '{}'", s.trim()))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|x| parse_number(x, what)).collect()
}

/// `"re,im;re,im"`, one coordinate per `;`-separated entry; a bare real is allowed.
pub fn parse_vector(s: &str) -> Result<SpaceElement, String> {
    let coords = s
        .split(';')
        .map(|c| {
            let parts: Vec<&str> = c.split(',').collect();
            match parts.as_slice() {
                [re] => Ok(Complex64::new(parse_number(re, "vector")?, 0.0)),
                [re, im] => Ok(Complex64::new(parse_number(re, "vector")?, parse_number(im, "vector")?)),
                _ => Err(format!("vector coordinate '{c}' must be 're,im' or 're'")),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    SpaceElement::new(coords).map_err(|e| e.to_string())
}

/// Vectors separated by `|`.
pub fn parse_vector_list(s: &str) -> Result<Vec<SpaceElement>, String> {
    s.split('|').map(parse_vector).collect()
}

fn strip_brackets(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).unwrap_or(s)
}

/// Splits on commas outside square brackets.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Parses `name[:key=value,...]`. Scalars are plain decimals, vectors use the
/// `--e` format in brackets (`e=[1,0]`), real lists are bracketed
/// comma lists (`c=[0.5,0.5]`), vector lists separate vectors with `|`.
pub fn parse_family(spec: &str) -> Result<FamilySpec, String> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut pairs = Vec::new();
    if !rest.trim().is_empty() {
        for item in split_top_level(rest) {
            let (k, v) = item.split_once('=').ok_or_else(|| format!("family parameter '{item}' is not key=value"))?;
            pairs.push((k.trim(), v.trim()));
        }
    }
    let known: &[&str] = match name.trim() {
        "constant" => &["v"],
        "complex_arc" => &["omega", "phi0"],
        "disk_orbit" => &["e", "r", "omega"],
        "two_piece_equality" => &["K", "k"],
        "band_equality" => &["m", "M"],
        "ortho_mix" => &["c", "basis"],
        "polynomial" => &["coeffs"],
        other => return Err(format!("unknown family '{other}'")),
    };
    if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(k)) {
        return Err(format!("family {} has no parameter '{k}'", name.trim()));
    }
    let get = |key: &str| pairs.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let scalar = |key: &str, default: f64| get(key).map_or(Ok(default), |v| parse_number(v, key));
    let required = |key: &str| get(key).ok_or_else(|| format!("family {} needs parameter '{key}'", name.trim()));
    Ok(match name.trim() {
        "constant" => FamilySpec::Constant { v: parse_vector(strip_brackets(required("v")?))? },
        "complex_arc" => FamilySpec::ComplexArc { omega: scalar("omega", 1.0)?, phi0: scalar("phi0", 0.0)? },
        "disk_orbit" => FamilySpec::DiskOrbit {
            e: get("e").map_or(Ok(SpaceElement::complex(1.0, 0.0).expect("finite")), |v| parse_vector(strip_brackets(v)))?,
            r: scalar("r", 0.5)?,
            omega: scalar("omega", 1.0)?,
        },
        "two_piece_equality" => FamilySpec::TwoPieceEquality {
            k: match get("K").or(get("k")) {
                Some(v) => parse_number(v, "K")?,
                None => 2.0,
            },
        },
        "band_equality" => FamilySpec::BandEquality { m: scalar("m", 1.0)?, big_m: scalar("M", 4.0)? },
        "ortho_mix" => FamilySpec::OrthoMix {
            c: parse_list(strip_brackets(required("c")?), "c")?,
            basis: parse_vector_list(strip_brackets(required("basis")?))?,
        },
        "polynomial" => FamilySpec::Polynomial { coeffs: parse_vector_list(strip_brackets(required("coeffs")?))? },
        _ => unreachable!("family names checked above"),
    })
}

/// `step`, `trapezoid`, `simpson`, `gauss_legendre` or `gauss_legendre(order,panels)`.
fn parse_rule(s: &str, f: &SampledFunction) -> Result<QuadratureRule, String> {
    let s = s.trim();
    Ok(match s {
        "step" => QuadratureRule::Step,
        "trapezoid" => QuadratureRule::Trapezoid,
        "simpson" => QuadratureRule::Simpson,
        "gauss_legendre" => QuadratureRule::GaussLegendre { order: 5, panels: f.grid().subintervals() },
        _ => {
            let inner = s
                .strip_prefix("gauss_legendre(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| format!("unknown rule '{s}'"))?;
            let (o, p) = inner.split_once(',').ok_or_else(|| format!("rule '{s}': expected gauss_legendre(order,panels)"))?;
            let order = o.trim().parse().map_err(|_| format!("rule '{s}': bad order"))?;
            let panels = p.trim().parse().map_err(|_| format!("rule '{s}': bad panel count"))?;
            QuadratureRule::GaussLegendre { order, panels }
        }
    })
}

fn default_rule(f: &SampledFunction) -> QuadratureRule {
    match f.kind() {
        FunctionKind::Step => QuadratureRule::Step,
        FunctionKind::Smooth if f.grid().subintervals().is_multiple_of(2) => QuadratureRule::Simpson,
        FunctionKind::Smooth => QuadratureRule::Trapezoid,
    }
}

fn resolve_rule(arg: Option<&str>, f: &SampledFunction) -> Result<QuadratureRule, Failure> {
    match arg {
        Some(s) => parse_rule(s, f).map_err(usage),
        None => Ok(default_rule(f)),
    }
}

const GL_WARNING: &str =
    "gauss_legendre reads off-node values by piecewise-linear interpolation, so its effective order is at most 2";

fn load_source(src: &SourceArgs) -> Result<SampledFunction, Failure> {
    match (&src.input, &src.family) {
        (Some(_), Some(_)) => Err(usage("--input conflicts with --family")),
        (Some(path), None) => load_function(path, InputFormat::from_path(path)).map_err(|e| usage(e.to_string())),
        (None, Some(spec)) => {
            let family = parse_family(spec).map_err(usage)?;
            let grid = Grid::uniform(src.a, src.b, src.nodes).map_err(|e| usage(e.to_string()))?;
            sample_family(&family, &grid).map_err(|e| usage(e.to_string()))
        }
        (None, None) => Err(usage("one of --input or --family is required")),
    }
}

/// `--e` when given; otherwise the best direction found by search, falling
/// back to the first non-zero sample.
fn resolve_e(arg: Option<&str>, f: &SampledFunction, rule: QuadratureRule, tol: &ToleranceConfig) -> Result<SpaceElement, Failure> {
    if let Some(s) = arg {
        return parse_vector(s).map_err(|e| usage(format!("--e: {e}")));
    }
    if let Ok((e, _)) = direction_search(f, rule, tol) {
        return Ok(e);
    }
    f.active_nodes()
        .find_map(|(_, x)| x.normalized().ok())
        .ok_or_else(|| Failure::Inapplicable("every sample is zero; no direction to certify against".into()))
}

fn single(arg: &str, what: &str) -> Result<f64, Failure> {
    let values = parse_list(arg, what).map_err(usage)?;
    match values.as_slice() {
        [x] => Ok(*x),
        _ => Err(usage(format!("--{what} takes a single value for this theorem"))),
    }
}

fn band_pair(m: Option<&str>, big_m: Option<&str>) -> Result<Option<(f64, f64)>, Failure> {
    match (m, big_m) {
        (Some(m), Some(big_m)) => Ok(Some((single(m, "m")?, single(big_m, "M")?))),
        (None, None) => Ok(None),
        _ => Err(usage("--m and --M must be given together")),
    }
}

/// The user's family, or the leading vectors of a basis completing `e`.
fn resolve_basis(arg: Option<&str>, e: &SpaceElement, len: usize) -> Result<Vec<SpaceElement>, Failure> {
    match arg {
        Some(s) => parse_vector_list(s).map_err(|e| usage(format!("--basis: {e}"))),
        None => {
            let basis = complete_basis(e).map_err(|err| usage(format!("cannot complete a basis from e: {err}")))?;
            if len > basis.len() {
                return Err(usage(format!("{len} coefficients but only {} basis vectors in dimension {}", basis.len(), e.dim())));
            }
            Ok(basis.into_iter().take(len).collect())
        }
    }
}

type Outcome = Result<(Certificate, Option<AdditiveForm>), CertError>;

fn plain(r: Result<Certificate, CertError>) -> Outcome {
    r.map(|c| (c, None))
}

fn estimated<T>(r: Result<T, HypothesisError>) -> Result<T, CertError> {
    r.map_err(CertError::from)
}

/// Runs one named theorem, estimating any omitted scalar parameter.
fn certify_one(
    theorem: Theorem,
    args: &CertifyArgs,
    f: &SampledFunction,
    rule: QuadratureRule,
    tol: &ToleranceConfig,
    est: &mut Estimates,
) -> Result<Outcome, Failure> {
    let complex = matches!(theorem, Theorem::P41 | Theorem::Karamata | Theorem::P43 | Theorem::P44);
    if complex && f.dim() != 1 {
        return Err(usage(format!("{} needs a one-dimensional complex input, got dimension {}", theorem_name(theorem), f.dim())));
    }
    let e = if theorem == Theorem::Karamata { None } else { Some(resolve_e(args.e.as_deref(), f, rule, tol)?) };
    est.e = e.clone();
    let e_ref = || e.as_ref().expect("resolved above");

    let outcome = match theorem {
        Theorem::T21 | Theorem::P41 => {
            let k = match args.big_k {
                Some(k) => Ok(k),
                None => estimated(minimal_k(f, e_ref(), tol)).inspect(|k| est.k_star = Some(*k)),
            };
            match (theorem, k) {
                (_, Err(err)) => Err(err),
                (Theorem::T21, Ok(k)) => plain(certify_unit_vector(f, e_ref(), k, rule, tol)),
                (_, Ok(k)) => certify_complex(f, &HypothesisParams::UnitK { e: e_ref().clone(), k }, rule, tol),
            }
        }
        Theorem::C22 | Theorem::P43 => {
            let rho = match args.rho.as_deref() {
                Some(s) => Ok(single(s, "rho")?),
                None => estimated(minimal_rho(f, e_ref(), tol)).inspect(|r| est.rho_star = Some(*r)),
            };
            match rho {
                Err(err) => Err(err),
                Ok(rho) if args.rho.is_none() && rho >= 1.0 - tol.margin_tol => {
                    return Err(Failure::Inapplicable(format!(
                        "{}: estimated rho* = {rho} is not below 1, so no disk hypothesis applies",
                        theorem_name(theorem)
                    )))
                }
                Ok(rho) => {
                    let rho = if args.rho.is_none() { rho.max(f64::MIN_POSITIVE) } else { rho };
                    if theorem == Theorem::C22 {
                        plain(certify_disk(f, e_ref(), rho, rule, tol))
                    } else {
                        certify_complex(f, &HypothesisParams::Disk { e: e_ref().clone(), rho }, rule, tol)
                    }
                }
            }
        }
        Theorem::C23 | Theorem::P44 => {
            let bounds = band_pair(args.m.as_deref(), args.big_m.as_deref())?;
            if args.rect {
                if theorem != Theorem::P44 {
                    return Err(usage("--rect applies to p44 only"));
                }
                let (m, big_m) = bounds.ok_or_else(|| usage("--rect needs --m and --M"))?;
                let z = e_ref().coords()[0];
                let params = HypothesisParams::ComplexRect { alpha: z.re, beta: z.im, m, big_m };
                certify_complex(f, &params, rule, tol)
            } else {
                let bounds = match bounds {
                    Some(b) => Ok(b),
                    None => estimated(band_fit(f, e_ref(), tol)).map(|fit| {
                        est.band = Some(fit);
                        (fit.m, fit.big_m)
                    }),
                };
                match (theorem, bounds) {
                    (_, Err(err)) => Err(err),
                    (Theorem::C23, Ok((m, big_m))) => {
                        certify_band(f, e_ref(), m, big_m, rule, tol).map(|(c, a)| (c, Some(a)))
                    }
                    (_, Ok((m, big_m))) => {
                        certify_complex(f, &HypothesisParams::Band { e: e_ref().clone(), m, big_m }, rule, tol)
                    }
                }
            }
        }
        Theorem::T31 => {
            let k = match args.k.as_deref() {
                Some(s) => Some(parse_list(s, "k").map_err(usage)?),
                None => None,
            };
            let len = k.as_ref().map_or(f.dim(), Vec::len);
            let basis = resolve_basis(args.basis.as_deref(), e_ref(), len)?;
            let k = match k {
                Some(k) => Ok(k),
                None => estimated(ortho_coefficients(f, &basis, tol)).inspect(|k| est.k = Some(k.clone())),
            };
            est.basis = Some(basis.clone());
            k.and_then(|k| certify_ortho(f, &basis, &k, rule, tol)).map(|c| (c, None))
        }
        Theorem::C32 => {
            let rho = parse_list(args.rho.as_deref().ok_or_else(|| usage("c32 needs --rho with one radius per basis vector"))?, "rho")
                .map_err(usage)?;
            let basis = resolve_basis(args.basis.as_deref(), e_ref(), rho.len())?;
            est.basis = Some(basis.clone());
            plain(certify_ortho_disk(f, &basis, &rho, rule, tol))
        }
        Theorem::C33 => {
            let (m, big_m) = match (args.m.as_deref(), args.big_m.as_deref()) {
                (Some(m), Some(big_m)) => (parse_list(m, "m").map_err(usage)?, parse_list(big_m, "M").map_err(usage)?),
                _ => return Err(usage("c33 needs --m and --M with one value per basis vector")),
            };
            if m.len() != big_m.len() {
                return Err(usage("--m and --M need the same number of values"));
            }
            let basis = resolve_basis(args.basis.as_deref(), e_ref(), m.len())?;
            est.basis = Some(basis.clone());
            plain(certify_ortho_band(f, &basis, &m, &big_m, rule, tol))
        }
        Theorem::Karamata => {
            let theta = match args.theta {
                Some(t) => Ok(t),
                None => estimated(arc_bound(f)).map(|t| {
                    est.theta_star = Some(t);
                    t.max(f64::MIN_POSITIVE)
                }),
            };
            theta.and_then(|theta| certify_complex(f, &HypothesisParams::ComplexArg { theta }, rule, tol))
        }
        Theorem::Auto => unreachable!("auto is dispatched separately"),
    };
    Ok(outcome)
}

fn theorem_name(t: Theorem) -> &'static str {
    t.id().map_or("auto", |id| id.as_str())
}

fn cmd_certify(args: &CertifyArgs, tol: &ToleranceConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let f = load_source(&args.source)?;
    let rule = resolve_rule(args.rule.as_deref(), &f)?;
    let mut report = Report::new(&f, rule, theorem_name(args.theorem));
    if matches!(rule, QuadratureRule::GaussLegendre { .. }) {
        let _ = writeln!(err, "revtri: warning: {GL_WARNING}");
        report.warnings.push(GL_WARNING.into());
    }

    match args.theorem.id() {
        None => {
            let e = match args.e.as_deref() {
                Some(s) => Some(parse_vector(s).map_err(|e| usage(format!("--e: {e}")))?),
                None => None,
            };
            let (entries, est) = auto_certify(&f, e.as_ref(), rule, tol);
            for entry in entries {
                report.push_entry(entry);
            }
            report.estimates = Some(est);
        }
        Some(id) => {
            let mut est = Estimates::default();
            match certify_one(args.theorem, args, &f, rule, tol, &mut est) {
                Ok(Ok((cert, additive))) => report.push_certificate(cert, additive),
                Ok(Err(cert_err)) if is_inapplicable(&cert_err) => {
                    let check = match &cert_err {
                        CertError::HypothesisFailed { report, .. } => Some(report.clone()),
                        _ => None,
                    };
                    report.push_inapplicable(id, cert_err.to_string(), check);
                }
                Ok(Err(cert_err)) => return Err(usage(cert_err.to_string())),
                Err(Failure::Inapplicable(reason)) => report.push_inapplicable(id, reason, None),
                Err(failure) => return Err(failure),
            }
            report.estimates = Some(est);
        }
    }

    let text = match args.format {
        Format::Json => report.to_json().map_err(|e| usage(e.to_string()))?,
        Format::Text => report.to_text(),
    };
    emit(out, args.out.as_deref(), &text)?;
    Ok(if report.succeeded() { EXIT_OK } else { EXIT_FAILED })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.16e}"))
}

fn cmd_estimate(args: &EstimateArgs, tol: &ToleranceConfig, out: &mut dyn Write) -> Result<i32, Failure> {
    let f = load_source(&args.source)?;
    let rule = resolve_rule(args.rule.as_deref(), &f)?;
    let e = resolve_e(args.e.as_deref(), &f, rule, tol)?;
    let basis = match args.basis.as_deref() {
        Some(s) => Some(parse_vector_list(s).map_err(|e| usage(format!("--basis: {e}")))?),
        None => None,
    };
    let est = estimate(&f, &e, basis.as_deref(), tol);
    let text = match args.format {
        Format::Json => to_json_string(&est).map_err(|e| usage(e.to_string()))?,
        Format::Text => {
            let mut s = format!("e = {e}\n");
            s.push_str(&format!("K* = {}\n", fmt_opt(est.k_star)));
            s.push_str(&format!("rho* = {}\n", fmt_opt(est.rho_star)));
            match est.band {
                Some(b) => s.push_str(&format!("band: m = {:.16e}, M = {:.16e}, factor = {:.16e}\n", b.m, b.big_m, b.factor)),
                None => s.push_str("band: n/a\n"),
            }
            if f.dim() == 1 {
                s.push_str(&format!("theta* = {}\n", fmt_opt(est.theta_star)));
            }
            if let Some(k) = &est.k {
                let list: Vec<String> = k.iter().map(|x| format!("{x:.16e}")).collect();
                s.push_str(&format!("k_i = [{}]\n", list.join(", ")));
            }
            for note in &est.notes {
                s.push_str(&format!("inapplicable: {note}\n"));
            }
            s
        }
    };
    emit(out, args.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

/// One sweep point: the family, its grid, and the certificate request.
struct SweepPoint {
    family: FamilySpec,
    grid: Grid,
    theorem: Theorem,
    value: f64,
}

fn sweep_point(base: &FamilySpec, param: &str, value: f64, theorem: Option<Theorem>, nodes: usize) -> Result<SweepPoint, Failure> {
    use std::f64::consts::PI;
    let grid = |a: f64, b: f64| Grid::uniform(a, b, nodes).map_err(|e| usage(e.to_string()));
    let pick = |natural: Theorem, allowed: &[Theorem]| -> Result<Theorem, Failure> {
        let t = theorem.unwrap_or(natural);
        if allowed.contains(&t) {
            Ok(t)
        } else {
            Err(usage(format!("theorem {} cannot be swept over {param}", theorem_name(t))))
        }
    };
    Ok(match (base, param) {
        (FamilySpec::ComplexArc { omega, phi0 }, "theta") => SweepPoint {
            family: FamilySpec::ComplexArc { omega: *omega, phi0: *phi0 },
            grid: grid(-value, value)?,
            theorem: pick(Theorem::Karamata, &[Theorem::Karamata, Theorem::T21, Theorem::P41])?,
            value,
        },
        (FamilySpec::DiskOrbit { e, omega, .. }, "rho") => SweepPoint {
            family: FamilySpec::DiskOrbit { e: e.clone(), r: value, omega: *omega },
            grid: grid(0.0, 2.0 * PI)?,
            theorem: pick(Theorem::C22, &[Theorem::C22, Theorem::P43])?,
            value,
        },
        (FamilySpec::BandEquality { m, .. }, "M") => SweepPoint {
            family: FamilySpec::BandEquality { m: *m, big_m: value },
            grid: grid(0.0, 1.0)?,
            theorem: pick(Theorem::C23, &[Theorem::C23, Theorem::P44])?,
            value,
        },
        (FamilySpec::TwoPieceEquality { .. }, "K") => SweepPoint {
            family: FamilySpec::TwoPieceEquality { k: value },
            grid: grid(0.0, 1.0)?,
            theorem: pick(Theorem::T21, &[Theorem::T21, Theorem::P41])?,
            value,
        },
        _ => return Err(usage(format!("cannot sweep parameter '{param}' of this family"))),
    })
}

fn sweep_certificate(
    point: &SweepPoint,
    param: &str,
    rule_arg: Option<&str>,
    tol: &ToleranceConfig,
) -> Result<Certificate, Failure> {
    let f = sample_family(&point.family, &point.grid).map_err(|e| Failure::Inapplicable(e.to_string()))?;
    let rule = resolve_rule(rule_arg, &f)?;
    let one = || SpaceElement::complex(1.0, 0.0).expect("finite");
    let v = point.value;
    let result = match (&point.family, point.theorem) {
        (_, Theorem::Karamata) => certify_complex(&f, &HypothesisParams::ComplexArg { theta: v }, rule, tol).map(|r| r.0),
        (FamilySpec::ComplexArc { .. }, Theorem::T21) => certify_unit_vector(&f, &one(), 1.0 / v.cos(), rule, tol),
        (FamilySpec::ComplexArc { .. }, _) => {
            certify_complex(&f, &HypothesisParams::UnitK { e: one(), k: 1.0 / v.cos() }, rule, tol).map(|r| r.0)
        }
        (FamilySpec::DiskOrbit { e, .. }, Theorem::C22) => certify_disk(&f, e, v, rule, tol),
        (FamilySpec::DiskOrbit { e, .. }, _) => {
            certify_complex(&f, &HypothesisParams::Disk { e: e.clone(), rho: v }, rule, tol).map(|r| r.0)
        }
        (FamilySpec::BandEquality { m, .. }, Theorem::C23) => certify_band(&f, &one(), *m, v, rule, tol).map(|r| r.0),
        (FamilySpec::BandEquality { m, .. }, _) => {
            certify_complex(&f, &HypothesisParams::Band { e: one(), m: *m, big_m: v }, rule, tol).map(|r| r.0)
        }
        (_, Theorem::T21) => certify_unit_vector(&f, &one(), v, rule, tol),
        _ => certify_complex(&f, &HypothesisParams::UnitK { e: one(), k: v }, rule, tol).map(|r| r.0),
    };
    result.map_err(|err| {
        let msg = format!("{param} = {v}: {err}");
        if is_inapplicable(&err) {
            Failure::Inapplicable(msg)
        } else {
            usage(msg)
        }
    })
}

fn cmd_sweep(args: &SweepArgs, tol: &ToleranceConfig, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.steps <= 0 {
        return Err(usage(format!("--steps must be positive, got {}", args.steps)));
    }
    if !(args.from.is_finite() && args.to.is_finite()) || args.to < args.from || (args.to == args.from && args.steps > 1) {
        return Err(usage(format!("empty range [{}, {}]", args.from, args.to)));
    }
    let base = parse_family(&args.family).map_err(usage)?;
    let steps = args.steps as usize;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header = ["param", "factor", "lhs", "rhs", "tightness", "slack"];
    writer.write_record(header).map_err(|e| usage(e.to_string()))?;
    let mut all_hold = true;
    for i in 0..steps {
        let value = if steps == 1 {
            args.from
        } else {
            args.from + (args.to - args.from) * i as f64 / (steps - 1) as f64
        };
        let point = sweep_point(&base, &args.param, value, args.theorem, args.nodes)?;
        let cert = sweep_certificate(&point, &args.param, args.rule.as_deref(), tol)?;
        all_hold &= cert.holds;
        let row = [value, cert.factor, cert.lhs, cert.rhs, cert.tightness, cert.slack].map(|x| format!("{x:.16e}"));
        writer.write_record(&row).map_err(|e| usage(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| usage(e.to_string()))?;
    let text = String::from_utf8(bytes).expect("CSV of ASCII numbers");
    emit(out, args.out.as_deref(), &text)?;
    Ok(if all_hold { EXIT_OK } else { EXIT_FAILED })
}

/// Accepted measured orders per rule.
pub fn order_band(rule: QuadratureRule) -> Option<(f64, f64)> {
    match rule {
        QuadratureRule::Trapezoid | QuadratureRule::GaussLegendre { .. } => Some((1.8, 2.2)),
        QuadratureRule::Simpson => Some((3.5, 4.5)),
        QuadratureRule::Step => None,
    }
}

fn cmd_convergence(args: &ConvergenceArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let family = parse_family(&args.family).map_err(usage)?;
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("--sizes: bad node count '{}'", s.trim()))))
        .collect::<Result<_, _>>()?;
    if sizes.len() < 3 {
        return Err(usage(format!("--sizes needs at least 3 node counts, got {}", sizes.len())));
    }
    let probe = Grid::uniform(args.a, args.b, sizes[0]).map_err(|e| usage(e.to_string()))?;
    let probe = sample_family(&family, &probe).map_err(|e| usage(e.to_string()))?;
    let rule = parse_rule(&args.rule, &probe).map_err(usage)?;
    let band = order_band(rule).ok_or_else(|| usage("the step rule has no convergence order"))?;
    let study = convergence_order(&family, rule, args.a, args.b, &sizes).map_err(|e| usage(e.to_string()))?;
    let within = match study.order {
        ConvergenceOrder::Exact => true,
        ConvergenceOrder::Order(p) => p >= band.0 && p <= band.1,
    };
    let text = match args.format {
        Format::Json => to_json_string(&study).map_err(|e| usage(e.to_string()))?,
        Format::Text => {
            let mut s = format!("rule: {rule}\n");
            for (n, err) in study.sizes.iter().zip(&study.errors) {
                s.push_str(&format!("{n:>8} {err:.16e}\n"));
            }
            match study.order {
                ConvergenceOrder::Exact => s.push_str("order: exact (errors at rounding level)\n"),
                ConvergenceOrder::Order(p) => s.push_str(&format!(
                    "order: {p:.6} (accepted [{}, {}]): {}\n",
                    band.0,
                    band.1,
                    if within { "within" } else { "outside" }
                )),
            }
            s
        }
    };
    emit(out, None, &text)?;
    Ok(if within { EXIT_OK } else { EXIT_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("revtri").chain(args.iter().copied()), None, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn family_parsing() {
        assert_eq!(parse_family("complex_arc:omega=1").unwrap(), FamilySpec::ComplexArc { omega: 1.0, phi0: 0.0 });
        let f = parse_family("disk_orbit:e=[0,1],r=0.25").unwrap();
        assert_eq!(f, FamilySpec::DiskOrbit { e: SpaceElement::complex(0.0, 1.0).unwrap(), r: 0.25, omega: 1.0 });
        let f = parse_family("ortho_mix:c=[0.5,0.5],basis=[1;0|0;1]").unwrap();
        let FamilySpec::OrthoMix { c, basis } = f else { panic!() };
        assert_eq!(c, vec![0.5, 0.5]);
        assert_eq!(basis[1], SpaceElement::basis(2, 1));
        assert_eq!(parse_family("two_piece_equality:K=5").unwrap(), FamilySpec::TwoPieceEquality { k: 5.0 });
        assert!(parse_family("complex_arc:alpha=1").is_err());
        assert!(parse_family("spiral").is_err());
        assert!(parse_family("complex_arc:omega=abc").is_err());
    }

    #[test]
    fn vector_parsing() {
        assert_eq!(parse_vector("1,0;0,-1").unwrap().coords()[1], Complex64::new(0.0, -1.0));
        assert_eq!(parse_vector("0.6;0.8").unwrap(), SpaceElement::real(&[0.6, 0.8]).unwrap());
        assert!(parse_vector("1,2,3").is_err());
        assert!(parse_vector("nan").is_err());
    }

    #[test]
    fn karamata_on_family() {
        let (code, out, _) = run_capture(&[
            "certify", "--family", "complex_arc:omega=1", "--a", "-1.0471975512", "--b", "1.0471975512",
            "--theorem", "karamata", "--rule", "simpson",
        ]);
        assert_eq!(code, EXIT_OK, "{out}");
        let report: Report = serde_json::from_str(&out).unwrap();
        assert!((report.certificates[0].factor - 0.5).abs() < 1e-9);
        assert!(report.certificates[0].holds);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_capture(&["certify"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["certify", "--family", "complex_arc", "--theorem", "c32"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["certify", "--family", "complex_arc", "--theorem", "c23", "--m", "1"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn tolerance_override() {
        assert_eq!(tolerance(Some("1e-6")).unwrap().cert_rel_tol, 1e-6);
        assert!(tolerance(Some("lots")).is_err());
        assert!(tolerance(Some("-1")).is_err());
        assert_eq!(tolerance(None).unwrap(), ToleranceConfig::default());
    }
}
