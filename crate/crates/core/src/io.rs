//! Problem files, JSON reports and CSV tables.
//!
//! Report numbers are written as decimal strings with 12 significant digits so
//! that reruns are byte-identical regardless of the last bits of a solve.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::certificates::{CertValue, CertificateReport, Verdict};
use crate::ensemble::gaussian_matrix;
use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::linalg::{Matrix, Vector};
use crate::pipeline::PipelineResult;
use crate::problem::{AnalysisOperator, Problem};
use crate::recovery::{RateFit, RecoveryRun};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    RowMajor(Vec<f64>),
    Generator { generator: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(String),
    RowMajor(Vec<f64>),
}

/// On-disk problem description; group indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub groups: Vec<Vec<usize>>,
    pub phi: MatrixSpec,
    pub d: OperatorSpec,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::mismatch(what, rows * cols, data.len()));
    }
    Ok(Matrix::from_row_slice(rows, cols, data))
}

fn to_row_major(m: &Matrix) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<Problem> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let phi = match &self.phi {
            MatrixSpec::RowMajor(data) => row_major(self.m, self.n, data, "phi entries")?,
            MatrixSpec::Generator { generator, seed } => match generator.as_str() {
                "gaussian" => gaussian_matrix(self.m, self.n, *seed),
                other => return Err(Error::InvalidInput(format!("unknown phi generator '{other}'"))),
            },
        };
        let d = match &self.d {
            OperatorSpec::Named(name) if name == "identity" => {
                if self.p != self.n {
                    return Err(Error::mismatch("p for the identity operator", self.n, self.p));
                }
                AnalysisOperator::Identity(self.n)
            }
            OperatorSpec::Named(other) => return Err(Error::InvalidInput(format!("unknown operator '{other}'"))),
            OperatorSpec::RowMajor(data) => AnalysisOperator::Matrix(row_major(self.n, self.p, data, "d entries")?),
        };
        if self.x0.len() != self.n {
            return Err(Error::mismatch("x0 length", self.n, self.x0.len()));
        }
        let groups = GroupStructure::new(self.p, self.groups)?;
        Problem::new(phi, d, groups, Vector::from_vec(self.x0))
    }

    pub fn from_problem(prob: &Problem, seed: Option<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            m: prob.m(),
            n: prob.n(),
            p: prob.p(),
            groups: prob.groups.groups().to_vec(),
            phi: MatrixSpec::RowMajor(to_row_major(&prob.phi)),
            d: match &prob.d {
                AnalysisOperator::Identity(_) => OperatorSpec::Named("identity".into()),
                AnalysisOperator::Matrix(d) => OperatorSpec::RowMajor(to_row_major(d)),
            },
            x0: prob.x0.iter().copied().collect(),
            seed,
        }
    }
}

pub fn parse_problem(text: &str) -> Result<(Problem, Option<u64>)> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: "problem file".into(),
        message: e.to_string(),
    })?;
    let seed = file.seed;
    Ok((file.into_problem()?, seed))
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    Ok(load_problem_with_seed(path)?.0)
}

pub fn load_problem_with_seed(path: &Path) -> Result<(Problem, Option<u64>)> {
    let text = fs::read_to_string(path)?;
    parse_problem(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        other => other,
    })
}

pub fn problem_to_json(prob: &Problem, seed: Option<u64>) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_problem(prob, seed)).expect("problem serializes") + "\n"
}

pub fn save_problem(prob: &Problem, seed: Option<u64>, path: &Path) -> Result<()> {
    fs::write(path, problem_to_json(prob, seed))?;
    Ok(())
}

/// `%.12g`-style rendering: 12 significant digits, trailing zeros dropped.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_number(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| Value::String(format_number(x)))
}

fn insert_cert(map: &mut Map<String, Value>, key: &str, c: &CertValue) {
    map.insert(key.into(), opt_number(c.value));
    map.insert(format!("{key}_status"), json!(c.status.as_str()));
    map.insert(format!("{key}_gap"), opt_number(c.value.map(|_| c.gap)));
}

pub fn report_to_json(r: &CertificateReport) -> String {
    let mut m = Map::new();
    m.insert("verdict".into(), json!(r.verdict.as_str()));
    m.insert("exact_mode".into(), json!(r.exact_mode));
    m.insert("consistency".into(), json!(r.consistency_ok));
    m.insert("consistency_residual".into(), opt_number(Some(r.consistency_residual)));
    insert_cert(&mut m, "rho", &r.rho);
    insert_cert(&mut m, "tau", &r.tau);
    insert_cert(&mut m, "zeta", &r.zeta);
    insert_cert(&mut m, "gamma", &r.gamma);
    insert_cert(&mut m, "ic", &r.ic);
    m.insert("ri".into(), json!(r.ri_holds));
    m.insert("c1".into(), opt_number(Some(r.c1)));
    m.insert("sri".into(), json!(r.sri_holds));
    m.insert("sharpness_constant".into(), opt_number(Some(r.sharpness_constant)));
    m.insert("lipschitz".into(), opt_number(Some(r.lipschitz)));
    m.insert("phi_pinv_norm".into(), opt_number(Some(r.phi_pinv_norm)));
    m.insert("active_groups".into(), json!(r.active_groups));
    m.insert("inactive_groups".into(), json!(r.inactive_groups));
    let t = &r.thresholds;
    for (k, v) in [
        ("threshold_tau", t.tau),
        ("threshold_rho_lo", t.rho_lo),
        ("threshold_rho_hi", t.rho_hi),
        ("threshold_gamma", t.gamma),
        ("threshold_zeta", t.zeta),
    ] {
        m.insert(k.into(), opt_number(Some(v)));
    }
    m.insert(
        "witness".into(),
        r.witness
            .as_ref()
            .map_or(Value::Null, |w| Value::Array(w.iter().map(|&x| json!(format_number(x))).collect())),
    );
    m.insert("diagnostics".into(), json!(r.diagnostics));
    serde_json::to_string_pretty(&Value::Object(m)).expect("report serializes") + "\n"
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn cell(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn rates_csv(fit: &RateFit) -> Result<String> {
    let mut w = csv_writer(Vec::new());
    w.write_record(["delta", "draw", "mode", "error", "bound", "iterations", "kkt_residual"])?;
    for r in &fit.rows {
        w.write_record([
            format_number(r.delta),
            r.draw.to_string(),
            r.mode.as_str().to_string(),
            format_number(r.error),
            cell(r.bound),
            r.iterations.to_string(),
            format_number(r.kkt_residual),
        ])?;
    }
    finish(w)
}

pub fn run_csv(run: &RecoveryRun) -> Result<String> {
    let mut w = csv_writer(Vec::new());
    w.write_record(["mode", "delta", "mu", "noise_seed", "error", "objective", "kkt_residual", "iterations", "converged"])?;
    w.write_record([
        run.mode.as_str().to_string(),
        format_number(run.delta),
        format_number(run.mu),
        run.noise_seed.map(|s| s.to_string()).unwrap_or_default(),
        format_number(run.error),
        cell(run.objective_trace.last().copied()),
        format_number(run.kkt_residual),
        run.iterations.to_string(),
        run.converged.to_string(),
    ])?;
    finish(w)
}

/// `verdict,count` for verdicts that occurred; header only when nothing did.
pub fn tally_csv(result: &PipelineResult) -> Result<String> {
    let mut w = csv_writer(Vec::new());
    w.write_record(["verdict", "count"])?;
    for v in Verdict::ALL {
        let c = result.count(v);
        if c > 0 {
            w.write_record([v.as_str().to_string(), c.to_string()])?;
        }
    }
    finish(w)
}

pub fn trials_csv(result: &PipelineResult) -> Result<String> {
    let mut w = csv_writer(Vec::new());
    w.write_record([
        "trial", "seed", "verdict", "tau", "rho", "gamma", "zeta", "ic", "ri", "sri", "optimal", "solver_limited", "error",
    ])?;
    for r in &result.rows {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.verdict.map(|v| v.as_str().to_string()).unwrap_or_default(),
            cell(r.tau),
            cell(r.rho),
            cell(r.gamma),
            cell(r.zeta),
            cell(r.ic),
            r.ri.to_string(),
            r.sri.to_string(),
            r.optimal.to_string(),
            r.solver_limited.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRONG_EXAMPLE: &str = r#"{
        "schema_version": 1, "m": 2, "n": 3, "p": 3,
        "groups": [[0, 1], [2]],
        "phi": [1, 1, 0, 1, 0, -1],
        "d": "identity",
        "x0": [0, 1, 0]
    }"#;

    #[test]
    fn strong_example_file_parses() {
        let (p, seed) = parse_problem(STRONG_EXAMPLE).unwrap();
        assert_eq!((p.m(), p.n(), p.p()), (2, 3, 3));
        assert!(p.d.is_identity());
        assert_eq!(p.groups.groups(), &[vec![0, 1], vec![2]]);
        assert_eq!(seed, None);
    }

    #[test]
    fn bad_files_are_rejected() {
        let bad_groups = STRONG_EXAMPLE.replace("[[0, 1], [2]]", "[[0, 1]]");
        assert!(parse_problem(&bad_groups).is_err());
        let bad_len = STRONG_EXAMPLE.replace("[1, 1, 0, 1, 0, -1]", "[1, 1, 0, 1, 0]");
        assert!(matches!(parse_problem(&bad_len), Err(Error::DimensionMismatch { .. })));
        let bad_json = STRONG_EXAMPLE.replace("\"x0\"", "\"x1\"");
        assert!(matches!(parse_problem(&bad_json), Err(Error::Parse { .. })));
        let bad_version = STRONG_EXAMPLE.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(parse_problem(&bad_version).is_err());
    }

    #[test]
    fn generator_spec_builds_gaussian_matrix() {
        let text = STRONG_EXAMPLE.replace("[1, 1, 0, 1, 0, -1]", r#"{"generator": "gaussian", "seed": 4}"#);
        let (p, _) = parse_problem(&text).unwrap();
        assert_eq!(p.phi, gaussian_matrix(2, 3, 4));
    }

    #[test]
    fn numbers_have_twelve_significant_digits() {
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1e-7), "1e-07");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e+14");
        assert_eq!(format_number(0.577350269189626), "0.57735026919");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(0.0), "0");
    }

    #[test]
    fn empty_tally_is_header_only() {
        assert_eq!(tally_csv(&PipelineResult::default()).unwrap(), "verdict,count\n");
    }
}
