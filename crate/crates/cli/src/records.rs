//! Output records and writers.
//!
//! CSV headers and JSON keys are part of the interface. JSON documents carry
//! a `schema` string that changes whenever a key does.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use polaron_core::{Enclosure, Error};
use serde::Serialize;

use crate::config::Format;
use crate::units::Scaled;
use crate::Failure;

pub const ENCLOSURE_SCHEMA: &str = "polaron.enclosure/1";
pub const VERIFY_SCHEMA: &str = "polaron.verify/1";
pub const SPECTRUM_SCHEMA: &str = "polaron.spectrum/1";

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure::io(format!("writing output: {e}"))
}

pub fn write_csv<R: Serialize>(out: &mut dyn Write, rows: &[R]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_json<V: Serialize>(out: &mut dyn Write, value: &V) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io_err)?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Writes rows as CSV, or as JSON via `json` when that format is selected.
pub fn emit<R: Serialize, V: Serialize>(
    format: Format,
    path: Option<&Path>,
    rows: &[R],
    json: impl FnOnce() -> V,
) -> Result<(), Failure> {
    let mut out = open(path)?;
    match format {
        Format::Csv => write_csv(&mut *out, rows),
        Format::Json => write_json(&mut *out, &json()),
    }
}

/// One CSV line per grid point. Everything after `mu_tilde` is empty when
/// the point failed; the error goes to stderr and into the JSON record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnclosureRow {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E_B")]
    pub e_b: f64,
    pub mu: f64,
    pub mu_tilde: f64,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[serde(rename = "E0")]
    pub e0: Option<f64>,
    pub e_p: Option<f64>,
    pub lambda_shift: Option<f64>,
    pub exact_shift: Option<f64>,
    pub feasible: Option<bool>,
    pub theorem_ratio: Option<f64>,
    pub polaron_ratio: Option<f64>,
}

impl EnclosureRow {
    pub fn new(l: f64, e_b: f64, mu: f64, enc: Option<&Enclosure>) -> Self {
        Self {
            l,
            e_b,
            mu,
            mu_tilde: mu / e_b.abs(),
            n: enc.map(|e| e.n_fermions),
            e0: enc.map(|e| e.e_free),
            e_p: enc.map(|e| e.upper_shift),
            lambda_shift: enc.map(|e| e.lower_shift),
            exact_shift: enc.map(|e| e.exact_shift),
            feasible: enc.map(|e| e.feasible),
            theorem_ratio: enc.and_then(|e| e.theorem_ratio),
            polaron_ratio: enc.and_then(|e| e.polaron_ratio),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub exit_code: u8,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self {
            exit_code: crate::exit_code(e),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnclosureRecord {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E_B")]
    pub e_b: f64,
    pub mu: f64,
    pub enclosure: Option<Enclosure>,
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Constants {
    pub c_theorem: f64,
    pub c_polaron: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnclosureDoc {
    pub schema: &'static str,
    pub records: Vec<EnclosureRecord>,
    pub constants: Option<Constants>,
}

/// Physical-unit record of one point's outcome.
pub fn enclosure_record(l: f64, e_b: f64, mu: f64, scaled: Option<&Scaled>, res: &Result<Enclosure, Error>) -> EnclosureRecord {
    let (enclosure, error) = match (res, scaled) {
        (Ok(e), Some(s)) => (Some(s.enclosure(e)), None),
        (Ok(e), None) => (Some(e.clone()), None),
        (Err(err), _) => (None, Some(ErrorInfo::from(err))),
    };
    EnclosureRecord {
        l,
        e_b,
        mu,
        enclosure,
        error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellRow {
    pub n: u64,
    pub energy: f64,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct GmuRow {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E_B")]
    pub e_b: f64,
    pub mu: f64,
    pub tau: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "G_lower")]
    pub g_lower: f64,
    #[serde(rename = "G_upper")]
    pub g_upper: f64,
    pub log_law_lhs: Option<f64>,
    pub log_law_rhs: Option<f64>,
    pub log_law_holds: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolaronRow {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E_B")]
    pub e_b: f64,
    pub mu: f64,
    pub mu_tilde: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub e_p: f64,
    pub e_p_residual: f64,
    pub e_p_lo: f64,
    pub e_p_hi: f64,
    pub asymptote: Option<f64>,
    pub r_bar: f64,
    pub gap_slack: f64,
    pub feasible: bool,
    pub lambda_shift: Option<f64>,
    pub lambda_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenRow {
    pub index: usize,
    pub eigenvalue: f64,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumDoc {
    pub schema: &'static str,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "E_B")]
    pub e_b: f64,
    pub mu: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub e_total: f64,
    pub e_free: f64,
    pub shift_total: f64,
    pub shift_error: f64,
    pub naive_shift: f64,
    pub cancellation: f64,
    pub interlacing_ok: bool,
    pub eigenvalues: Vec<EigenRow>,
    pub gap_roots: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub suite: &'static str,
    pub case: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub slack: Option<f64>,
    pub uncertainty: Option<f64>,
    pub holds: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyDoc {
    pub schema: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub records: Vec<VerifyRow>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_row_leaves_fields_empty() {
        let row = EnclosureRow::new(1.0, -2.0, 3.0, None);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "L,E_B,mu,mu_tilde,N,E0,e_p,lambda_shift,exact_shift,feasible,theorem_ratio,polaron_ratio\n1.0,-2.0,3.0,1.5,,,,,,,,\n"
        );
    }
}
