//! JSON model file schema.
//!
//! ```json
//! {
//!   "port_count": 1,
//!   "omega_max": 10.0,
//!   "direct_term": [[0.0]],
//!   "poles": [{"re": -1.0, "im": 0.0}, {"re": -0.5, "im": 3.0, "is_pair": true}],
//!   "residues": [[[{"re": 1.0, "im": 0.0}]], [[{"re": 0.2, "im": -0.1}]]]
//! }
//! ```
//!
//! Frequencies are rad/s. A conjugate pair is stored once through its pole
//! with positive imaginary part and `"is_pair": true`; its partner and the
//! conjugate residue are implicit. `residues[n]` is the `P x P` residue of
//! `poles[n]`, row-major.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PoleResidueModel, PoleTerm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexEntry {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleEntry {
    pub re: f64,
    pub im: f64,
    #[serde(default)]
    pub is_pair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub port_count: usize,
    pub omega_max: f64,
    pub direct_term: Vec<Vec<f64>>,
    pub poles: Vec<PoleEntry>,
    pub residues: Vec<Vec<Vec<ComplexEntry>>>,
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn finite(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(schema(field, "NaN or infinite value"))
    }
}

impl ModelFile {
    /// Converts to a validated model. With `hz`, poles, residues and
    /// `omega_max` are read as Hz-based quantities and scaled by 2 pi.
    pub fn into_model(self, hz: bool) -> Result<PoleResidueModel> {
        let p = self.port_count;
        let scale = if hz { 2.0 * std::f64::consts::PI } else { 1.0 };
        if self.direct_term.len() != p {
            return Err(schema(
                "direct_term",
                format!("expected {p} rows, found {}", self.direct_term.len()),
            ));
        }
        let mut direct = DMatrix::zeros(p, p);
        for (i, row) in self.direct_term.iter().enumerate() {
            if row.len() != p {
                return Err(schema(
                    format!("direct_term[{i}]"),
                    format!("expected {p} columns, found {}", row.len()),
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                direct[(i, j)] = finite(&format!("direct_term[{i}][{j}]"), v)?;
            }
        }
        if self.residues.len() != self.poles.len() {
            return Err(schema(
                "residues",
                format!(
                    "{} residue matrices for {} poles",
                    self.residues.len(),
                    self.poles.len()
                ),
            ));
        }
        let mut terms = Vec::with_capacity(self.poles.len());
        for (n, (pole, res)) in self.poles.iter().zip(&self.residues).enumerate() {
            let re = finite(&format!("poles[{n}].re"), pole.re)?;
            let im = finite(&format!("poles[{n}].im"), pole.im)?;
            if res.len() != p {
                return Err(schema(
                    format!("residues[{n}]"),
                    format!("expected {p} rows, found {}", res.len()),
                ));
            }
            let mut r = DMatrix::zeros(p, p);
            for (i, row) in res.iter().enumerate() {
                if row.len() != p {
                    return Err(schema(
                        format!("residues[{n}][{i}]"),
                        format!("expected {p} columns, found {}", row.len()),
                    ));
                }
                for (j, c) in row.iter().enumerate() {
                    let field = format!("residues[{n}][{i}][{j}]");
                    r[(i, j)] = Complex64::new(finite(&field, c.re)?, finite(&field, c.im)?) * scale;
                }
            }
            terms.push(PoleTerm {
                pole: Complex64::new(re, im) * scale,
                residue: r,
                is_pair: pole.is_pair,
            });
        }
        let omega_max = finite("omega_max", self.omega_max)? * scale;
        PoleResidueModel::new(p, omega_max, direct, terms)
    }

    pub fn from_model(model: &PoleResidueModel) -> Self {
        let p = model.port_count;
        Self {
            port_count: p,
            omega_max: model.omega_max,
            direct_term: (0..p)
                .map(|i| (0..p).map(|j| model.direct_term[(i, j)]).collect())
                .collect(),
            poles: model
                .terms
                .iter()
                .map(|t| PoleEntry {
                    re: t.pole.re,
                    im: t.pole.im,
                    is_pair: t.is_pair,
                })
                .collect(),
            residues: model
                .terms
                .iter()
                .map(|t| {
                    (0..p)
                        .map(|i| {
                            (0..p)
                                .map(|j| {
                                    let r = t.residue[(i, j)];
                                    ComplexEntry { re: r.re, im: r.im }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Byte offset of a 1-based line / column position as reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_model(text: &str, hz: bool) -> Result<PoleResidueModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // drop serde_json's own " at line L column C" suffix
        let message = match message.rfind(" at line ") {
            Some(cut) => message[..cut].to_string(),
            None => message,
        };
        Error::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            line: e.line(),
            column: e.column(),
            message,
        }
    })?;
    file.into_model(hz)
}

pub fn load_model(path: impl AsRef<Path>, hz: bool) -> Result<PoleResidueModel> {
    parse_model(&std::fs::read_to_string(path)?, hz)
}

pub fn model_to_json(model: &PoleResidueModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes")
}
