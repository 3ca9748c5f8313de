//! JSON interchange formats.
//!
//! The channel format is an object with `dim` and row-major `choi_re` /
//! `choi_im` nested arrays; writers emit 17 significant digits. Natural
//! parameters reuse the same matrix shape. Count files carry the design name,
//! per-setting trial count, the count vector and the generating seed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bingham::NaturalParameter;
use crate::channels::ChoiMatrix;
use crate::error::Error;
use crate::linalg::CMatrix;
use crate::tomography::{design_pauli4, design_pauli6, CountData, ExperimentDesign};
use crate::Result;

/// Full-precision float formatting (17 significant digits).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn matrix_json(dim: usize, entries: &CMatrix) -> String {
    let side = dim * dim;
    let mut out = String::new();
    out.push_str(&format!("{{\n  \"dim\": {dim},\n  \"choi_re\": ["));
    for part in 0..2 {
        for row in 0..side {
            out.push_str("\n    [");
            for col in 0..side {
                if col > 0 {
                    out.push_str(", ");
                }
                let v = entries[(row, col)];
                out.push_str(&format_float(if part == 0 { v.re } else { v.im }));
            }
            out.push(']');
            if row + 1 < side {
                out.push(',');
            }
        }
        if part == 0 {
            out.push_str("\n  ],\n  \"choi_im\": [");
        } else {
            out.push_str("\n  ]\n}");
        }
    }
    out.push('\n');
    out
}

/// Serialize a channel in the shared channel-JSON format.
pub fn channel_to_json(choi: &ChoiMatrix) -> String {
    matrix_json(choi.dim(), choi.entries())
}

/// Serialize a natural parameter in the same matrix shape.
pub fn parameter_to_json(theta: &NaturalParameter) -> String {
    matrix_json(theta.dim(), theta.entries())
}

fn parse_matrix_value(value: &serde_json::Value) -> Result<(usize, CMatrix)> {
    let dim = value
        .get("dim")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::InvalidArgument("missing integer field 'dim'".into()))?
        as usize;
    let side = dim * dim;
    let read = |key: &str| -> Result<Vec<Vec<f64>>> {
        let rows = value
            .get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::InvalidArgument(format!("missing array field '{key}'")))?;
        if rows.len() != side {
            return Err(Error::DimensionMismatch {
                expected: side,
                got: rows.len(),
            });
        }
        rows.iter()
            .map(|row| {
                let row = row
                    .as_array()
                    .ok_or_else(|| Error::InvalidArgument(format!("'{key}' rows must be arrays")))?;
                if row.len() != side {
                    return Err(Error::DimensionMismatch {
                        expected: side,
                        got: row.len(),
                    });
                }
                row.iter()
                    .map(|x| {
                        x.as_f64()
                            .ok_or_else(|| Error::InvalidArgument("non-numeric entry".into()))
                    })
                    .collect()
            })
            .collect()
    };
    let re = read("choi_re")?;
    let im = read("choi_im")?;
    let entries = CMatrix::from_fn(side, side, |r, c| Complex64::new(re[r][c], im[r][c]));
    Ok((dim, entries))
}

/// Parse and validate a channel from channel JSON.
pub fn channel_from_json(text: &str) -> Result<ChoiMatrix> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let (_, entries) = parse_matrix_value(&value)?;
    ChoiMatrix::new(entries)
}

/// Parse a natural parameter from the channel-JSON matrix shape.
pub fn parameter_from_json(text: &str) -> Result<NaturalParameter> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let (_, entries) = parse_matrix_value(&value)?;
    NaturalParameter::new(entries)
}

/// Count-file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountsFile {
    pub design: String,
    pub n_per_setting: u64,
    pub x: Vec<u64>,
    pub seed: u64,
}

/// Serialize a counts file.
pub fn counts_to_json(counts: &CountsFile) -> String {
    serde_json::to_string_pretty(counts).expect("serializable") + "\n"
}

/// Parse a counts file.
pub fn counts_from_json(text: &str) -> Result<CountsFile> {
    Ok(serde_json::from_str(text)?)
}

/// Resolve a named design.
pub fn design_by_name(name: &str) -> Result<ExperimentDesign> {
    match name {
        "pauli4" => Ok(design_pauli4()),
        "pauli6" => Ok(design_pauli6()),
        other => Err(Error::InvalidArgument(format!(
            "unknown design '{other}' (expected pauli4 or pauli6)"
        ))),
    }
}

/// Turn a counts file into the design and count data it describes.
pub fn counts_file_to_data(file: &CountsFile) -> Result<(ExperimentDesign, CountData)> {
    let design = design_by_name(&file.design)?;
    if file.x.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            got: file.x.len(),
        });
    }
    let data = CountData::new(file.x.clone(), vec![file.n_per_setting; file.x.len()])?;
    Ok((design, data))
}
