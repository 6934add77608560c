//! Plain-text control tables.
//!
//! ```text
//! # meanfield control v1
//! dims 1 1 1            # d m k
//! pieces 2
//! feedback piecewise_constant   # zero | piecewise_constant | affine
//! u 0 0.5               # piece, then m values (piecewise_constant)
//! u 1 0.25
//! offset 0 0.1          # affine: piece, m offsets
//! gain 0 0.2            # affine: piece, m × d gains (row-major)
//! v 0 0.1               # piece, then k values of the common control
//! v 1 0
//! radius 3              # optional admissibility radius
//! ```
//!
//! Blank lines and text after `#` are ignored. Pieces missing from the table
//! are zero. Values are written in shortest round-trip form, so a table
//! survives a write and read unchanged.

use std::fmt::Write as _;

use meanfield_core::control::{ControlPolicy, Feedback};
use meanfield_core::model::ModelDims;

use crate::output::fmt_f64;

pub const HEADER: &str = "# meanfield control v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("control file line {line}: {message}")]
pub struct ControlFileError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ControlFileError {
    ControlFileError {
        line,
        message: message.into(),
    }
}

/// Serializes a policy. Custom feedback has no table form.
pub fn write_control(policy: &ControlPolicy) -> Result<String, ControlFileError> {
    let dims = policy.dims();
    let pieces = policy.pieces();
    let mut s = String::new();
    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "dims {} {} {}", dims.d, dims.m, dims.k).unwrap();
    writeln!(s, "pieces {pieces}").unwrap();
    match policy.feedback() {
        Feedback::Zero => writeln!(s, "feedback zero").unwrap(),
        Feedback::PiecewiseConstant(table) => {
            writeln!(s, "feedback piecewise_constant").unwrap();
            for (p, chunk) in table.chunks(dims.m).enumerate() {
                writeln!(s, "u {p} {}", join(chunk)).unwrap();
            }
        }
        Feedback::Affine { offsets, gains } => {
            writeln!(s, "feedback affine").unwrap();
            for p in 0..pieces {
                writeln!(s, "offset {p} {}", join(&offsets[p * dims.m..(p + 1) * dims.m])).unwrap();
                let g = dims.m * dims.d;
                writeln!(s, "gain {p} {}", join(&gains[p * g..(p + 1) * g])).unwrap();
            }
        }
        Feedback::Custom(_) => return Err(err(0, "custom feedback cannot be written as a table")),
    }
    for (p, chunk) in policy.common().chunks(dims.k).enumerate() {
        writeln!(s, "v {p} {}", join(chunk)).unwrap();
    }
    if let Some(r) = policy.radius() {
        writeln!(s, "radius {}", fmt_f64(r)).unwrap();
    }
    Ok(s)
}

/// Parses a control table; `expected` is checked against the `dims` line.
pub fn read_control(text: &str, expected: Option<ModelDims>) -> Result<ControlPolicy, ControlFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, first)) if first.trim() == HEADER => {}
        _ => return Err(err(1, format!("expected header `{HEADER}`"))),
    }
    let mut dims: Option<ModelDims> = None;
    let mut pieces: Option<usize> = None;
    let mut feedback: Option<String> = None;
    let mut radius = None;
    let mut u = Vec::new();
    let mut offsets = Vec::new();
    let mut gains = Vec::new();
    let mut v = Vec::new();
    for (no, raw) in lines {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let key = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        let ints = |rest: &[&str]| -> Result<Vec<usize>, ControlFileError> {
            rest.iter()
                .map(|w| w.parse::<usize>().map_err(|_| err(no, format!("`{w}` is not a count"))))
                .collect()
        };
        let floats = |rest: &[&str]| -> Result<Vec<f64>, ControlFileError> {
            rest.iter()
                .map(|w| match w.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(err(no, format!("`{w}` is not a finite number"))),
                })
                .collect()
        };
        match key {
            "dims" => {
                let v = ints(&rest)?;
                if v.len() != 3 {
                    return Err(err(no, "dims needs d m k"));
                }
                dims = Some(ModelDims::new(v[0], v[1], v[2]).map_err(|e| err(no, e.to_string()))?);
            }
            "pieces" => {
                let v = ints(&rest)?;
                if v.len() != 1 || v[0] == 0 {
                    return Err(err(no, "pieces needs one positive count"));
                }
                pieces = Some(v[0]);
            }
            "feedback" => {
                if rest.len() != 1 || !["zero", "piecewise_constant", "affine"].contains(&rest[0]) {
                    return Err(err(no, "feedback must be zero, piecewise_constant or affine"));
                }
                feedback = Some(rest[0].to_string());
            }
            "radius" => {
                let v = floats(&rest)?;
                if v.len() != 1 || v[0] <= 0.0 {
                    return Err(err(no, "radius needs one positive value"));
                }
                radius = Some(v[0]);
            }
            "u" | "offset" | "gain" | "v" => {
                let Some((piece, values)) = rest.split_first() else {
                    return Err(err(no, "missing piece index"));
                };
                let piece = ints(&[piece])?[0];
                let values = floats(values)?;
                let target = match key {
                    "u" => &mut u,
                    "offset" => &mut offsets,
                    "gain" => &mut gains,
                    _ => &mut v,
                };
                if target.iter().any(|(p, _, _)| *p == piece) {
                    return Err(err(no, format!("duplicate `{key}` row for piece {piece}")));
                }
                target.push((piece, values, no));
            }
            other => return Err(err(no, format!("unknown key `{other}`"))),
        }
    }
    let dims = dims.ok_or_else(|| err(0, "missing `dims`"))?;
    if let Some(e) = expected {
        if e != dims {
            return Err(err(0, format!("control dims {dims:?} do not match the model {e:?}")));
        }
    }
    let pieces = pieces.ok_or_else(|| err(0, "missing `pieces`"))?;
    let feedback_kind = feedback.ok_or_else(|| err(0, "missing `feedback`"))?;
    let assemble = |rows: &[(usize, Vec<f64>, usize)], width: usize, key: &str| -> Result<Vec<f64>, ControlFileError> {
        let mut out = vec![0.0; pieces * width];
        for (p, values, no) in rows {
            if *p >= pieces {
                return Err(err(*no, format!("piece {p} out of range")));
            }
            if values.len() != width {
                return Err(err(*no, format!("`{key}` needs {width} values")));
            }
            out[p * width..(p + 1) * width].copy_from_slice(values);
        }
        Ok(out)
    };
    let stray = |rows: &[(usize, Vec<f64>, usize)], key: &str| match rows.first() {
        Some((_, _, no)) => Err(err(*no, format!("`{key}` rows do not fit feedback {feedback_kind}"))),
        None => Ok(()),
    };
    let feedback = match feedback_kind.as_str() {
        "zero" => {
            stray(&u, "u")?;
            stray(&offsets, "offset")?;
            stray(&gains, "gain")?;
            Feedback::Zero
        }
        "piecewise_constant" => {
            stray(&offsets, "offset")?;
            stray(&gains, "gain")?;
            Feedback::PiecewiseConstant(assemble(&u, dims.m, "u")?)
        }
        _ => {
            stray(&u, "u")?;
            Feedback::Affine {
                offsets: assemble(&offsets, dims.m, "offset")?,
                gains: assemble(&gains, dims.m * dims.d, "gain")?,
            }
        }
    };
    let common = assemble(&v, dims.k, "v")?;
    let mut policy = ControlPolicy::new(dims, pieces, feedback, common).map_err(|e| err(0, e.to_string()))?;
    if let Some(r) = radius {
        policy = policy.with_radius(r);
    }
    Ok(policy)
}
