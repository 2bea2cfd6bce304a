//! Deterministic report emission.
//!
//! JSON output keeps struct declaration order for fields and prints every
//! float with 17 significant digits in scientific form, so identical inputs
//! produce byte-identical files and parsing recovers the exact bits. CSV
//! tables use the same float formatting with empty cells for absent values.

use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::Result;
use crate::solver::SweepResult;
use crate::verify::RefinementStudy;

/// JSON formatter printing floats as `d.dddddddddddddddde±x` (17 significant
/// digits, enough to round-trip any f64).
struct SciFloatFormatter;

impl Formatter for SciFloatFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes any report value deterministically.
pub fn json_to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFloatFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| crate::Error::Parse(format!("serialization failed: {e}")))?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = json_to_string(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

/// Convergence table of an ε-sweep:
/// `eps,energy,residual_max,iters,diff_lp1,diff_grad_1..diff_grad_N`.
pub fn sweep_csv(sweep: &SweepResult) -> String {
    let dim = sweep
        .rows
        .first()
        .and_then(|r| r.diff_grad.as_ref().map(|g| g.len()))
        .unwrap_or_else(|| {
            sweep
                .rows
                .iter()
                .find_map(|r| r.diff_grad.as_ref().map(|g| g.len()))
                .unwrap_or(0)
        });
    let mut out = String::from("eps,energy,residual_max,iters,diff_lp1");
    for i in 1..=dim {
        out.push_str(&format!(",diff_grad_{i}"));
    }
    out.push('\n');
    for row in &sweep.rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{}",
            row.eps, row.energy, row.residual_max, row.iterations
        ));
        out.push(',');
        out.push_str(&fmt_cell(row.diff_lp1));
        for i in 0..dim {
            out.push(',');
            out.push_str(&fmt_cell(row.diff_grad.as_ref().map(|g| g[i])));
        }
        out.push('\n');
    }
    out
}

/// Plot columns `(h, constant)` for one refinement study.
pub fn study_plot_csv(study: &RefinementStudy) -> String {
    let mut out = String::from("h,constant\n");
    for level in &study.levels {
        out.push_str(&format!(
            "{:.16e},{:.16e}\n",
            level.h, level.report.constant
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn floats_carry_17_digits_and_round_trip() {
        let mut map = BTreeMap::new();
        map.insert("x", 0.1f64);
        map.insert("y", 1.0 / 3.0);
        let s = json_to_string(&map).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let back: BTreeMap<String, f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"], 0.1);
        assert_eq!(back["y"], 1.0 / 3.0);
    }

    #[test]
    fn serialization_is_reproducible() {
        #[derive(Serialize)]
        struct Row {
            a: f64,
            b: Vec<f64>,
            n: usize,
        }
        let row = Row {
            a: std::f64::consts::PI,
            b: vec![1e-17, 2.5, f64::MIN_POSITIVE],
            n: 7,
        };
        assert_eq!(json_to_string(&row).unwrap(), json_to_string(&row).unwrap());
    }
}
