//! Shared helpers for the plain-text file formats.

use std::fmt::Write as _;

/// 17 significant digits: enough to round-trip any `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn join_f64(values: &[f64], sep: &str) -> String {
    let mut out = String::with_capacity(values.len() * 24);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        let _ = write!(out, "{v:.16e}");
    }
    out
}

pub(crate) fn parse_f64s<'a>(
    fields: impl Iterator<Item = &'a str>,
) -> std::result::Result<Vec<f64>, String> {
    fields
        .map(|f| f.trim().parse::<f64>().map_err(|e| format!("bad number `{f}`: {e}")))
        .collect()
}
