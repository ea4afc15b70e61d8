//! Number formatting and file writers shared by every subcommand.

use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Decimal with 12 significant digits, scientific beyond `1e±9`, trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if !(1e-9..1e9).contains(&a) {
        let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
        let (mant, exp) = s.split_once('e').expect("exponent");
        return format!("{}e{exp}", trim_zeros(mant));
    }
    let mag = a.log10().floor() as i64;
    let decimals = (SIGNIFICANT_DIGITS as i64 - 1 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit; one extra decimal is harmless
    trim_zeros(&s).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to what [`fmt_num`] prints, for JSON records.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().unwrap_or(x)
    } else {
        x
    }
}

/// Comma-separated, header row, LF line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(std::io::Error::other(e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Io(e.into()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
