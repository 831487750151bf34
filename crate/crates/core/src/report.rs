//! CSV and markdown rendering of [`ResourceReport`] rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::ResourceReport;

pub const CSV_HEADER: &str = "config,memory_bits,flop_equivalents,sparsity,error_rate";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// `value` with `digits` significant digits, in the style of C's `%g`.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let digits = digits.max(1);
    // Round first so that e.g. 999999.7 picks the exponent of 1e6.
    let sci = format!("{:.*e}", digits - 1, value);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sig(v: f64) -> String {
    format_significant(v, 6)
}

pub fn render_csv(rows: &[ResourceReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.config_label),
            r.memory_bits,
            sig(r.flop_equivalents),
            sig(r.sparsity),
            sig(r.error_rate)
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_markdown(rows: &[ResourceReport]) -> String {
    let mut out = String::new();
    out.push_str("| Config | Memory (bits) | Memory (Mbit) | FLOP-equivalents | Sparsity | Error rate |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.config_label.replace('|', "\\|"),
            r.memory_bits,
            sig(r.memory_bits as f64 / 1e6),
            sig(r.flop_equivalents),
            sig(r.sparsity),
            sig(r.error_rate)
        );
    }
    out
}

pub fn render_report(rows: &[ResourceReport], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("report needs at least one row"));
    }
    Ok(match format {
        ReportFormat::Csv => render_csv(rows),
        ReportFormat::Markdown => render_markdown(rows),
    })
}

pub fn emit_report(rows: &[ResourceReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_report(rows, format)?)?;
    Ok(())
}
