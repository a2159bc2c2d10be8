//! Plain-text artifact writers: headed CSV tables and `key=value` files.
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so output is
//! locale-free and reproducible to the byte. Files are written to a temporary
//! sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Renders columns of equal length under a header line.
pub fn format_csv(header: &[&str], columns: &[&[f64]]) -> Result<String> {
    let rows = columns.first().map_or(0, |c| c.len());
    if header.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::invalid("CSV header and columns disagree"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_number(&mut out, col[r]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Shortest round-trip representation, in exponent form outside `[1e-4, 1e15)`.
fn write_number(out: &mut String, x: f64) {
    let a = x.abs();
    let res = if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        write!(out, "{x:e}")
    } else {
        write!(out, "{x}")
    };
    res.expect("writing to a String cannot fail");
}

pub fn write_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    write_atomic(path, &format_csv(header, columns)?)
}

/// Parses a headed numeric CSV into its header and columns.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty CSV"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::invalid(format!(
                "CSV row {} has {} fields, header has {}",
                row + 1,
                fields.len(),
                header.len()
            )));
        }
        for (col, f) in columns.iter_mut().zip(fields) {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("CSV row {}: cannot parse `{f}`", row + 1)))?;
            col.push(v);
        }
    }
    Ok((header, columns))
}

pub fn format_key_values(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        writeln!(out, "{k}={v}").expect("writing to a String cannot fail");
    }
    out
}
