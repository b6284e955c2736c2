use std::fmt::Write as _;
use std::path::Path;

use super::{Branch, Junction};
use crate::error::{Error, Result};

pub const JUNCTIONS_HEADER: &str = "geosay-junctions v1";

/// Renders junctions in the line format
/// `x y rho n theta_1 s_1 ... theta_n s_n`, six decimals per field.
pub fn format_junctions(junctions: &[Junction]) -> Result<String> {
    let mut out = String::with_capacity(32 + junctions.len() * 64);
    out.push_str(JUNCTIONS_HEADER);
    out.push('\n');
    for j in junctions {
        j.check()?;
        write!(out, "{:.6} {:.6} {:.6} {}", j.x, j.y, j.rho, j.branches.len()).unwrap();
        for b in &j.branches {
            write!(out, " {:.6} {:.6}", b.theta, b.length).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_junctions(junctions: &[Junction], path: &Path) -> Result<()> {
    let text = format_junctions(junctions)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_junctions(path: &Path) -> Result<Vec<Junction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_junctions(&text, path)
}

/// Parses the junction text format. `origin` only labels error messages.
pub fn parse_junctions(text: &str, origin: &Path) -> Result<Vec<Junction>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == JUNCTIONS_HEADER => {}
        _ => return Err(Error::parse(origin, 1, format!("expected header `{JUNCTIONS_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let j = parse_line(line).map_err(|reason| Error::parse(origin, lineno, reason))?;
        j.check().map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("{}:{lineno}: {msg}", origin.display())),
            other => other,
        })?;
        out.push(j);
    }
    Ok(out)
}

fn parse_line(line: &str) -> std::result::Result<Junction, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(format!("expected at least 4 fields, got {}", fields.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| format!("field {} (`{}`) is not a number", i + 1, fields[i]))
    };
    let n: usize = fields[3]
        .parse()
        .map_err(|_| format!("branch count `{}` is not an integer", fields[3]))?;
    if fields.len() != 4 + 2 * n {
        return Err(format!("{n} branches need {} fields, got {}", 4 + 2 * n, fields.len()));
    }
    let branches = (0..n)
        .map(|i| Ok(Branch::new(num(4 + 2 * i)?, num(5 + 2 * i)?)))
        .collect::<std::result::Result<Vec<_>, String>>()?;
    Ok(Junction {
        x: num(0)?,
        y: num(1)?,
        rho: num(2)?,
        branches,
    })
}
