//! Append-only results table: tab-separated rows under a schema-version
//! header. Re-evaluation appends; nothing is ever rewritten in place.

use crate::error::{io_at, CliError, Result};
use gridtune_core::reg::Method;
use std::io::Write;
use std::path::Path;

pub const SCHEMA_LINE: &str = "# schema=1";
const COLUMNS: &str = "# method\tgamma\tbeta\tseed\tmig\tmodularity\tsap\trecon_acc\tldr";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub gamma: f64,
    pub beta: f64,
    pub seed: u64,
    pub mig: f64,
    pub modularity: f64,
    pub sap: f64,
    pub recon_acc: f64,
    pub ldr: f64,
}

impl ResultRow {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.method.name(),
            self.gamma,
            self.beta,
            self.seed,
            self.mig,
            self.modularity,
            self.sap,
            self.recon_acc,
            self.ldr
        )
    }
}

pub fn append_row(path: &Path, row: &ResultRow) -> Result<()> {
    let fresh = !path.exists();
    if !fresh {
        // Never append to a table with a different schema.
        let head = std::fs::read_to_string(path).map_err(io_at(path))?;
        match head.lines().next() {
            Some(SCHEMA_LINE) => {}
            _ => return Err(CliError::format(path, "unknown results schema")),
        }
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_at(path))?;
    let mut text = String::new();
    if fresh {
        text.push_str(SCHEMA_LINE);
        text.push('\n');
        text.push_str(COLUMNS);
        text.push('\n');
    }
    text.push_str(&row.to_line());
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(io_at(path))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "results table {} (run eval first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    if text.lines().next() != Some(SCHEMA_LINE) {
        return Err(CliError::format(path, "unknown results schema"));
    }
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        rows.push(parse_row(line).ok_or_else(|| {
            CliError::format(path, format!("malformed row at line {}", i + 1))
        })?);
    }
    Ok(rows)
}

fn parse_row(line: &str) -> Option<ResultRow> {
    let mut it = line.split('\t');
    let method = Method::parse(it.next()?)?;
    let mut num = || it.next()?.parse::<f64>().ok();
    let gamma = num()?;
    let beta = num()?;
    let seed = num()? as u64;
    Some(ResultRow {
        method,
        gamma,
        beta,
        seed,
        mig: num()?,
        modularity: num()?,
        sap: num()?,
        recon_acc: num()?,
        ldr: num()?,
    })
}

/// Latest row per (method, γ, seed); later appends shadow earlier ones.
pub fn latest_rows(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut out: Vec<ResultRow> = Vec::new();
    for row in rows {
        let key = (row.method, row.gamma.to_bits(), row.seed);
        match out
            .iter_mut()
            .find(|r| (r.method, r.gamma.to_bits(), r.seed) == key)
        {
            Some(slot) => *slot = row.clone(),
            None => out.push(row.clone()),
        }
    }
    out
}
