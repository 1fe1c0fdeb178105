//! Line-delimited training log: one `key=value` record per epoch, written
//! append-only so resumed runs extend the same file.

use crate::error::{io_at, Result};
use gridtune_core::train::EpochStats;
use std::io::Write;
use std::path::Path;

pub fn format_line(s: &EpochStats) -> String {
    format!(
        "epoch={} total={:.6} recon={:.6} kl={:.6} reg={:.6} val_acc={:.6}",
        s.epoch, s.total, s.recon, s.kl, s.reg, s.val_acc
    )
}

pub fn append_line(path: &Path, s: &EpochStats) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_at(path))?;
    writeln!(f, "{}", format_line(s)).map_err(io_at(path))
}

/// Parses one log line back into its numeric fields (`None` if malformed).
pub fn parse_line(line: &str) -> Option<EpochStats> {
    let mut epoch = None;
    let mut vals = [None::<f64>; 5];
    for piece in line.split_whitespace() {
        let (key, val) = piece.split_once('=')?;
        match key {
            "epoch" => epoch = val.parse::<u32>().ok(),
            "total" => vals[0] = val.parse().ok(),
            "recon" => vals[1] = val.parse().ok(),
            "kl" => vals[2] = val.parse().ok(),
            "reg" => vals[3] = val.parse().ok(),
            "val_acc" => vals[4] = val.parse().ok(),
            _ => return None,
        }
    }
    Some(EpochStats {
        epoch: epoch?,
        total: vals[0]?,
        recon: vals[1]?,
        kl: vals[2]?,
        reg: vals[3]?,
        val_acc: vals[4]?,
    })
}

pub fn read_log(path: &Path) -> Result<Vec<EpochStats>> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    Ok(text.lines().filter_map(parse_line).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let s = EpochStats {
            epoch: 3,
            total: 2.345678,
            recon: 2.0,
            kl: 0.25,
            reg: 0.095678,
            val_acc: 0.40625,
        };
        let line = format_line(&s);
        let back = parse_line(&line).unwrap();
        assert_eq!(back.epoch, 3);
        assert!((back.total - s.total).abs() < 1e-6);
        assert!((back.val_acc - s.val_acc).abs() < 1e-6);
        assert!(parse_line("epoch=x").is_none());
        assert!(parse_line("wat=1").is_none());
    }
}
