//! `report`: aggregate the results table and the per-run change matrices
//! across seeds. Raw matrices are averaged before normalization, matching
//! the seed-level protocol; metric columns are seed means.

use super::{read_matrix_tsv, write_matrix_tsv};
use crate::config::{fmt_g, ExperimentConfig};
use crate::error::{io_at, CliError, Result};
use crate::svg::acm_svg;
use crate::table::{latest_rows, read_rows, ResultRow};
use gridtune_core::control::{normalize_rows, off_diagonal_mean, AcmRaw};
use gridtune_core::melody::{ATTR_NAMES, NUM_ATTRS};
use gridtune_core::reg::Method;

struct Group {
    method: Method,
    gamma: f64,
    rows: Vec<ResultRow>,
}

fn group_rows(rows: &[ResultRow]) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for row in rows {
        match groups
            .iter_mut()
            .find(|g| g.method == row.method && g.gamma.to_bits() == row.gamma.to_bits())
        {
            Some(g) => g.rows.push(row.clone()),
            None => groups.push(Group {
                method: row.method,
                gamma: row.gamma,
                rows: vec![row.clone()],
            }),
        }
    }
    groups
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let rows = latest_rows(&read_rows(&cfg.results_path())?);
    if rows.is_empty() {
        return Err(CliError::Missing("results table has no rows".into()));
    }
    let dir = cfg.report_dir();
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;

    let groups = group_rows(&rows);
    let mut summary = String::from(
        "# seed means per (method, gamma)\nmethod\tgamma\tseeds\tmig\tmodularity\tsap\trecon_acc\tldr\tacm_offdiag\n",
    );
    let mut offdiag_line = String::from("normalized change-matrix off-diagonal mass:");
    let mut ldr_line = String::from("latent density ratio (reported, not ranked):");

    for g in &groups {
        // Seed-mean of the raw change matrices, then one normalization.
        let mut raws = Vec::new();
        for row in &g.rows {
            let path = cfg
                .run_dir(g.method, g.gamma, row.seed)
                .join("acm-raw.tsv");
            let (meta, a) = read_matrix_tsv(&path)?;
            if a.len() != NUM_ATTRS || a.iter().any(|r| r.len() != NUM_ATTRS) {
                return Err(CliError::format(&path, "matrix is not 9×9"));
            }
            let points = meta
                .iter()
                .find(|(k, _)| k == "points")
                .and_then(|(_, v)| v.parse().ok())
                .unwrap_or(0);
            raws.push(AcmRaw { a, points });
        }
        let norm = normalize_rows(&AcmRaw::mean_of(&raws));
        let off = off_diagonal_mean(&norm);

        let stem = format!("acm-{}-g{}", g.method.name(), fmt_g(g.gamma));
        let traversed: Vec<String> = ATTR_NAMES.iter().map(|n| format!("r[{n}]")).collect();
        write_matrix_tsv(
            &dir.join(format!("{stem}.tsv")),
            &[
                ("seeds", g.rows.len().to_string()),
                ("off_diagonal_mean", format!("{off:.6}")),
            ],
            &ATTR_NAMES,
            &traversed,
            &norm,
        )?;
        let svg_path = dir.join(format!("{stem}.svg"));
        std::fs::write(
            &svg_path,
            acm_svg(
                &norm,
                &format!("{} γ={} seed-mean change matrix", g.method.name(), fmt_g(g.gamma)),
            ),
        )
        .map_err(io_at(&svg_path))?;

        summary.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            g.method.name(),
            fmt_g(g.gamma),
            g.rows.len(),
            mean(g.rows.iter().map(|r| r.mig)),
            mean(g.rows.iter().map(|r| r.modularity)),
            mean(g.rows.iter().map(|r| r.sap)),
            mean(g.rows.iter().map(|r| r.recon_acc)),
            mean(g.rows.iter().map(|r| r.ldr)),
            off,
        ));
        offdiag_line.push_str(&format!(
            " {}(g={})={:.4}",
            g.method.name(),
            fmt_g(g.gamma),
            off
        ));
        ldr_line.push_str(&format!(
            " {}(g={})={:.4}",
            g.method.name(),
            fmt_g(g.gamma),
            mean(g.rows.iter().map(|r| r.ldr))
        ));
    }

    let summary_path = dir.join("summary.tsv");
    std::fs::write(&summary_path, &summary).map_err(io_at(&summary_path))?;
    print!("{summary}");
    println!("{offdiag_line}");
    println!("{ldr_line}");
    println!("report written to {}", dir.display());
    Ok(())
}
