//! `eval`: score every run of the sweep. Read-only with respect to
//! checkpoints; appends one row per run to the results table and drops the
//! matrix artifacts into the run directory.

use super::{
    control_err, first_rows, label_columns_usize, load_run, metric_err, numeric_err,
    write_matrix_tsv, RunContext,
};
use crate::config::{fmt_g, ExperimentConfig};
use crate::error::{io_at, Result};
use crate::table::{append_row, ResultRow};
use gridtune_core::control::{attribute_change_matrix, ldr, normalize_rows, off_diagonal_mean};
use gridtune_core::melody::{TokenSequence, ATTR_NAMES};
use gridtune_core::metrics::{discretize_latents, mig, modularity, mutual_info_matrix, sap};
use gridtune_core::reg::Method;
use gridtune_core::rng::{streams, DetRng};
use gridtune_core::train::{eval_accuracy, posterior_means_of};

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    for (method, gamma, seed) in cfg.sweep() {
        let row = eval_one(cfg, method, gamma, seed)?;
        println!(
            "eval {} gamma={} seed={}: mig={:.4} modularity={:.4} sap={:.4} recon_acc={:.4} ldr={:.4}",
            method.name(),
            fmt_g(gamma),
            seed,
            row.mig,
            row.modularity,
            row.sap,
            row.recon_acc,
            row.ldr
        );
    }
    Ok(())
}

pub fn eval_one(
    cfg: &ExperimentConfig,
    method: Method,
    gamma: f64,
    seed: u64,
) -> Result<ResultRow> {
    let ctx = load_run(cfg, method, gamma, seed)?;
    let RunContext { model, ds, bounds, dims, .. } = &ctx;
    let test = ds.test();

    // Disentanglement scores on the held-out test encodings.
    let test_mu = posterior_means_of(model, test).map_err(numeric_err)?;
    let labels = label_columns_usize(test);
    let binned = discretize_latents(&test_mu, cfg.bins).map_err(metric_err)?;
    let mi = mutual_info_matrix(&binned, &labels).map_err(metric_err)?;
    let mig_s = mig(&mi).map_err(metric_err)?;
    let mod_s = modularity(&mi).map_err(metric_err)?;
    let sap_s = sap(&test_mu, &labels).map_err(metric_err)?;

    let tokens: Vec<TokenSequence> = test.iter().map(|r| r.tokens).collect();
    let recon_acc = eval_accuracy(model, &tokens, 256).map_err(numeric_err)?;

    let points = cfg.acm_points.min(test.len());
    if points < cfg.acm_points {
        eprintln!(
            "warning: clamping attribute-change base points from {} to the test size {points}",
            cfg.acm_points
        );
    }
    let zs = first_rows(&test_mu, points);
    let raw = attribute_change_matrix(model, &zs, dims, bounds).map_err(control_err)?;
    let norm = normalize_rows(&raw);

    let mut rng = DetRng::for_stream(seed, &[streams::LDR]);
    let ldr_rep = ldr(model, cfg.ldr_samples, &mut rng).map_err(control_err)?;

    let dir = cfg.run_dir(method, gamma, seed);
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let attr_rows: Vec<String> = ATTR_NAMES.iter().map(|s| s.to_string()).collect();
    let dim_cols: Vec<String> = (0..cfg.latent).map(|d| format!("z{d}")).collect();
    let dim_cols_ref: Vec<&str> = dim_cols.iter().map(String::as_str).collect();
    write_matrix_tsv(
        &dir.join("mi.tsv"),
        &[("rows", "attributes".into()), ("cols", "latent dimensions".into())],
        &dim_cols_ref,
        &attr_rows,
        &mi.mi,
    )?;
    let traversed: Vec<String> = ATTR_NAMES.iter().map(|n| format!("r[{n}]")).collect();
    write_matrix_tsv(
        &dir.join("acm-raw.tsv"),
        &[("points", points.to_string())],
        &ATTR_NAMES,
        &traversed,
        &raw.a,
    )?;
    write_matrix_tsv(
        &dir.join("acm-norm.tsv"),
        &[
            ("points", points.to_string()),
            ("off_diagonal_mean", format!("{:.6}", off_diagonal_mean(&norm))),
        ],
        &ATTR_NAMES,
        &traversed,
        &norm,
    )?;
    let mut ldr_text = String::new();
    for (name, v) in ATTR_NAMES.iter().zip(ldr_rep.per_attr.iter()) {
        ldr_text.push_str(&format!("{name}\t{v:.6}\n"));
    }
    ldr_text.push_str(&format!("overall\t{:.6}\nsamples\t{}\n", ldr_rep.overall, ldr_rep.n));
    let ldr_path = dir.join("ldr.tsv");
    std::fs::write(&ldr_path, ldr_text).map_err(io_at(&ldr_path))?;

    let row = ResultRow {
        method,
        gamma,
        beta: cfg.beta,
        seed,
        mig: mig_s.score,
        modularity: mod_s,
        sap: sap_s.score,
        recon_acc,
        ldr: ldr_rep.overall,
    };
    append_row(&cfg.results_path(), &row)?;
    Ok(row)
}
