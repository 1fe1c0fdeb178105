//! Subcommand implementations. Each `run` takes the resolved configuration
//! and returns a [`CliError`](crate::error::CliError) carrying the exit
//! code on failure.

pub mod eval;
pub mod gen_data;
pub mod project;
pub mod report;
pub mod surface;
pub mod train;
pub mod traverse;

use crate::checkpoint::load_checkpoint;
use crate::config::ExperimentConfig;
use crate::dataset_file::read_dataset;
use crate::error::{io_at, CliError, Result};
use gridtune_core::autodiff::Tensor;
use gridtune_core::control::{baseline_regularized_dims, ControlError, TraversalBounds};
use gridtune_core::melody::{Dataset, Record, ATTR_NAMES, NUM_ATTRS};
use gridtune_core::metrics::{discretize_latents, mutual_info_matrix, MetricError};
use gridtune_core::reg::Method;
use gridtune_core::train::posterior_means_of;
use gridtune_core::vae::VaeModel;
use std::path::Path;

pub fn numeric_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Contract violations surfaced by evaluation parameters (attribute names,
/// plot dimensions, grid sizes) are usage errors.
pub fn control_err(e: ControlError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn metric_err(e: MetricError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn attr_index(name: &str) -> Result<usize> {
    ATTR_NAMES
        .iter()
        .position(|&n| n == name)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "unknown attribute '{name}' (expected one of: {})",
                ATTR_NAMES.join(", ")
            ))
        })
}

pub fn label_columns_usize(records: &[Record]) -> Vec<Vec<usize>> {
    (0..NUM_ATTRS)
        .map(|l| records.iter().map(|r| r.attrs[l] as usize).collect())
        .collect()
}

/// First `n` rows of a row-major matrix as a new tensor.
pub fn first_rows(t: &Tensor, n: usize) -> Tensor {
    let d = t.cols();
    Tensor::from_vec(&[n, d], t.data()[..n * d].to_vec()).expect("rows are finite")
}

/// Shared evaluation-side state: model, data, traversal bounds from the
/// validation encodings, and the per-attribute latent coordinates (the
/// supervised map, or the highest-MI map for the unsupervised baseline).
pub struct RunContext {
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
    pub model: VaeModel,
    pub ds: Dataset,
    pub bounds: TraversalBounds,
    pub dims: [usize; NUM_ATTRS],
}

pub fn load_run(
    cfg: &ExperimentConfig,
    method: Method,
    gamma: f64,
    seed: u64,
) -> Result<RunContext> {
    let ds = read_dataset(&cfg.dataset_path())?;
    let tr = load_checkpoint(&cfg.checkpoint_path(method, gamma, seed))?;
    let model = tr.model;
    let val_mu = posterior_means_of(&model, ds.val()).map_err(numeric_err)?;
    let bounds = TraversalBounds::from_means(&val_mu).map_err(control_err)?;
    let dims = if method.supervised() {
        model.reg_dims()
    } else {
        let binned = discretize_latents(&val_mu, cfg.bins).map_err(metric_err)?;
        let labels = label_columns_usize(ds.val());
        let mi = mutual_info_matrix(&binned, &labels).map_err(metric_err)?;
        baseline_regularized_dims(&mi)
    };
    Ok(RunContext {
        method,
        gamma,
        seed,
        model,
        ds,
        bounds,
        dims,
    })
}

/// Tab-separated matrix with a row-label column; `meta` lines are written
/// as leading `# key=value` comments.
pub fn write_matrix_tsv(
    path: &Path,
    meta: &[(&str, String)],
    col_labels: &[&str],
    row_labels: &[String],
    a: &[Vec<f64>],
) -> Result<()> {
    let mut s = String::new();
    for (k, v) in meta {
        s.push_str(&format!("# {k}={v}\n"));
    }
    s.push('\t');
    s.push_str(&col_labels.join("\t"));
    s.push('\n');
    for (lab, row) in row_labels.iter().zip(a) {
        s.push_str(lab);
        for v in row {
            s.push_str(&format!("\t{v:.6}"));
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(io_at(path))
}

/// Meta `key=value` pairs and the numeric body of a matrix file.
pub type MatrixFile = (Vec<(String, String)>, Vec<Vec<f64>>);

/// Reads back a matrix written by [`write_matrix_tsv`], returning the meta
/// comments and the numeric body.
pub fn read_matrix_tsv(path: &Path) -> Result<MatrixFile> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() < 2 || cells[0].is_empty() {
            continue; // column header line
        }
        let row: Option<Vec<f64>> = cells[1..].iter().map(|c| c.parse().ok()).collect();
        rows.push(row.ok_or_else(|| CliError::format(path, "malformed matrix row"))?);
    }
    Ok((meta, rows))
}
