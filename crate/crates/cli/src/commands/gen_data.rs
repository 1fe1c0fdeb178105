//! `gen-data`: build the seeded dataset file and its split sidecar.
//! Idempotent per (size, seed) — rebuilding writes identical bytes.

use crate::config::ExperimentConfig;
use crate::dataset_file::{write_dataset, write_splits_sidecar};
use crate::error::{io_at, CliError, Result};
use gridtune_core::melody::{Dataset, DatasetConfig};

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.data_dir();
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let ds = Dataset::build(&DatasetConfig {
        size: cfg.size,
        seed: cfg.data_seed,
    })
    .map_err(|e| CliError::Usage(e.to_string()))?;
    write_dataset(&cfg.dataset_path(), &ds)?;
    write_splits_sidecar(&cfg.splits_path(), &ds)?;
    println!(
        "gen-data: {} records (train {} / val {} / test {}) -> {}",
        ds.records.len(),
        ds.train().len(),
        ds.val().len(),
        ds.test().len(),
        cfg.dataset_path().display()
    );
    Ok(())
}
