//! `train`: one run per (method, γ, seed) of the sweep. Each run directory
//! gets the resolved config, an append-only epoch log, and a checkpoint
//! rewritten atomically after every epoch so interrupted runs resume
//! bit-exactly with `--resume`.

use crate::checkpoint::{load_checkpoint, resumable, save_checkpoint};
use crate::config::{fmt_g, ExperimentConfig};
use crate::dataset_file::read_dataset;
use crate::error::{io_at, CliError, Result};
use crate::trainlog::append_line;
use gridtune_core::melody::Dataset;
use gridtune_core::reg::Method;
use gridtune_core::train::{TrainError, Trainer};

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::NonFinite { .. } | TrainError::Graph(_) => CliError::Numeric(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

pub fn run(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let ds = read_dataset(&cfg.dataset_path())?;
    for (method, gamma, seed) in cfg.sweep() {
        train_one(cfg, &ds, method, gamma, seed, resume)?;
    }
    Ok(())
}

pub fn train_one(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    method: Method,
    gamma: f64,
    seed: u64,
    resume: bool,
) -> Result<()> {
    let dir = cfg.run_dir(method, gamma, seed);
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let ckpt = cfg.checkpoint_path(method, gamma, seed);
    let log = dir.join("train.log");
    let wanted = cfg.train_config(method, gamma, seed);

    let mut tr = if resume && ckpt.exists() {
        let tr = load_checkpoint(&ckpt)?;
        if !resumable(&tr.cfg, &wanted) {
            return Err(CliError::Usage(format!(
                "{}: existing checkpoint was trained with a different configuration",
                ckpt.display()
            )));
        }
        let mut tr = tr;
        tr.cfg.epochs = wanted.epochs;
        tr
    } else {
        // Fresh run: a stale log would mix trajectories.
        let _ = std::fs::remove_file(&log);
        Trainer::new(wanted).map_err(train_err)?
    };

    let record = cfg.run_record_toml(method, gamma, seed);
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, record).map_err(io_at(&cfg_path))?;

    let mut last_acc = f64::NAN;
    while tr.epoch < tr.cfg.epochs {
        let stats = tr.run_epoch(ds).map_err(train_err)?;
        append_line(&log, &stats)?;
        save_checkpoint(&ckpt, &tr)?;
        last_acc = stats.val_acc;
    }
    println!(
        "train {} gamma={} seed={}: {} epochs, val_acc={:.4}",
        method.name(),
        fmt_g(gamma),
        seed,
        tr.epoch,
        last_acc
    );
    Ok(())
}
