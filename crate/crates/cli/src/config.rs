//! Experiment configuration: protocol defaults, an optional TOML file,
//! named presets, and command-line overrides, resolved in that order
//! (later sources win). Every run directory records the fully resolved
//! values so a run is reproducible from its artifacts alone.

use crate::error::{io_at, CliError, Result};
use gridtune_core::melody::{GRID_SIZE, VOCAB};
use gridtune_core::metrics::DEFAULT_BINS;
use gridtune_core::reg::{Method, DEFAULT_DELTA};
use gridtune_core::train::TrainConfig;
use gridtune_core::autodiff::AdamHyper;
use gridtune_core::vae::VaeConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming the output root; the `--out` flag wins.
pub const OUT_ENV: &str = "GRIDTUNE_OUT";
pub const DEFAULT_OUT: &str = "gridtune-out";

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    /// Dataset size in records (the full grid by default).
    pub size: u32,
    /// Dataset sampling seed.
    pub data_seed: u64,
    pub methods: Vec<Method>,
    pub gammas: Vec<f64>,
    pub beta: f64,
    pub delta: f64,
    /// Number of run seeds; runs use seeds 0..n.
    pub seeds: u64,
    pub batch: usize,
    pub epochs: u32,
    /// KL annealing window in epochs: weight 0 for the first half, then a
    /// linear ramp to β (0 = constant β).
    pub warmup: u32,
    pub lr: f64,
    pub latent: usize,
    pub step_hidden: usize,
    pub bar_hidden: usize,
    /// Quantile bins for latent discretization.
    pub bins: usize,
    /// Base points for the attribute-change matrix.
    pub acm_points: usize,
    /// Prior samples for the latent density ratio.
    pub ldr_samples: usize,
    /// Surface scan resolution (g×g).
    pub grid: usize,
    /// Free plot dimension; defaults to D−1.
    pub dim_j: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            out: PathBuf::from(DEFAULT_OUT),
            size: GRID_SIZE,
            data_seed: 0,
            methods: Method::ALL.to_vec(),
            gammas: vec![0.1, 1.0, 10.0],
            beta: 0.2,
            delta: DEFAULT_DELTA,
            seeds: 3,
            batch: 512,
            epochs: 100,
            warmup: 10,
            lr: 1e-4,
            latent: 32,
            step_hidden: 64,
            bar_hidden: 32,
            bins: DEFAULT_BINS,
            acm_points: 1024,
            ldr_samples: 10_000,
            grid: 8,
            dim_j: None,
        }
    }
}

/// Command-line overrides; every field mirrors an [`ExperimentConfig`]
/// field and is optional.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Dataset size: a record count or "full"
    #[arg(long)]
    pub size: Option<String>,
    /// Dataset sampling seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Methods to sweep, comma separated (beta-vae,ivae,s2vae,arvae)
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Regularization strengths to sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// KL weight
    #[arg(long)]
    pub beta: Option<f64>,
    /// Rank-surrogate sharpness
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of run seeds (runs use seeds 0..n)
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// KL annealing window in epochs (0 = constant weight)
    #[arg(long)]
    pub warmup: Option<u32>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Latent dimensionality
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub step_hidden: Option<usize>,
    #[arg(long)]
    pub bar_hidden: Option<usize>,
    /// Quantile bins for latent discretization
    #[arg(long)]
    pub bins: Option<usize>,
    /// Base points for the attribute-change matrix
    #[arg(long)]
    pub acm_points: Option<usize>,
    /// Prior samples for the latent density ratio
    #[arg(long)]
    pub ldr_samples: Option<usize>,
    /// Surface scan resolution (g×g)
    #[arg(long)]
    pub grid: Option<usize>,
    /// Free plot dimension (default: last latent coordinate)
    #[arg(long)]
    pub dim_j: Option<usize>,
}

/// `size` accepts a plain count or the word "full".
pub fn parse_size(s: &str) -> Result<u32> {
    if s == "full" {
        return Ok(GRID_SIZE);
    }
    s.replace('_', "")
        .parse::<u32>()
        .map_err(|_| CliError::Usage(format!("invalid --size '{s}' (count or \"full\")")))
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names
        .iter()
        .map(|n| {
            Method::parse(n)
                .ok_or_else(|| CliError::Usage(format!("unknown method '{n}' (beta-vae, ivae, s2vae, arvae)")))
        })
        .collect()
}

// On-disk TOML view: `key = value` under sections, all fields optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: Option<RawDataset>,
    train: Option<RawTrain>,
    model: Option<RawModel>,
    eval: Option<RawEval>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    size: Option<SizeSpec>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SizeSpec {
    Count(u32),
    Word(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    methods: Option<Vec<String>>,
    gammas: Option<Vec<f64>>,
    beta: Option<f64>,
    delta: Option<f64>,
    seeds: Option<u64>,
    batch: Option<usize>,
    epochs: Option<u32>,
    warmup: Option<u32>,
    lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    latent: Option<usize>,
    step_hidden: Option<usize>,
    bar_hidden: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    bins: Option<usize>,
    acm_points: Option<usize>,
    ldr_samples: Option<usize>,
    grid: Option<usize>,
    dim_j: Option<usize>,
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl ExperimentConfig {
    /// defaults → config file → preset → flag overrides; `out` comes from
    /// the flag, then the environment, then the default directory.
    pub fn resolve(
        file: Option<&Path>,
        preset: Option<&str>,
        out: Option<PathBuf>,
        ov: &Overrides,
    ) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        if let Some(name) = preset {
            cfg.apply_preset(name)?;
        }
        cfg.apply_overrides(ov)?;
        cfg.out = out
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let raw: RawConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(d) = raw.dataset {
            if let Some(s) = d.size {
                self.size = match s {
                    SizeSpec::Count(n) => n,
                    SizeSpec::Word(w) => parse_size(&w)?,
                };
            }
            take!(self.data_seed, d.seed);
        }
        if let Some(t) = raw.train {
            if let Some(m) = t.methods {
                self.methods = parse_methods(&m)?;
            }
            take!(self.gammas, t.gammas);
            take!(self.beta, t.beta);
            take!(self.delta, t.delta);
            take!(self.seeds, t.seeds);
            take!(self.batch, t.batch);
            take!(self.epochs, t.epochs);
            take!(self.warmup, t.warmup);
            take!(self.lr, t.lr);
        }
        if let Some(m) = raw.model {
            take!(self.latent, m.latent);
            take!(self.step_hidden, m.step_hidden);
            take!(self.bar_hidden, m.bar_hidden);
        }
        if let Some(e) = raw.eval {
            take!(self.bins, e.bins);
            take!(self.acm_points, e.acm_points);
            take!(self.ldr_samples, e.ldr_samples);
            take!(self.grid, e.grid);
            self.dim_j = e.dim_j.or(self.dim_j);
        }
        Ok(())
    }

    /// The `desk` preset shrinks the protocol to laptop scale: 20k records,
    /// batch 128, 20 epochs, latent 32, 3 seeds, and a learning rate raised
    /// to converge within the shorter schedule.
    fn apply_preset(&mut self, name: &str) -> Result<()> {
        match name {
            "desk" => {
                self.size = 20_000;
                self.batch = 128;
                self.epochs = 20;
                self.warmup = 16;
                self.latent = 32;
                self.step_hidden = 48;
                self.seeds = 3;
                self.lr = 1e-2;
                Ok(())
            }
            other => Err(CliError::Usage(format!(
                "unknown preset '{other}' (available: desk)"
            ))),
        }
    }

    fn apply_overrides(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(s) = &ov.size {
            self.size = parse_size(s)?;
        }
        take!(self.data_seed, ov.seed);
        if let Some(m) = &ov.methods {
            self.methods = parse_methods(m)?;
        }
        take!(self.gammas, ov.gammas.clone());
        take!(self.beta, ov.beta);
        take!(self.delta, ov.delta);
        take!(self.seeds, ov.seeds);
        take!(self.batch, ov.batch);
        take!(self.epochs, ov.epochs);
        take!(self.warmup, ov.warmup);
        take!(self.lr, ov.lr);
        take!(self.latent, ov.latent);
        take!(self.step_hidden, ov.step_hidden);
        take!(self.bar_hidden, ov.bar_hidden);
        take!(self.bins, ov.bins);
        take!(self.acm_points, ov.acm_points);
        take!(self.ldr_samples, ov.ldr_samples);
        take!(self.grid, ov.grid);
        self.dim_j = ov.dim_j.or(self.dim_j);
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CliError::Usage(msg.to_string()));
        if self.size == 0 {
            return bad("dataset size must be at least 1");
        }
        if self.size > GRID_SIZE {
            return bad("dataset size exceeds the factor grid");
        }
        if self.methods.is_empty() || self.gammas.is_empty() {
            return bad("methods and gammas must be non-empty");
        }
        if self.seeds == 0 {
            return bad("at least one run seed is required");
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1");
        }
        if self.bins < 2 {
            return bad("latent discretization needs at least 2 bins");
        }
        if self.grid < 2 {
            return bad("surface grid must be at least 2×2");
        }
        if self.acm_points == 0 || self.ldr_samples == 0 {
            return bad("acm_points and ldr_samples must be at least 1");
        }
        Ok(())
    }

    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig {
            latent: self.latent,
            step_hidden: self.step_hidden,
            bar_hidden: self.bar_hidden,
            vocab: VOCAB,
        }
    }

    pub fn train_config(&self, method: Method, gamma: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            beta: self.beta,
            gamma,
            delta: self.delta,
            epochs: self.epochs,
            warmup: self.warmup,
            batch: self.batch,
            hyper: AdamHyper {
                lr: self.lr,
                ..AdamHyper::default()
            },
            seed,
            vae: self.vae_config(),
        }
    }

    /// The free plot dimension: explicit override or the last coordinate.
    pub fn plot_dim(&self) -> usize {
        self.dim_j.unwrap_or(self.latent.saturating_sub(1))
    }

    // ---- output layout -------------------------------------------------

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.data_dir()
            .join(format!("ds-{}-{}.dmel", self.size, self.data_seed))
    }

    pub fn splits_path(&self) -> PathBuf {
        self.data_dir()
            .join(format!("ds-{}-{}.splits", self.size, self.data_seed))
    }

    pub fn run_dir(&self, method: Method, gamma: f64, seed: u64) -> PathBuf {
        self.out
            .join("runs")
            .join(format!("{}-g{}-s{}", method.name(), fmt_g(gamma), seed))
    }

    pub fn checkpoint_path(&self, method: Method, gamma: f64, seed: u64) -> PathBuf {
        self.run_dir(method, gamma, seed).join("checkpoint.vaec")
    }

    pub fn results_path(&self) -> PathBuf {
        self.out.join("results.tsv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }

    /// Every (method, γ, seed) triple of the sweep, in sweep order.
    pub fn sweep(&self) -> Vec<(Method, f64, u64)> {
        let mut runs = Vec::new();
        for &method in &self.methods {
            for &gamma in &self.gammas {
                for seed in 0..self.seeds {
                    runs.push((method, gamma, seed));
                }
            }
        }
        runs
    }

    /// Resolved per-run record written into the run directory.
    pub fn run_record_toml(&self, method: Method, gamma: f64, seed: u64) -> String {
        #[derive(Serialize)]
        struct Run<'a> {
            method: &'a str,
            gamma: f64,
            seed: u64,
        }
        #[derive(Serialize)]
        struct DatasetSec {
            size: u32,
            seed: u64,
        }
        #[derive(Serialize)]
        struct TrainSec {
            beta: f64,
            delta: f64,
            batch: usize,
            epochs: u32,
            warmup: u32,
            lr: f64,
        }
        #[derive(Serialize)]
        struct ModelSec {
            latent: usize,
            step_hidden: usize,
            bar_hidden: usize,
        }
        #[derive(Serialize)]
        struct EvalSec {
            bins: usize,
            acm_points: usize,
            ldr_samples: usize,
            grid: usize,
            dim_j: usize,
        }
        #[derive(Serialize)]
        struct Record<'a> {
            run: Run<'a>,
            dataset: DatasetSec,
            train: TrainSec,
            model: ModelSec,
            eval: EvalSec,
        }
        let rec = Record {
            run: Run {
                method: method.name(),
                gamma,
                seed,
            },
            dataset: DatasetSec {
                size: self.size,
                seed: self.data_seed,
            },
            train: TrainSec {
                beta: self.beta,
                delta: self.delta,
                batch: self.batch,
                epochs: self.epochs,
                warmup: self.warmup,
                lr: self.lr,
            },
            model: ModelSec {
                latent: self.latent,
                step_hidden: self.step_hidden,
                bar_hidden: self.bar_hidden,
            },
            eval: EvalSec {
                bins: self.bins,
                acm_points: self.acm_points,
                ldr_samples: self.ldr_samples,
                grid: self.grid,
                dim_j: self.plot_dim(),
            },
        };
        toml::to_string(&rec).expect("config serializes")
    }
}

/// γ rendered without a trailing `.0` so names read `g0.1`, `g1`, `g10`.
pub fn fmt_g(g: f64) -> String {
    format!("{g}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_protocol() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.size, GRID_SIZE);
        assert_eq!(cfg.gammas, vec![0.1, 1.0, 10.0]);
        assert_eq!(cfg.beta, 0.2);
        assert_eq!(cfg.batch, 512);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.latent, 32);
    }

    #[test]
    fn desk_preset_shrinks_the_protocol() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_preset("desk").unwrap();
        assert_eq!(
            (cfg.size, cfg.batch, cfg.epochs, cfg.latent, cfg.seeds),
            (20_000, 128, 20, 32, 3)
        );
        assert_eq!((cfg.warmup, cfg.step_hidden), (16, 48));
        assert!(cfg.apply_preset("lab").is_err());
    }

    #[test]
    fn file_then_flags_override_in_order() {
        let dir = std::env::temp_dir().join("gridtune-cfg-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.toml");
        std::fs::write(
            &path,
            "[dataset]\nsize = 500\nseed = 9\n[train]\nmethods = [\"ivae\"]\nepochs = 7\n[model]\nlatent = 16\n",
        )
        .unwrap();
        let ov = Overrides {
            epochs: Some(3),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::resolve(Some(&path), None, Some(dir.clone()), &ov).unwrap();
        assert_eq!(cfg.size, 500);
        assert_eq!(cfg.data_seed, 9);
        assert_eq!(cfg.methods, vec![Method::Ivae]);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.latent, 16);
        assert_eq!(cfg.out, dir);
    }

    #[test]
    fn size_spellings() {
        assert_eq!(parse_size("full").unwrap(), GRID_SIZE);
        assert_eq!(parse_size("20_000").unwrap(), 20_000);
        assert!(parse_size("lots").is_err());
    }

    #[test]
    fn zero_size_is_a_usage_error() {
        let ov = Overrides {
            size: Some("0".into()),
            ..Overrides::default()
        };
        let err = ExperimentConfig::resolve(None, None, None, &ov).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn gamma_formatting_drops_trailing_zero() {
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.1), "0.1");
        assert_eq!(fmt_g(10.0), "10");
    }

    #[test]
    fn sweep_enumerates_method_gamma_seed() {
        let mut cfg = ExperimentConfig::default();
        cfg.methods = vec![Method::Beta, Method::Ivae];
        cfg.gammas = vec![1.0];
        cfg.seeds = 2;
        assert_eq!(cfg.sweep().len(), 4);
    }
}
