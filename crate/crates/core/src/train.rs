//! The single-threaded training loop. Every source of randomness is a
//! dedicated deterministic stream keyed by (run seed, epoch, batch), so a
//! run is a pure function of its configuration and can resume from any
//! epoch boundary bit-exactly.

use crate::autodiff::{adam_step, AdError, AdamHyper, AdamState, Tape, Tensor};
use crate::melody::{Dataset, Record, TokenSequence, NUM_ATTRS};
use crate::reg::{
    classifier_loss, compose_total, label_columns, normalized_targets, rank_alignment_loss,
    sign_alignment_loss, ClassifierHeads, Method, DEFAULT_DELTA,
};
use crate::rng::{streams, DetRng};
use crate::vae::{elbo_terms, GraphVars, LossBreakdown, VaeConfig, VaeModel, SEQ_LEN};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub beta: f64,
    pub gamma: f64,
    /// Sharpness of the rank-alignment surrogate.
    pub delta: f64,
    pub epochs: u32,
    /// Length of the KL annealing window in epochs (0 = constant weight).
    /// The weight holds at zero for the first half of the window, then
    /// ramps linearly to `beta`; information uptake only happens while the
    /// rate penalty is near zero, so the hold phase does the learning and
    /// the ramp consolidates it.
    pub warmup: u32,
    pub batch: usize,
    pub hyper: AdamHyper,
    pub seed: u64,
    pub vae: VaeConfig,
}

impl TrainConfig {
    /// KL weight in effect for `epoch`: zero for the first half of the
    /// warm-up window, a linear ramp reaching `beta` at the window's end,
    /// then constant. Pure in (config, epoch), so resumed runs replay the
    /// identical schedule.
    pub fn effective_beta(&self, epoch: u32) -> f64 {
        let hold = self.warmup / 2;
        if epoch >= self.warmup {
            self.beta
        } else if epoch < hold {
            0.0
        } else {
            self.beta * (epoch - hold + 1) as f64 / (self.warmup - hold) as f64
        }
    }
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            method: Method::Beta,
            beta: 0.2,
            gamma: 1.0,
            delta: DEFAULT_DELTA,
            epochs: 100,
            warmup: 10,
            batch: 512,
            hyper: AdamHyper::default(),
            seed: 0,
            vae: VaeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Graph(AdError),
    /// The loss left the reals; training aborts with its position.
    NonFinite { epoch: u32, batch: usize },
    /// Not enough records for a single full batch.
    EmptyEpoch { train_len: usize, batch: usize },
    /// Pairwise losses need at least two samples per batch.
    BatchTooSmall(usize),
    /// Supervision assigns one latent coordinate per attribute, so the
    /// latent space must hold at least that many.
    LatentTooSmall { latent: usize, attrs: usize },
}

impl From<AdError> for TrainError {
    fn from(e: AdError) -> TrainError {
        TrainError::Graph(e)
    }
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Graph(e) => write!(f, "graph error: {e}"),
            TrainError::NonFinite { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            TrainError::EmptyEpoch { train_len, batch } => {
                write!(f, "{train_len} training records cannot fill a batch of {batch}")
            }
            TrainError::BatchTooSmall(b) => {
                write!(f, "batch size {b} is too small for pairwise losses")
            }
            TrainError::LatentTooSmall { latent, attrs } => {
                write!(f, "latent size {latent} cannot supervise {attrs} attributes")
            }
        }
    }
}

impl core::error::Error for TrainError {}

/// Batch-mean loss pieces and end-of-epoch validation accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub reg: f64,
    pub val_acc: f64,
}

/// Resumable training state: everything a checkpoint needs to persist.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: VaeModel,
    pub heads: Option<ClassifierHeads>,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: u32,
}

impl Trainer {
    /// Fresh state: VAE weights then (for the classifier objective) head
    /// weights, drawn in that order from the init stream of `cfg.seed`.
    pub fn new(cfg: TrainConfig) -> Result<Trainer, TrainError> {
        if cfg.method == Method::Arvae && cfg.batch < 2 {
            return Err(TrainError::BatchTooSmall(cfg.batch));
        }
        if cfg.vae.latent < NUM_ATTRS {
            return Err(TrainError::LatentTooSmall {
                latent: cfg.vae.latent,
                attrs: NUM_ATTRS,
            });
        }
        let mut rng = DetRng::for_stream(cfg.seed, &[streams::INIT]);
        let mut model = VaeModel::init(cfg.vae, &mut rng)?;
        let heads = match cfg.method {
            Method::Ivae => Some(ClassifierHeads::init(&mut model.params, &mut rng)),
            _ => None,
        };
        let adam = AdamState::new(&model.params, cfg.hyper);
        Ok(Trainer {
            cfg,
            model,
            heads,
            adam,
            epoch: 0,
        })
    }

    /// Rebuilds a trainer from persisted pieces (checkpoint restore). The
    /// caller guarantees `model.params` and `adam` agree in shape.
    pub fn resume(
        cfg: TrainConfig,
        model: VaeModel,
        heads: Option<ClassifierHeads>,
        adam: AdamState,
        epoch: u32,
    ) -> Trainer {
        Trainer {
            cfg,
            model,
            heads,
            adam,
            epoch,
        }
    }

    /// Runs one epoch over `ds.train()` and reports batch-mean losses plus
    /// validation accuracy on (up to) the first 1024 validation records.
    pub fn run_epoch(&mut self, ds: &Dataset) -> Result<EpochStats, TrainError> {
        let train = ds.train();
        let batches = train.len() / self.cfg.batch;
        if batches == 0 {
            return Err(TrainError::EmptyEpoch {
                train_len: train.len(),
                batch: self.cfg.batch,
            });
        }
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        DetRng::for_stream(self.cfg.seed, &[streams::SHUFFLE, epoch as u64]).shuffle(&mut order);

        let mut sums = [0.0f64; 4];
        for b in 0..batches {
            let idx = &order[b * self.cfg.batch..(b + 1) * self.cfg.batch];
            let records: Vec<&Record> = idx.iter().map(|&i| &train[i]).collect();
            let breakdown = self.step(&records, epoch, b)?;
            if !breakdown.total.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            sums[0] += breakdown.total;
            sums[1] += breakdown.recon;
            sums[2] += breakdown.kl;
            sums[3] += breakdown.reg;
        }
        self.epoch += 1;

        let val = ds.val();
        let probe = &val[..val.len().min(1024)];
        let val_acc = if probe.is_empty() {
            0.0
        } else {
            let tokens: Vec<TokenSequence> = probe.iter().map(|r| r.tokens).collect();
            eval_accuracy(&self.model, &tokens, 256)?
        };
        let nb = batches as f64;
        Ok(EpochStats {
            epoch,
            total: sums[0] / nb,
            recon: sums[1] / nb,
            kl: sums[2] / nb,
            reg: sums[3] / nb,
            val_acc,
        })
    }

    /// One optimizer step on one batch.
    fn step(
        &mut self,
        records: &[&Record],
        epoch: u32,
        batch_idx: usize,
    ) -> Result<LossBreakdown, TrainError> {
        let b = records.len();
        let d = self.cfg.vae.latent;
        let tokens: Vec<TokenSequence> = records.iter().map(|r| r.tokens).collect();
        let digits: Vec<[u8; NUM_ATTRS]> = records.iter().map(|r| r.attrs).collect();

        let mut eps_rng =
            DetRng::for_stream(self.cfg.seed, &[streams::EPS, epoch as u64, batch_idx as u64]);
        let eps = Tensor::from_vec(&[b, d], (0..b * d).map(|_| eps_rng.normal()).collect())
            .map_err(TrainError::Graph)?;

        let mut tape = Tape::new();
        let gv = self.model.inject(&mut tape);
        let (mu, lv) = self.model.encode(&mut tape, &gv, &tokens)?;
        let z = self.model.reparameterize(&mut tape, mu, lv, Some(eps))?;
        let logits = self.model.decode(&mut tape, &gv, z)?;
        let elbo = elbo_terms(&mut tape, &logits, &tokens, mu, lv)?;

        let reg = match self.cfg.method {
            Method::Beta => None,
            Method::Ivae => {
                let labels = label_columns(&digits);
                let heads = self.heads.as_ref().expect("classifier heads exist");
                Some(classifier_loss(&mut tape, heads, &gv, z, &labels)?)
            }
            Method::S2vae => {
                let targets = normalized_targets(&digits);
                Some(sign_alignment_loss(&mut tape, z, &targets)?)
            }
            Method::Arvae => {
                let targets = normalized_targets(&digits);
                Some(rank_alignment_loss(&mut tape, z, &targets, self.cfg.delta)?)
            }
        };
        let beta = self.cfg.effective_beta(epoch);
        let total = compose_total(&mut tape, elbo.recon, elbo.kl, reg, beta, self.cfg.gamma)?;

        let breakdown = LossBreakdown {
            total: tape.value(total).data()[0],
            recon: tape.value(elbo.recon).data()[0],
            kl: tape.value(elbo.kl).data()[0],
            reg: reg.map_or(0.0, |r| tape.value(r).data()[0]),
            beta,
            gamma: self.cfg.gamma,
        };

        let grads = tape.backward(total)?;
        let per_param: Vec<Option<&Tensor>> =
            (0..self.model.params.len()).map(|id| grads.get(gv.of(id))).collect();
        adam_step(&mut self.model.params, &per_param, &mut self.adam)?;
        Ok(breakdown)
    }

    /// Trains to `cfg.epochs`, collecting one stats row per epoch.
    pub fn run(&mut self, ds: &Dataset) -> Result<Vec<EpochStats>, TrainError> {
        let mut log = Vec::with_capacity(self.cfg.epochs as usize);
        while self.epoch < self.cfg.epochs {
            log.push(self.run_epoch(ds)?);
        }
        Ok(log)
    }
}

/// Deterministic-evaluation reconstruction accuracy: encode to the
/// posterior mean, decode by argmax, count matching (sample, step) cells.
pub fn eval_accuracy(
    model: &VaeModel,
    tokens: &[TokenSequence],
    chunk: usize,
) -> Result<f64, AdError> {
    let mut hits = 0usize;
    for batch in tokens.chunks(chunk.max(1)) {
        let mut tape = Tape::new();
        let gv = model.inject(&mut tape);
        let (mu, _) = model.encode(&mut tape, &gv, batch)?;
        let logits = model.decode(&mut tape, &gv, mu)?;
        let decoded = model.tokens_from_logits(&tape, &logits);
        for (d, t) in decoded.iter().zip(batch) {
            hits += d.0.iter().zip(t.0.iter()).filter(|(a, b)| a == b).count();
        }
    }
    Ok(hits as f64 / (tokens.len() * SEQ_LEN) as f64)
}

/// Convenience wrapper used by tests and the evaluation pipeline.
pub fn posterior_means_of(model: &VaeModel, records: &[Record]) -> Result<Tensor, AdError> {
    let tokens: Vec<TokenSequence> = records.iter().map(|r| r.tokens).collect();
    model.posterior_means(&tokens, 256)
}

/// Re-exported graph hook for integration tests that need the loss pieces
/// of a specific batch without an optimizer step.
pub fn batch_loss_graph(
    model: &VaeModel,
    heads: Option<&ClassifierHeads>,
    cfg: &TrainConfig,
    tape: &mut Tape,
    gv: &GraphVars,
    records: &[Record],
    eps: Option<Tensor>,
) -> Result<(crate::autodiff::Var, LossBreakdown), TrainError> {
    let tokens: Vec<TokenSequence> = records.iter().map(|r| r.tokens).collect();
    let digits: Vec<[u8; NUM_ATTRS]> = records.iter().map(|r| r.attrs).collect();
    let (mu, lv) = model.encode(tape, gv, &tokens)?;
    let z = model.reparameterize(tape, mu, lv, eps)?;
    let logits = model.decode(tape, gv, z)?;
    let elbo = elbo_terms(tape, &logits, &tokens, mu, lv)?;
    let reg = match cfg.method {
        Method::Beta => None,
        Method::Ivae => {
            let labels = label_columns(&digits);
            Some(classifier_loss(tape, heads.expect("heads"), gv, z, &labels)?)
        }
        Method::S2vae => Some(sign_alignment_loss(tape, z, &normalized_targets(&digits))?),
        Method::Arvae => Some(rank_alignment_loss(
            tape,
            z,
            &normalized_targets(&digits),
            cfg.delta,
        )?),
    };
    let total = compose_total(tape, elbo.recon, elbo.kl, reg, cfg.beta, cfg.gamma)?;
    let breakdown = LossBreakdown {
        total: tape.value(total).data()[0],
        recon: tape.value(elbo.recon).data()[0],
        kl: tape.value(elbo.kl).data()[0],
        reg: reg.map_or(0.0, |r| tape.value(r).data()[0]),
        beta: cfg.beta,
        gamma: cfg.gamma,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::DatasetConfig;

    fn tiny_cfg(method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            beta: 0.2,
            gamma: 1.0,
            delta: DEFAULT_DELTA,
            epochs: 3,
            warmup: 2,
            batch: 16,
            hyper: AdamHyper {
                lr: 3e-3,
                ..AdamHyper::default()
            },
            seed,
            vae: VaeConfig {
                latent: 9,
                step_hidden: 12,
                bar_hidden: 8,
                vocab: crate::melody::VOCAB,
            },
        }
    }

    fn small_dataset() -> Dataset {
        Dataset::build(&DatasetConfig {
            size: 300,
            seed: 91,
        })
        .unwrap()
    }

    #[test]
    fn every_method_reduces_loss_on_a_small_run() {
        let ds = small_dataset();
        for method in Method::ALL {
            let mut tr = Trainer::new(tiny_cfg(method, 7)).unwrap();
            let log = tr.run(&ds).unwrap();
            assert_eq!(log.len(), 3);
            assert!(
                log[2].total < log[0].total,
                "{method}: {:?} -> {:?}",
                log[0].total,
                log[2].total
            );
            for s in &log {
                assert!(s.total.is_finite());
                assert!((0.0..=1.0).contains(&s.val_acc));
                if method == Method::Beta {
                    assert_eq!(s.reg, 0.0);
                } else {
                    assert!(s.reg > 0.0);
                }
            }
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let ds = small_dataset();
        let run = || {
            let mut tr = Trainer::new(tiny_cfg(Method::Ivae, 11)).unwrap();
            let log = tr.run(&ds).unwrap();
            (log, snapshot(&tr))
        };
        let (log1, p1) = run();
        let (log2, p2) = run();
        assert_eq!(p1, p2);
        for (a, b) in log1.iter().zip(&log2) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
            assert_eq!(a.val_acc.to_bits(), b.val_acc.to_bits());
        }
    }

    fn snapshot(tr: &Trainer) -> Vec<u64> {
        let mut out = Vec::new();
        for id in 0..tr.model.params.len() {
            out.extend(tr.model.params.get(id).data().iter().map(|x| x.to_bits()));
        }
        out
    }

    #[test]
    fn resume_from_epoch_boundary_is_bit_exact() {
        let ds = small_dataset();
        let mut straight = Trainer::new(tiny_cfg(Method::Arvae, 13)).unwrap();
        let full_log = straight.run(&ds).unwrap();

        let mut first = Trainer::new(tiny_cfg(Method::Arvae, 13)).unwrap();
        first.run_epoch(&ds).unwrap();
        first.run_epoch(&ds).unwrap();
        // Simulated checkpoint restore: only persisted state crosses over.
        let mut resumed = Trainer::resume(
            first.cfg,
            first.model.clone(),
            first.heads.clone(),
            first.adam.clone(),
            first.epoch,
        );
        let tail = resumed.run(&ds).unwrap();
        assert_eq!(tail.len(), 1);
        assert_eq!(snapshot(&straight), snapshot(&resumed));
        assert_eq!(full_log[2].total.to_bits(), tail[0].total.to_bits());
    }

    #[test]
    fn seeds_change_trajectories_and_guards_fire() {
        let ds = small_dataset();
        let mut a = Trainer::new(tiny_cfg(Method::S2vae, 1)).unwrap();
        let mut b = Trainer::new(tiny_cfg(Method::S2vae, 2)).unwrap();
        a.run_epoch(&ds).unwrap();
        b.run_epoch(&ds).unwrap();
        assert_ne!(snapshot(&a), snapshot(&b));

        let mut cfg = tiny_cfg(Method::Arvae, 3);
        cfg.batch = 1;
        assert!(matches!(Trainer::new(cfg), Err(TrainError::BatchTooSmall(1))));

        let mut cfg = tiny_cfg(Method::S2vae, 3);
        cfg.vae.latent = 4;
        assert!(matches!(
            Trainer::new(cfg),
            Err(TrainError::LatentTooSmall { latent: 4, attrs: 9 })
        ));

        let mut cfg = tiny_cfg(Method::Beta, 4);
        cfg.batch = 100_000;
        let mut tr = Trainer::new(cfg).unwrap();
        assert!(matches!(
            tr.run_epoch(&ds),
            Err(TrainError::EmptyEpoch { .. })
        ));
    }

    #[test]
    fn kl_weight_holds_then_ramps_to_its_target() {
        let mut cfg = tiny_cfg(Method::Beta, 0);
        cfg.beta = 0.2;
        cfg.warmup = 10;
        for e in 0..5 {
            assert_eq!(cfg.effective_beta(e), 0.0);
        }
        assert!((cfg.effective_beta(5) - 0.04).abs() < 1e-12);
        assert!((cfg.effective_beta(8) - 0.16).abs() < 1e-12);
        assert_eq!(cfg.effective_beta(9), 0.2);
        assert_eq!(cfg.effective_beta(37), 0.2);

        cfg.warmup = 0;
        assert_eq!(cfg.effective_beta(0), 0.2);

        cfg.warmup = 1;
        assert_eq!(cfg.effective_beta(0), 0.2);
        assert_eq!(cfg.effective_beta(1), 0.2);
    }
}
