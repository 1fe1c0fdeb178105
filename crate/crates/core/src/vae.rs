//! The sequence VAE: a two-level (bar / step) GRU encoder and decoder over
//! 16-token melodies, with the ELBO pieces used by every training method.
//!
//! Latent dimension `r_l = l` is supervised for attribute `l` (the first
//! nine coordinates); the map is fixed so reports line up across runs.

use crate::autodiff::{AdError, ParamSet, Tape, Tensor, Var};
use crate::melody::{TokenSequence, NUM_ATTRS, VOCAB};
use crate::rng::DetRng;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub const SEQ_LEN: usize = TokenSequence::LEN;
pub const BARS: usize = 2;
pub const STEPS_PER_BAR: usize = SEQ_LEN / BARS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaeConfig {
    /// Latent dimensionality D.
    pub latent: usize,
    /// Hidden size of the step-level GRU cells.
    pub step_hidden: usize,
    /// Hidden size of the bar-level GRU cells.
    pub bar_hidden: usize,
    /// Token vocabulary size.
    pub vocab: usize,
}

impl Default for VaeConfig {
    fn default() -> VaeConfig {
        VaeConfig {
            latent: 32,
            step_hidden: 64,
            bar_hidden: 32,
            vocab: VOCAB,
        }
    }
}

impl VaeConfig {
    /// Structural sanity; supervised training additionally needs
    /// `latent ≥ 9` so every attribute owns a coordinate (checked by the
    /// trainer, not here — tiny models are legitimate for gradient tests).
    pub fn validate(&self) -> Result<(), AdError> {
        if self.latent == 0 || self.step_hidden == 0 || self.bar_hidden == 0 {
            return Err(AdError::BadIndex {
                op: "vae_config",
                index: 0,
                bound: 1,
            });
        }
        if self.vocab < 2 {
            return Err(AdError::BadIndex {
                op: "vae_config_vocab",
                index: self.vocab,
                bound: 2,
            });
        }
        Ok(())
    }

    /// Digest string capturing everything a checkpoint must agree on.
    pub fn digest_string(&self) -> String {
        format!(
            "latent={};step={};bar={};vocab={}",
            self.latent, self.step_hidden, self.bar_hidden, self.vocab
        )
    }
}

/// Parameter ids of one GRU cell (packed gate layout [r|z|n]).
#[derive(Debug, Clone, Copy)]
struct GruIds {
    wx: usize,
    bx: usize,
    wh: usize,
    bh: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinearIds {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    pub cfg: VaeConfig,
    pub params: ParamSet,
    enc_step: GruIds,
    enc_bar: GruIds,
    enc_mu: LinearIds,
    enc_lv: LinearIds,
    dec_init: LinearIds,
    dec_bar: GruIds,
    dec_step0: LinearIds,
    dec_step: GruIds,
    dec_step_z: usize,
    dec_out: LinearIds,
}

/// Tape handles for every parameter of one forward pass, indexed by
/// parameter id.
pub struct GraphVars {
    vars: Vec<Var>,
}

impl GraphVars {
    pub fn of(&self, id: usize) -> Var {
        self.vars[id]
    }

    /// Wraps externally created leaves; ids must follow `ParamSet` order.
    pub fn from_vars(vars: Vec<Var>) -> GraphVars {
        GraphVars { vars }
    }
}

fn xavier(shape: [usize; 2], rng: &mut DetRng) -> Tensor {
    let lim = crate::math::sqrt(6.0 / (shape[0] + shape[1]) as f64);
    let data = (0..shape[0] * shape[1])
        .map(|_| rng.uniform(-lim, lim))
        .collect();
    Tensor::from_vec(&shape, data).unwrap()
}

/// Declaration-order parameter layout of one configuration: the expected
/// (name, shape, is-bias) sequence plus the id structs that index into it.
/// Shared by fresh initialization and checkpoint restore so both agree.
struct Layout {
    entries: Vec<(String, [usize; 2], bool)>,
    enc_step: GruIds,
    enc_bar: GruIds,
    enc_mu: LinearIds,
    enc_lv: LinearIds,
    dec_init: LinearIds,
    dec_bar: GruIds,
    dec_step0: LinearIds,
    dec_step: GruIds,
    dec_step_z: usize,
    dec_out: LinearIds,
}

struct LayoutBuilder {
    entries: Vec<(String, [usize; 2], bool)>,
}

impl LayoutBuilder {
    fn slot(&mut self, name: String, shape: [usize; 2], bias: bool) -> usize {
        self.entries.push((name, shape, bias));
        self.entries.len() - 1
    }

    fn gru(&mut self, name: &str, input: usize, hidden: usize) -> GruIds {
        GruIds {
            wx: self.slot(format!("{name}.wx"), [input, 3 * hidden], false),
            bx: self.slot(format!("{name}.bx"), [1, 3 * hidden], true),
            wh: self.slot(format!("{name}.wh"), [hidden, 3 * hidden], false),
            bh: self.slot(format!("{name}.bh"), [1, 3 * hidden], true),
        }
    }

    fn lin(&mut self, name: &str, input: usize, out: usize) -> LinearIds {
        LinearIds {
            w: self.slot(format!("{name}.w"), [input, out], false),
            b: self.slot(format!("{name}.b"), [1, out], true),
        }
    }
}

fn layout(cfg: &VaeConfig) -> Layout {
    let (d, h, hb, v) = (cfg.latent, cfg.step_hidden, cfg.bar_hidden, cfg.vocab);
    let mut b = LayoutBuilder {
        entries: Vec::new(),
    };
    let enc_step = b.gru("enc.step", v, h);
    let enc_bar = b.gru("enc.bar", h, hb);
    let enc_mu = b.lin("enc.mu", hb, d);
    let enc_lv = b.lin("enc.lv", hb, d);
    let dec_init = b.lin("dec.init", d, hb);
    let dec_bar = b.gru("dec.bar", d, hb);
    let dec_step0 = b.lin("dec.step0", hb, h);
    let dec_step = b.gru("dec.step", hb, h);
    // Skip connection: z feeds the step-level gates directly instead of
    // only through the bar chain.
    let dec_step_z = b.slot("dec.step.wz".into(), [d, 3 * h], false);
    let dec_out = b.lin("dec.out", h, v);
    Layout {
        entries: b.entries,
        enc_step,
        enc_bar,
        enc_mu,
        enc_lv,
        dec_init,
        dec_bar,
        dec_step0,
        dec_step,
        dec_step_z,
        dec_out,
    }
}

impl VaeModel {
    /// Fresh model with Xavier-uniform weights and zero biases, drawn in
    /// declaration order from `rng`.
    pub fn init(cfg: VaeConfig, rng: &mut DetRng) -> Result<VaeModel, AdError> {
        cfg.validate()?;
        let lay = layout(&cfg);
        let mut p = ParamSet::new();
        for (name, shape, bias) in &lay.entries {
            let t = if *bias {
                Tensor::zeros(shape)
            } else {
                xavier(*shape, rng)
            };
            p.add(name, t);
        }
        Ok(Self::assemble(cfg, p, lay))
    }

    /// Rebuilds a model around restored parameters, verifying the layout
    /// (names and shapes in declaration order) matches `cfg`. Parameters
    /// beyond the architecture block — classifier heads — are permitted.
    pub fn from_params(cfg: VaeConfig, params: ParamSet) -> Result<VaeModel, AdError> {
        cfg.validate()?;
        let lay = layout(&cfg);
        if params.len() < lay.entries.len() {
            return Err(AdError::BadIndex {
                op: "restore_params",
                index: params.len(),
                bound: lay.entries.len(),
            });
        }
        for (id, (name, shape, _)) in lay.entries.iter().enumerate() {
            if params.name(id) != name {
                return Err(AdError::BadIndex {
                    op: "restore_param_name",
                    index: id,
                    bound: lay.entries.len(),
                });
            }
            if params.get(id).shape() != *shape {
                return Err(AdError::ShapeMismatch {
                    op: "restore_params",
                    lhs: params.get(id).shape().to_vec(),
                    rhs: shape.to_vec(),
                });
            }
        }
        Ok(Self::assemble(cfg, params, lay))
    }

    fn assemble(cfg: VaeConfig, params: ParamSet, lay: Layout) -> VaeModel {
        VaeModel {
            cfg,
            params,
            enc_step: lay.enc_step,
            enc_bar: lay.enc_bar,
            enc_mu: lay.enc_mu,
            enc_lv: lay.enc_lv,
            dec_init: lay.dec_init,
            dec_bar: lay.dec_bar,
            dec_step0: lay.dec_step0,
            dec_step: lay.dec_step,
            dec_step_z: lay.dec_step_z,
            dec_out: lay.dec_out,
        }
    }

    /// Supervised latent coordinate for each attribute. Only meaningful for
    /// models with `latent ≥ 9`; the trainer enforces that before use.
    pub fn reg_dims(&self) -> [usize; NUM_ATTRS] {
        debug_assert!(self.cfg.latent >= NUM_ATTRS);
        core::array::from_fn(|l| l)
    }

    /// Puts every parameter on the tape as a leaf; gradients are collected
    /// back through the returned handles.
    pub fn inject(&self, tape: &mut Tape) -> GraphVars {
        GraphVars {
            vars: (0..self.params.len())
                .map(|id| tape.leaf(self.params.get(id).clone()))
                .collect(),
        }
    }

    fn gru_step(
        &self,
        tape: &mut Tape,
        xg: Var,
        h: Var,
        ids: GruIds,
        gv: &GraphVars,
        hidden: usize,
    ) -> Result<Var, AdError> {
        let hg = tape.matmul(h, gv.of(ids.wh))?;
        let hg = tape.add_row(hg, gv.of(ids.bh))?;
        let xr = tape.slice_cols(xg, 0, hidden)?;
        let xz = tape.slice_cols(xg, hidden, hidden)?;
        let xn = tape.slice_cols(xg, 2 * hidden, hidden)?;
        let hr = tape.slice_cols(hg, 0, hidden)?;
        let hz = tape.slice_cols(hg, hidden, hidden)?;
        let hn = tape.slice_cols(hg, 2 * hidden, hidden)?;
        let r = {
            let s = tape.add(xr, hr)?;
            tape.sigmoid(s)
        };
        let z = {
            let s = tape.add(xz, hz)?;
            tape.sigmoid(s)
        };
        let n = {
            let gated = tape.mul(r, hn)?;
            let s = tape.add(xn, gated)?;
            tape.tanh(s)
        };
        // h' = (1 − z)∘n + z∘h
        let keep = tape.mul(z, h)?;
        let inv = tape.affine(z, -1.0, 1.0);
        let new = tape.mul(inv, n)?;
        tape.add(new, keep)
    }

    /// Posterior parameters (mu, log_var), each B×D.
    pub fn encode(
        &self,
        tape: &mut Tape,
        gv: &GraphVars,
        batch: &[TokenSequence],
    ) -> Result<(Var, Var), AdError> {
        let b = batch.len();
        let v = self.cfg.vocab;
        for t in batch {
            if let Some(&bad) = t.0.iter().find(|&&id| id as usize >= v) {
                return Err(AdError::BadIndex {
                    op: "encode",
                    index: bad as usize,
                    bound: v,
                });
            }
        }
        let h = self.cfg.step_hidden;
        let hb = self.cfg.bar_hidden;
        let mut bar_states = Vec::with_capacity(BARS);
        for bar in 0..BARS {
            let mut state = tape.leaf(Tensor::zeros(&[b, h]));
            for t in 0..STEPS_PER_BAR {
                let ids: Vec<u32> = batch
                    .iter()
                    .map(|s| s.0[bar * STEPS_PER_BAR + t] as u32)
                    .collect();
                let gathered = tape.gather_rows(gv.of(self.enc_step.wx), &ids)?;
                let xg = tape.add_row(gathered, gv.of(self.enc_step.bx))?;
                state = self.gru_step(tape, xg, state, self.enc_step, gv, h)?;
            }
            bar_states.push(state);
        }
        let mut bar_h = tape.leaf(Tensor::zeros(&[b, hb]));
        for state in bar_states {
            let xg = tape.linear(state, gv.of(self.enc_bar.wx), gv.of(self.enc_bar.bx))?;
            bar_h = self.gru_step(tape, xg, bar_h, self.enc_bar, gv, hb)?;
        }
        let mu = tape.linear(bar_h, gv.of(self.enc_mu.w), gv.of(self.enc_mu.b))?;
        let lv = tape.linear(bar_h, gv.of(self.enc_lv.w), gv.of(self.enc_lv.b))?;
        Ok((mu, lv))
    }

    /// z = mu + exp(log_var/2)∘eps; with no noise, z = mu (deterministic
    /// evaluation).
    pub fn reparameterize(
        &self,
        tape: &mut Tape,
        mu: Var,
        lv: Var,
        eps: Option<Tensor>,
    ) -> Result<Var, AdError> {
        match eps {
            None => Ok(mu),
            Some(e) => {
                let half = tape.affine(lv, 0.5, 0.0);
                let sigma = tape.exp(half);
                let noise = tape.leaf(e);
                let scaled = tape.mul(sigma, noise)?;
                tape.add(mu, scaled)
            }
        }
    }

    /// Per-step unnormalized logits, 16 matrices of shape B×V.
    pub fn decode(
        &self,
        tape: &mut Tape,
        gv: &GraphVars,
        z: Var,
    ) -> Result<Vec<Var>, AdError> {
        let h = self.cfg.step_hidden;
        let hb = self.cfg.bar_hidden;
        let mut bar_h = {
            let a = tape.linear(z, gv.of(self.dec_init.w), gv.of(self.dec_init.b))?;
            tape.tanh(a)
        };
        // The bar-level cell consumes z at every bar, so the gate input is
        // built once and reused; likewise the skip term feeding the step
        // gates.
        let bar_xg = tape.linear(z, gv.of(self.dec_bar.wx), gv.of(self.dec_bar.bx))?;
        let step_zg = tape.matmul(z, gv.of(self.dec_step_z))?;
        let mut logits = Vec::with_capacity(SEQ_LEN);
        for _bar in 0..BARS {
            bar_h = self.gru_step(tape, bar_xg, bar_h, self.dec_bar, gv, hb)?;
            let mut step_h = {
                let a = tape.linear(bar_h, gv.of(self.dec_step0.w), gv.of(self.dec_step0.b))?;
                tape.tanh(a)
            };
            // Constant conditioning within the bar: one gate-input matmul
            // shared by all 8 steps.
            let step_xg = {
                let a = tape.linear(bar_h, gv.of(self.dec_step.wx), gv.of(self.dec_step.bx))?;
                tape.add(a, step_zg)?
            };
            for _t in 0..STEPS_PER_BAR {
                step_h = self.gru_step(tape, step_xg, step_h, self.dec_step, gv, h)?;
                logits.push(tape.linear(step_h, gv.of(self.dec_out.w), gv.of(self.dec_out.b))?);
            }
        }
        Ok(logits)
    }

    /// Posterior means for an arbitrary number of sequences, encoded in
    /// fixed-size chunks. Rows are independent under the matmul kernel, so
    /// the result does not depend on the chunk size.
    pub fn posterior_means(
        &self,
        tokens: &[TokenSequence],
        chunk: usize,
    ) -> Result<Tensor, AdError> {
        let d = self.cfg.latent;
        let mut data = Vec::with_capacity(tokens.len() * d);
        for batch in tokens.chunks(chunk.max(1)) {
            let mut tape = Tape::new();
            let gv = self.inject(&mut tape);
            let (mu, _) = self.encode(&mut tape, &gv, batch)?;
            data.extend_from_slice(tape.value(mu).data());
        }
        Tensor::from_vec(&[tokens.len(), d], data)
    }

    /// Greedy token readout: per-step argmax over the vocabulary (lowest id
    /// wins ties).
    pub fn tokens_from_logits(&self, tape: &Tape, logits: &[Var]) -> Vec<TokenSequence> {
        let b = tape.value(logits[0]).rows();
        let v = self.cfg.vocab;
        let mut out = alloc::vec![TokenSequence([0u8; SEQ_LEN]); b];
        for (t, &lv) in logits.iter().enumerate() {
            let data = tape.value(lv).data();
            for (i, seq) in out.iter_mut().enumerate() {
                let row = &data[i * v..(i + 1) * v];
                let mut best = 0usize;
                for (j, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = j;
                    }
                }
                seq.0[t] = best as u8;
            }
        }
        out
    }

    /// Fraction of (sample, step) cells where the argmax token matches.
    pub fn reconstruction_accuracy(
        &self,
        tape: &Tape,
        logits: &[Var],
        batch: &[TokenSequence],
    ) -> f64 {
        let decoded = self.tokens_from_logits(tape, logits);
        let mut hits = 0usize;
        for (d, t) in decoded.iter().zip(batch) {
            hits += d.0.iter().zip(t.0.iter()).filter(|(a, b)| a == b).count();
        }
        hits as f64 / (batch.len() * SEQ_LEN) as f64
    }
}

/// Graph nodes for the ELBO pieces of one batch.
pub struct ElboVars {
    /// Mean per-step categorical cross-entropy.
    pub recon: Var,
    /// Gaussian KL to N(0, I): summed over dimensions, mean over batch.
    pub kl: Var,
}

/// Builds reconstruction and KL nodes from decoder logits and the posterior.
pub fn elbo_terms(
    tape: &mut Tape,
    logits: &[Var],
    batch: &[TokenSequence],
    mu: Var,
    lv: Var,
) -> Result<ElboVars, AdError> {
    let b = batch.len();
    // Cross-entropy accumulated per step: Σ_t log p(x_t); recon is the
    // negative mean over all (sample, step) cells.
    let mut acc: Option<Var> = None;
    for (t, &logit) in logits.iter().enumerate() {
        let targets: Vec<u32> = batch.iter().map(|s| s.0[t] as u32).collect();
        let lsm = tape.log_softmax(logit)?;
        let picked = tape.pick_per_row(lsm, &targets)?;
        acc = Some(match acc {
            None => picked,
            Some(a) => tape.add(a, picked)?,
        });
    }
    let summed = tape.reduce_mean(acc.unwrap());
    let recon = tape.affine(summed, -1.0 / logits.len() as f64, 0.0);

    // KL(q ‖ N(0,I)) = −½ Σ_d (1 + lv − mu² − e^lv), averaged over the batch.
    let lv1 = tape.affine(lv, 1.0, 1.0);
    let mu2 = tape.mul(mu, mu)?;
    let elv = tape.exp(lv);
    let t1 = tape.sub(lv1, mu2)?;
    let t2 = tape.sub(t1, elv)?;
    let total = tape.reduce_sum(t2);
    let kl = tape.affine(total, -0.5 / b as f64, 0.0);
    Ok(ElboVars { recon, kl })
}

/// Scalar loss terms of one step, recorded for logs and tables. The pieces
/// recombine exactly: total = (recon + β·kl) + γ·reg in this association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub reg: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossBreakdown {
    pub fn recombines(&self) -> bool {
        (self.recon + self.beta * self.kl) + self.gamma * self.reg == self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::{generate, spec_from_index};

    fn tiny() -> VaeConfig {
        VaeConfig {
            latent: 9,
            step_hidden: 6,
            bar_hidden: 5,
            vocab: VOCAB,
        }
    }

    fn batch(n: usize) -> Vec<TokenSequence> {
        (0..n)
            .map(|i| generate(&spec_from_index((i * 9173) as u32 % crate::melody::GRID_SIZE).unwrap()))
            .collect()
    }

    #[test]
    fn config_rejects_degenerate_shapes() {
        let mut cfg = tiny();
        cfg.latent = 0;
        assert!(cfg.validate().is_err());
        cfg = tiny();
        cfg.vocab = 1;
        assert!(cfg.validate().is_err());
        // Small-but-positive latent spaces are valid models; only the
        // supervised trainer needs one coordinate per attribute.
        cfg = tiny();
        cfg.latent = 4;
        assert!(cfg.validate().is_ok());
        assert!(VaeConfig::default().validate().is_ok());
    }

    #[test]
    fn restored_params_reproduce_the_model_bit_for_bit() {
        let built = VaeModel::init(tiny(), &mut DetRng::new(21)).unwrap();
        // Extra trailing parameters (classifier heads) must be tolerated.
        let mut params = built.params.clone();
        params.add("cls.fake.w", Tensor::zeros(&[1, 3]));
        let restored = VaeModel::from_params(tiny(), params).unwrap();

        let xs = batch(3);
        let out = |m: &VaeModel| {
            let mut tape = Tape::new();
            let gv = m.inject(&mut tape);
            let (mu, _) = m.encode(&mut tape, &gv, &xs).unwrap();
            let logits = m.decode(&mut tape, &gv, mu).unwrap();
            tape.value(logits[7]).data().to_vec()
        };
        let (a, b) = (out(&built), out(&restored));
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

        // A config disagreeing with the stored shapes is rejected.
        let mut other = tiny();
        other.step_hidden += 1;
        assert!(VaeModel::from_params(other, built.params.clone()).is_err());
        assert!(VaeModel::from_params(tiny(), ParamSet::new()).is_err());
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(3)).unwrap();
        let xs = batch(5);
        let run = || {
            let mut tape = Tape::new();
            let gv = model.inject(&mut tape);
            let (mu, lv) = model.encode(&mut tape, &gv, &xs).unwrap();
            (
                tape.value(mu).data().to_vec(),
                tape.value(lv).data().to_vec(),
                tape.value(mu).shape().to_vec(),
            )
        };
        let (mu1, lv1, shape) = run();
        let (mu2, lv2, _) = run();
        assert_eq!(shape, vec![5, 9]);
        assert_eq!(mu1, mu2);
        assert_eq!(lv1, lv2);
    }

    #[test]
    fn encode_rejects_out_of_vocab_tokens() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(3)).unwrap();
        let mut xs = batch(2);
        xs[1].0[7] = VOCAB as u8;
        let mut tape = Tape::new();
        let gv = model.inject(&mut tape);
        assert!(matches!(
            model.encode(&mut tape, &gv, &xs),
            Err(AdError::BadIndex { op: "encode", .. })
        ));
    }

    #[test]
    fn decode_shapes_and_determinism() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(4)).unwrap();
        let mut tape = Tape::new();
        let gv = model.inject(&mut tape);
        let z = tape.leaf(Tensor::full(&[3, 9], 0.1));
        let logits = model.decode(&mut tape, &gv, z).unwrap();
        assert_eq!(logits.len(), SEQ_LEN);
        for &l in &logits {
            assert_eq!(tape.value(l).shape(), &[3, VOCAB]);
        }
        let logits2 = model.decode(&mut tape, &gv, z).unwrap();
        for (&a, &b) in logits.iter().zip(&logits2) {
            assert_eq!(tape.value(a).data(), tape.value(b).data());
        }
    }

    #[test]
    fn reparameterize_mean_and_eval_mode() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(5)).unwrap();
        let mut tape = Tape::new();
        let mu = tape.leaf(Tensor::full(&[1, 9], 0.7));
        let lv = tape.leaf(Tensor::zeros(&[1, 9])); // sigma = 1
        let z_eval = model.reparameterize(&mut tape, mu, lv, None).unwrap();
        assert_eq!(tape.value(z_eval).data(), tape.value(mu).data());

        // Monte-Carlo mean of z over many draws approaches mu at 3σ/√n.
        let mut rng = DetRng::new(99);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let eps = Tensor::from_vec(&[1, 9], (0..9).map(|_| rng.normal()).collect()).unwrap();
            let z = model.reparameterize(&mut tape, mu, lv, Some(eps)).unwrap();
            sum += tape.value(z).data()[0];
        }
        let err = (sum / n as f64 - 0.7).abs();
        assert!(err < 3.0 / (n as f64).sqrt(), "err {err}");
    }

    #[test]
    fn kl_zero_at_standard_posterior_and_positive_elsewhere() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(6)).unwrap();
        let xs = batch(3);
        let mut tape = Tape::new();
        let gv = model.inject(&mut tape);
        let mu = tape.leaf(Tensor::zeros(&[3, 9]));
        let lv = tape.leaf(Tensor::zeros(&[3, 9]));
        let z = model.reparameterize(&mut tape, mu, lv, None).unwrap();
        let logits = model.decode(&mut tape, &gv, z).unwrap();
        let elbo = elbo_terms(&mut tape, &logits, &xs, mu, lv).unwrap();
        assert_eq!(tape.value(elbo.kl).data()[0], 0.0);

        let mu2 = tape.leaf(Tensor::full(&[3, 9], 0.3));
        let lv2 = tape.leaf(Tensor::full(&[3, 9], -0.2));
        let elbo2 = elbo_terms(&mut tape, &logits, &xs, mu2, lv2).unwrap();
        assert!(tape.value(elbo2.kl).data()[0] > 0.0);
    }

    #[test]
    fn uniform_logits_give_ln_vocab_recon() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(7)).unwrap();
        let xs = batch(4);
        let mut tape = Tape::new();
        let mu = tape.leaf(Tensor::zeros(&[4, 9]));
        let lv = tape.leaf(Tensor::zeros(&[4, 9]));
        let logits: Vec<Var> = (0..SEQ_LEN)
            .map(|_| tape.leaf(Tensor::full(&[4, VOCAB], 1.3)))
            .collect();
        let elbo = elbo_terms(&mut tape, &logits, &xs, mu, lv).unwrap();
        let want = crate::math::ln(VOCAB as f64);
        let got = tape.value(elbo.recon).data()[0];
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        let _ = model;
    }

    #[test]
    fn perfect_logits_give_perfect_accuracy() {
        let model = VaeModel::init(tiny(), &mut DetRng::new(8)).unwrap();
        let xs = batch(3);
        let mut tape = Tape::new();
        let logits: Vec<Var> = (0..SEQ_LEN)
            .map(|t| {
                let mut m = Tensor::zeros(&[3, VOCAB]);
                for (i, x) in xs.iter().enumerate() {
                    m.data_mut()[i * VOCAB + x.0[t] as usize] = 10.0;
                }
                tape.leaf(m)
            })
            .collect();
        assert_eq!(model.reconstruction_accuracy(&tape, &logits, &xs), 1.0);
        let toks = model.tokens_from_logits(&tape, &logits);
        assert_eq!(toks, xs);

        // Shift every argmax off-target: accuracy 0.
        let wrong: Vec<Var> = (0..SEQ_LEN)
            .map(|t| {
                let mut m = Tensor::zeros(&[3, VOCAB]);
                for (i, x) in xs.iter().enumerate() {
                    let off = (x.0[t] as usize + 1) % VOCAB;
                    m.data_mut()[i * VOCAB + off] = 10.0;
                }
                tape.leaf(m)
            })
            .collect();
        assert_eq!(model.reconstruction_accuracy(&tape, &wrong, &xs), 0.0);
    }

    #[test]
    fn breakdown_recombines_bit_exactly() {
        let b = LossBreakdown {
            total: (1.37 + 0.2 * 4.21) + 10.0 * 0.033,
            recon: 1.37,
            kl: 4.21,
            reg: 0.033,
            beta: 0.2,
            gamma: 10.0,
        };
        assert!(b.recombines());
    }
}
