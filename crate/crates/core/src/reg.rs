//! Latent-attribute regularizers. Each one ties the supervised latent
//! coordinate `r_l = l` to attribute `l` of the training melody, in a
//! different way:
//!
//! * classifier heads — a per-attribute linear classifier on the single
//!   coordinate, trained jointly with the VAE (cross-entropy);
//! * sign alignment — binary cross-entropy between `sigmoid(z_l)` and the
//!   normalized attribute value;
//! * rank alignment — all B² batch pairs, penalizing disagreement between
//!   `tanh(δ·(z_il − z_jl))` and the sign of the attribute difference.

use crate::autodiff::{AdError, ParamSet, Tape, Tensor, Var};
use crate::melody::{normalize_digits, ATTR_NAMES, CARDINALITIES, NUM_ATTRS};
use crate::rng::DetRng;
use crate::vae::GraphVars;
use alloc::format;
use alloc::vec::Vec;

/// Slope of the tanh surrogate in the rank-alignment loss.
pub const DEFAULT_DELTA: f64 = 10.0;

/// Training objective variants. `Beta` is the unregularized baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Beta,
    Ivae,
    S2vae,
    Arvae,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Beta, Method::Ivae, Method::S2vae, Method::Arvae];

    /// Canonical name used in tables, file names, and the CLI.
    pub fn name(self) -> &'static str {
        match self {
            Method::Beta => "beta-vae",
            Method::Ivae => "i-vae",
            Method::S2vae => "s2-vae",
            Method::Arvae => "ar-vae",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "beta-vae" | "beta" | "betavae" => Some(Method::Beta),
            "i-vae" | "ivae" => Some(Method::Ivae),
            "s2-vae" | "s2vae" => Some(Method::S2vae),
            "ar-vae" | "arvae" => Some(Method::Arvae),
            _ => None,
        }
    }

    /// Whether this objective uses attribute supervision.
    pub fn supervised(self) -> bool {
        self != Method::Beta
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameter ids of the per-attribute classifier heads. The tensors live in
/// the model's own `ParamSet` so one optimizer state and one checkpoint
/// cover everything.
#[derive(Debug, Clone)]
pub struct ClassifierHeads {
    ids: Vec<(usize, usize)>,
    cards: Vec<usize>,
}

impl ClassifierHeads {
    /// Adds a `1×K_l` weight and bias per attribute to `params`.
    pub fn init(params: &mut ParamSet, rng: &mut DetRng) -> ClassifierHeads {
        let mut ids = Vec::with_capacity(NUM_ATTRS);
        let mut cards = Vec::with_capacity(NUM_ATTRS);
        for (name, &k) in ATTR_NAMES.iter().zip(CARDINALITIES.iter()) {
            ids.push(Self::add_head(params, name, k as usize, rng));
            cards.push(k as usize);
        }
        ClassifierHeads { ids, cards }
    }

    /// Heads for an arbitrary label alphabet; used by tests with synthetic
    /// attribute sets.
    pub fn init_with_cards(params: &mut ParamSet, cards: &[usize], rng: &mut DetRng) -> ClassifierHeads {
        let ids = cards
            .iter()
            .enumerate()
            .map(|(l, &k)| Self::add_head(params, &format!("a{l}"), k, rng))
            .collect();
        ClassifierHeads {
            ids,
            cards: cards.to_vec(),
        }
    }

    /// Relocates the standard attribute heads inside a restored `ParamSet`
    /// by name; `None` when any head is missing or misshaped (checkpoints
    /// of unsupervised runs carry none).
    pub fn find_in(params: &ParamSet) -> Option<ClassifierHeads> {
        let mut ids = Vec::with_capacity(NUM_ATTRS);
        let mut cards = Vec::with_capacity(NUM_ATTRS);
        for (name, &k) in ATTR_NAMES.iter().zip(CARDINALITIES.iter()) {
            let wid = params.id_of(&format!("cls.{name}.w"))?;
            let bid = params.id_of(&format!("cls.{name}.b"))?;
            let want = [1usize, k as usize];
            if params.get(wid).shape() != want || params.get(bid).shape() != want {
                return None;
            }
            ids.push((wid, bid));
            cards.push(k as usize);
        }
        Some(ClassifierHeads { ids, cards })
    }

    fn add_head(params: &mut ParamSet, name: &str, k: usize, rng: &mut DetRng) -> (usize, usize) {
        let lim = crate::math::sqrt(6.0 / (1 + k) as f64);
        let w = Tensor::from_vec(&[1, k], (0..k).map(|_| rng.uniform(-lim, lim)).collect()).unwrap();
        let wid = params.add(&format!("cls.{name}.w"), w);
        let bid = params.add(&format!("cls.{name}.b"), Tensor::zeros(&[1, k]));
        (wid, bid)
    }

    pub fn num_attrs(&self) -> usize {
        self.ids.len()
    }
}

/// Cross-entropy of one classifier head on a single latent coordinate.
pub fn head_loss(
    tape: &mut Tape,
    heads: &ClassifierHeads,
    gv: &GraphVars,
    z: Var,
    attr: usize,
    labels: &[u32],
) -> Result<Var, AdError> {
    let (wid, bid) = heads.ids[attr];
    let k = heads.cards[attr];
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(AdError::BadIndex {
            op: "head_loss",
            index: bad as usize,
            bound: k,
        });
    }
    let col = tape.slice_cols(z, attr, 1)?;
    let logits = tape.linear(col, gv.of(wid), gv.of(bid))?;
    let lsm = tape.log_softmax(logits)?;
    let picked = tape.pick_per_row(lsm, labels)?;
    let mean = tape.reduce_mean(picked);
    Ok(tape.affine(mean, -1.0, 0.0))
}

/// Mean classifier cross-entropy over all attributes.
pub fn classifier_loss(
    tape: &mut Tape,
    heads: &ClassifierHeads,
    gv: &GraphVars,
    z: Var,
    labels: &[Vec<u32>],
) -> Result<Var, AdError> {
    debug_assert_eq!(labels.len(), heads.num_attrs());
    let mut acc: Option<Var> = None;
    for attr in 0..heads.num_attrs() {
        let term = head_loss(tape, heads, gv, z, attr, &labels[attr])?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(tape.affine(acc.unwrap(), 1.0 / heads.num_attrs() as f64, 0.0))
}

/// Sign-alignment loss: mean over the batch and the supervised coordinates
/// of `softplus(z_l) − a_l·z_l`, which is the binary cross-entropy between
/// `sigmoid(z_l)` and the normalized attribute `a_l ∈ [0, 1]`.
pub fn sign_alignment_loss(
    tape: &mut Tape,
    z: Var,
    targets: &Tensor,
) -> Result<Var, AdError> {
    let n = targets.cols();
    let zr = tape.slice_cols(z, 0, n)?;
    let sp = tape.softplus(zr);
    let a = tape.leaf(targets.clone());
    let lin = tape.mul(a, zr)?;
    let diff = tape.sub(sp, lin)?;
    Ok(tape.reduce_mean(diff))
}

/// Rank-alignment loss for one attribute: over all B² ordered batch pairs,
/// mean |tanh(δ·(z_i − z_j)) − sgn(a_i − a_j)|. Equal attribute values make
/// the target 0, so ties penalize any latent separation.
pub fn rank_alignment_attr_loss(
    tape: &mut Tape,
    zcol: Var,
    attr_vals: &[f64],
    delta: f64,
) -> Result<Var, AdError> {
    let b = attr_vals.len();
    if b < 2 {
        return Err(AdError::ShapeMismatch {
            op: "rank_alignment_pairs",
            lhs: alloc::vec![b],
            rhs: alloc::vec![2],
        });
    }
    let ones_row = tape.leaf(Tensor::full(&[1, b], 1.0));
    let ones_col = tape.leaf(Tensor::full(&[b, 1], 1.0));
    let left = tape.matmul(zcol, ones_row)?;
    let zrow = tape.reshape(zcol, &[1, b])?;
    let right = tape.matmul(ones_col, zrow)?;
    let dz = tape.sub(left, right)?;
    let surrogate = {
        let scaled = tape.affine(dz, delta, 0.0);
        tape.tanh(scaled)
    };
    let mut signs = Vec::with_capacity(b * b);
    for &ai in attr_vals {
        for &aj in attr_vals {
            signs.push(crate::math::sgn(ai - aj));
        }
    }
    let target = tape.leaf(Tensor::from_vec(&[b, b], signs)?);
    let diff = tape.sub(surrogate, target)?;
    let dist = tape.abs(diff);
    Ok(tape.reduce_mean(dist))
}

/// Mean rank-alignment loss over all supervised coordinates.
pub fn rank_alignment_loss(
    tape: &mut Tape,
    z: Var,
    targets: &Tensor,
    delta: f64,
) -> Result<Var, AdError> {
    let (b, n) = targets.require_matrix("rank_alignment")?;
    let mut acc: Option<Var> = None;
    for attr in 0..n {
        let col = tape.slice_cols(z, attr, 1)?;
        let vals: Vec<f64> = (0..b).map(|i| targets.at(i, attr)).collect();
        let term = rank_alignment_attr_loss(tape, col, &vals, delta)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(tape.affine(acc.unwrap(), 1.0 / n as f64, 0.0))
}

/// Normalized attribute matrix (B×9) from per-record factor digits.
pub fn normalized_targets(digits: &[[u8; NUM_ATTRS]]) -> Tensor {
    let mut data = Vec::with_capacity(digits.len() * NUM_ATTRS);
    for row in digits {
        data.extend_from_slice(&normalize_digits(row));
    }
    Tensor::from_vec(&[digits.len(), NUM_ATTRS], data).unwrap()
}

/// Per-attribute label columns (for the classifier heads) from digits.
pub fn label_columns(digits: &[[u8; NUM_ATTRS]]) -> Vec<Vec<u32>> {
    (0..NUM_ATTRS)
        .map(|attr| digits.iter().map(|row| row[attr] as u32).collect())
        .collect()
}

/// total = (recon + β·kl) + γ·reg, associated exactly as logged.
pub fn compose_total(
    tape: &mut Tape,
    recon: Var,
    kl: Var,
    reg: Option<Var>,
    beta: f64,
    gamma: f64,
) -> Result<Var, AdError> {
    let weighted_kl = tape.affine(kl, beta, 0.0);
    let elbo = tape.add(recon, weighted_kl)?;
    match reg {
        None => Ok(elbo),
        Some(r) => {
            let weighted = tape.affine(r, gamma, 0.0);
            tape.add(elbo, weighted)
        }
    }
}
