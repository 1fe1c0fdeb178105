//! Checkpoint format ("VAEC"): the resolved training configuration, every
//! named parameter tensor in declaration order, and the full Adam state.
//! Restoring and continuing from a checkpoint is bit-exact because all
//! run randomness is derived from (seed, epoch, batch), never carried in
//! mutable RNG state.

use crate::error::{io_at, CliError, Result};
use crate::wire::*;
use gridtune_core::autodiff::{AdamHyper, AdamState, ParamSet, Tensor};
use gridtune_core::reg::{ClassifierHeads, Method};
use gridtune_core::train::{TrainConfig, Trainer};
use gridtune_core::vae::{VaeConfig, VaeModel};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"VAEC";
const VERSION: u16 = 1;

fn digest_of(cfg: &VaeConfig, method: Method) -> u64 {
    fnv1a64(format!("{};method={}", cfg.digest_string(), method.name()).as_bytes())
}

fn method_tag(m: Method) -> u8 {
    Method::ALL.iter().position(|&x| x == m).unwrap() as u8
}

fn write_tensor_data(w: &mut impl Write, t: &Tensor) -> std::io::Result<()> {
    for &x in t.data() {
        w_f64(w, x)?;
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, tr: &Trainer) -> Result<()> {
    let tmp = path.with_extension("vaec.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_at(&tmp))?);
        (|| -> std::io::Result<()> {
            let cfg = &tr.cfg;
            w.write_all(MAGIC)?;
            w_u16(&mut w, VERSION)?;
            w_u8(&mut w, method_tag(cfg.method))?;
            w_u64(&mut w, cfg.seed)?;
            w_u32(&mut w, tr.epoch)?;
            w_u32(&mut w, cfg.epochs)?;
            w_u32(&mut w, cfg.warmup)?;
            w_f64(&mut w, cfg.beta)?;
            w_f64(&mut w, cfg.gamma)?;
            w_f64(&mut w, cfg.delta)?;
            w_u64(&mut w, cfg.batch as u64)?;
            w_f64(&mut w, cfg.hyper.lr)?;
            w_f64(&mut w, cfg.hyper.beta1)?;
            w_f64(&mut w, cfg.hyper.beta2)?;
            w_f64(&mut w, cfg.hyper.eps)?;
            w_u32(&mut w, cfg.vae.latent as u32)?;
            w_u32(&mut w, cfg.vae.step_hidden as u32)?;
            w_u32(&mut w, cfg.vae.bar_hidden as u32)?;
            w_u32(&mut w, cfg.vae.vocab as u32)?;
            w_u64(&mut w, digest_of(&cfg.vae, cfg.method))?;

            let params = &tr.model.params;
            w_u32(&mut w, params.len() as u32)?;
            for (name, t) in params.iter() {
                w_u16(&mut w, name.len() as u16)?;
                w.write_all(name.as_bytes())?;
                w_u8(&mut w, t.shape().len() as u8)?;
                for &d in t.shape() {
                    w_u32(&mut w, d as u32)?;
                }
                write_tensor_data(&mut w, t)?;
            }
            w_u64(&mut w, tr.adam.t)?;
            for t in &tr.adam.m {
                write_tensor_data(&mut w, t)?;
            }
            for t in &tr.adam.v {
                write_tensor_data(&mut w, t)?;
            }
            w.flush()
        })()
        .map_err(io_at(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_at(path))
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut data = vec![0f64; n];
    let mut buf = [0u8; 8];
    for x in &mut data {
        r.read_exact(&mut buf)?;
        *x = f64::from_le_bytes(buf);
    }
    Ok(data)
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "checkpoint {} (run train first)",
            path.display()
        )));
    }
    let mut r = BufReader::new(File::open(path).map_err(io_at(path))?);
    let bad = |msg: String| CliError::format(path, msg);
    let io = |e: std::io::Error| CliError::format(path, format!("truncated or unreadable: {e}"));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let version = r_u16(&mut r).map_err(io)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let tag = r_u8(&mut r).map_err(io)?;
    let method = *Method::ALL
        .get(tag as usize)
        .ok_or_else(|| bad(format!("unknown method tag {tag}")))?;
    let seed = r_u64(&mut r).map_err(io)?;
    let epoch = r_u32(&mut r).map_err(io)?;
    let target_epochs = r_u32(&mut r).map_err(io)?;
    let warmup = r_u32(&mut r).map_err(io)?;
    let beta = r_f64(&mut r).map_err(io)?;
    let gamma = r_f64(&mut r).map_err(io)?;
    let delta = r_f64(&mut r).map_err(io)?;
    let batch = r_u64(&mut r).map_err(io)? as usize;
    let hyper = AdamHyper {
        lr: r_f64(&mut r).map_err(io)?,
        beta1: r_f64(&mut r).map_err(io)?,
        beta2: r_f64(&mut r).map_err(io)?,
        eps: r_f64(&mut r).map_err(io)?,
    };
    let vae = VaeConfig {
        latent: r_u32(&mut r).map_err(io)? as usize,
        step_hidden: r_u32(&mut r).map_err(io)? as usize,
        bar_hidden: r_u32(&mut r).map_err(io)? as usize,
        vocab: r_u32(&mut r).map_err(io)? as usize,
    };
    let digest = r_u64(&mut r).map_err(io)?;
    if digest != digest_of(&vae, method) {
        return Err(bad("architecture digest mismatch".into()));
    }

    let count = r_u32(&mut r).map_err(io)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r_u16(&mut r).map_err(io)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name)
            .map_err(|_| bad("parameter name is not UTF-8".into()))?;
        let ndim = r_u8(&mut r).map_err(io)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r_u32(&mut r).map_err(io)? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = read_f64s(&mut r, numel).map_err(io)?;
        let t = Tensor::from_vec(&shape, data)
            .map_err(|e| bad(format!("parameter {name}: {e}")))?;
        params.add(&name, t);
    }
    let t_step = r_u64(&mut r).map_err(io)?;
    let mut moments = |label: &str| -> Result<Vec<Tensor>> {
        (0..count)
            .map(|id| {
                let shape = params.get(id).shape().to_vec();
                let data = read_f64s(&mut r, params.get(id).numel()).map_err(io)?;
                Tensor::from_vec(&shape, data)
                    .map_err(|e| bad(format!("{label} moment {id}: {e}")))
            })
            .collect()
    };
    let m = moments("first")?;
    let v = moments("second")?;

    let model = VaeModel::from_params(vae, params)
        .map_err(|e| bad(format!("parameters do not match the stored architecture: {e}")))?;
    let heads = if method == Method::Ivae {
        Some(ClassifierHeads::find_in(&model.params).ok_or_else(|| {
            bad("classifier checkpoint is missing its attribute heads".into())
        })?)
    } else {
        None
    };
    let cfg = TrainConfig {
        method,
        beta,
        gamma,
        delta,
        epochs: target_epochs,
        warmup,
        batch,
        hyper,
        seed,
        vae,
    };
    let adam = AdamState {
        hyper,
        t: t_step,
        m,
        v,
    };
    Ok(Trainer::resume(cfg, model, heads, adam, epoch))
}

/// Everything except the epoch budget must match to resume a run; training
/// longer than before is legitimate.
pub fn resumable(stored: &TrainConfig, wanted: &TrainConfig) -> bool {
    let mut a = *stored;
    let mut b = *wanted;
    a.epochs = 0;
    b.epochs = 0;
    a == b
}
