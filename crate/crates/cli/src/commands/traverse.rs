//! `traverse`: decode the 6 interpolations of one attribute's latent
//! coordinate, starting from a test record's posterior mean, and render
//! them as a text piano-roll.

use super::{attr_index, control_err, load_run, numeric_err};
use crate::config::ExperimentConfig;
use crate::error::{io_at, CliError, Result};
use crate::pianoroll::render_traversal;
use gridtune_core::autodiff::Tensor;
use gridtune_core::control::{traverse, LatentDecoder};
use gridtune_core::melody::ATTR_NAMES;
use gridtune_core::reg::Method;
use gridtune_core::train::posterior_means_of;

pub fn run(
    cfg: &ExperimentConfig,
    method: Method,
    gamma: f64,
    seed: u64,
    attr_name: &str,
    base_index: usize,
) -> Result<()> {
    let attr = attr_index(attr_name)?;
    let ctx = load_run(cfg, method, gamma, seed)?;
    let test = ctx.ds.test();
    if base_index >= test.len() {
        return Err(CliError::Usage(format!(
            "base index {base_index} out of range (test split has {} records)",
            test.len()
        )));
    }
    let base = posterior_means_of(&ctx.model, &test[base_index..=base_index])
        .map_err(numeric_err)?;
    let d = base.cols();
    let dim = ctx.dims[attr];
    let sweep = traverse(&ctx.bounds, dim).map_err(control_err)?;

    let mut stacked = Vec::with_capacity(sweep.values.len() * d);
    for &v in &sweep.values {
        let mut row: Vec<f64> = base.data().to_vec();
        row[dim] = v;
        stacked.extend_from_slice(&row);
    }
    let zs = Tensor::from_vec(&[sweep.values.len(), d], stacked).map_err(numeric_err)?;
    let decoded = ctx.model.decode_tokens(&zs);
    let text = render_traversal(attr, dim, &sweep.values, &decoded, sweep.degenerate);

    let out = cfg
        .run_dir(method, gamma, seed)
        .join(format!("traverse-{}.txt", ATTR_NAMES[attr]));
    std::fs::write(&out, &text).map_err(io_at(&out))?;
    print!("{text}");
    println!("# written to {}", out.display());
    Ok(())
}
