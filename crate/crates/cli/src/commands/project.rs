//! `project`: drop every test record onto the (r_attr, j) latent plane
//! with its ground-truth label — the data-distribution companion to the
//! surface scan.

use super::{attr_index, control_err, load_run, numeric_err};
use crate::config::ExperimentConfig;
use crate::error::{io_at, Result};
use gridtune_core::control::latent_projection;
use gridtune_core::melody::{ATTR_NAMES, NUM_ATTRS};
use gridtune_core::reg::Method;
use gridtune_core::train::posterior_means_of;

pub fn run(
    cfg: &ExperimentConfig,
    method: Method,
    gamma: f64,
    seed: u64,
    attr_name: &str,
) -> Result<()> {
    let attr = attr_index(attr_name)?;
    let ctx = load_run(cfg, method, gamma, seed)?;
    let test = ctx.ds.test();
    let test_mu = posterior_means_of(&ctx.model, test).map_err(numeric_err)?;
    let digits: Vec<[u8; NUM_ATTRS]> = test.iter().map(|r| r.attrs).collect();
    let points = latent_projection(&test_mu, &digits, attr, cfg.plot_dim(), &ctx.dims)
        .map_err(control_err)?;

    let dir = cfg.run_dir(method, gamma, seed);
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let path = dir.join(format!("{}-{}-projection.tsv", method.name(), ATTR_NAMES[attr]));
    let mut text = format!(
        "# attr={} dim_r={} dim_j={}\nz_r\tz_j\tlabel\n",
        ATTR_NAMES[attr],
        ctx.dims[attr],
        cfg.plot_dim()
    );
    for p in &points {
        text.push_str(&format!("{:.6}\t{:.6}\t{}\n", p.x, p.y, p.label));
    }
    std::fs::write(&path, text).map_err(io_at(&path))?;
    println!("project {}: {} points -> {}", ATTR_NAMES[attr], points.len(), path.display());
    Ok(())
}
