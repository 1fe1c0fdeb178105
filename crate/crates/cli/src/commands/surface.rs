//! `surface`: scan one attribute over the plane spanned by its latent
//! coordinate and a free coordinate, emitting a table and an SVG heat-map
//! in which undefined read-backs stay blank.

use super::{attr_index, control_err, load_run};
use crate::config::ExperimentConfig;
use crate::error::{io_at, Result};
use crate::svg::surface_svg;
use gridtune_core::control::surface_scan;
use gridtune_core::melody::ATTR_NAMES;
use gridtune_core::reg::Method;
use gridtune_core::rng::{streams, DetRng};

pub fn run(
    cfg: &ExperimentConfig,
    method: Method,
    gamma: f64,
    seed: u64,
    attr_name: &str,
) -> Result<()> {
    let attr = attr_index(attr_name)?;
    let ctx = load_run(cfg, method, gamma, seed)?;
    let mut rng = DetRng::for_stream(seed, &[streams::SURFACE]);
    let grid = surface_scan(
        &ctx.model,
        attr,
        cfg.plot_dim(),
        cfg.grid,
        &ctx.bounds,
        &ctx.dims,
        &mut rng,
    )
    .map_err(control_err)?;

    let dir = cfg.run_dir(method, gamma, seed);
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let stem = format!("{}-{}-surface", method.name(), ATTR_NAMES[attr]);

    // Text table: rows sweep the supervised coordinate, '?' marks holes.
    let mut text = format!(
        "# attr={} dim_r={} dim_j={}\n# columns: z[{}] = {}\n",
        ATTR_NAMES[attr],
        grid.dim_r,
        grid.dim_j,
        grid.dim_j,
        grid.axis_j
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    for (r, &vr) in grid.axis_r.iter().enumerate() {
        text.push_str(&format!("{vr:+.3}"));
        for c in 0..grid.axis_j.len() {
            match grid.cell(r, c) {
                Some(d) => text.push_str(&format!("\t{d}")),
                None => text.push_str("\t?"),
            }
        }
        text.push('\n');
    }
    let tsv_path = dir.join(format!("{stem}.tsv"));
    std::fs::write(&tsv_path, text).map_err(io_at(&tsv_path))?;

    let svg_path = dir.join(format!("{stem}.svg"));
    std::fs::write(&svg_path, surface_svg(&grid)).map_err(io_at(&svg_path))?;
    println!(
        "surface {}: {}x{} cells, {} defined -> {}",
        ATTR_NAMES[attr],
        grid.axis_r.len(),
        grid.axis_j.len(),
        grid.cells.iter().filter(|c| c.is_some()).count(),
        svg_path.display()
    );
    Ok(())
}
