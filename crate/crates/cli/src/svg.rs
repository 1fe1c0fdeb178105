//! Minimal hand-rolled SVG heat-maps. Undefined cells draw nothing, so
//! holes show through as blank background — the point of the plots.

use gridtune_core::control::SurfaceGrid;
use gridtune_core::melody::{ATTR_NAMES, CARDINALITIES};

const CELL: usize = 28;
const ML: usize = 110;
const MT: usize = 56;
const PAD: usize = 18;

pub struct Heatmap {
    pub title: String,
    pub rows: usize,
    pub cols: usize,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Row-major values in [0, 1]; `None` renders blank.
    pub cells: Vec<Option<f64>>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let c0 = (247.0, 251.0, 255.0);
    let c1 = (8.0, 48.0, 107.0);
    let r = (c0.0 + (c1.0 - c0.0) * v) as u8;
    let g = (c0.1 + (c1.1 - c0.1) * v) as u8;
    let b = (c0.2 + (c1.2 - c0.2) * v) as u8;
    format!("rgb({r},{g},{b})")
}

pub fn heatmap_size(rows: usize, cols: usize) -> (usize, usize) {
    (ML + cols * CELL + PAD, MT + rows * CELL + PAD + 40)
}

pub fn render(h: &Heatmap) -> String {
    assert_eq!(h.cells.len(), h.rows * h.cols);
    let (w, ht) = heatmap_size(h.rows, h.cols);
    let mut s = String::with_capacity(4096);
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{ht}\" \
         font-family=\"monospace\" font-size=\"11\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{w}\" height=\"{ht}\" fill=\"white\"/>\n<text x=\"{ML}\" y=\"20\" \
         font-size=\"13\">{}</text>\n",
        esc(&h.title)
    ));
    for row in 0..h.rows {
        let y = MT + row * CELL;
        for col in 0..h.cols {
            let x = ML + col * CELL;
            if let Some(v) = h.cells[row * h.cols + col] {
                s.push_str(&format!(
                    "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                     fill=\"{}\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n",
                    ramp(v)
                ));
            }
        }
        if let Some(lab) = h.row_labels.get(row) {
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                ML - 6,
                y + CELL / 2 + 4,
                esc(lab)
            ));
        }
    }
    let grid_bottom = MT + h.rows * CELL;
    for (col, lab) in h.col_labels.iter().enumerate() {
        let x = ML + col * CELL + CELL / 2;
        let y = grid_bottom + 12;
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\" transform=\"rotate(-45 {x} {y})\">{}</text>\n",
            esc(lab)
        ));
    }
    s.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        h.cols * CELL,
        h.rows * CELL
    ));
    s.push_str("</svg>\n");
    s
}

/// Latent surface scan: rows sweep the supervised coordinate, columns the
/// free one; cell shade is the read-back digit scaled by its cardinality.
pub fn surface_svg(g: &SurfaceGrid) -> String {
    let card = CARDINALITIES[g.attr] as f64;
    let cells = g
        .cells
        .iter()
        .map(|c| c.map(|d| if card > 1.0 { d as f64 / (card - 1.0) } else { 0.0 }))
        .collect();
    render(&Heatmap {
        title: format!(
            "{} read-back over latent plane (r={}, j={})",
            ATTR_NAMES[g.attr], g.dim_r, g.dim_j
        ),
        rows: g.axis_r.len(),
        cols: g.axis_j.len(),
        row_labels: g.axis_r.iter().map(|v| format!("{v:.2}")).collect(),
        col_labels: g.axis_j.iter().map(|v| format!("{v:.2}")).collect(),
        cells,
    })
}

/// Normalized attribute-change matrix: rows are traversed coordinates,
/// columns the attributes whose read-back changed.
pub fn acm_svg(a: &[Vec<f64>], title: &str) -> String {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    render(&Heatmap {
        title: title.to_string(),
        rows,
        cols,
        row_labels: ATTR_NAMES.iter().map(|n| format!("r[{n}]")).collect(),
        col_labels: ATTR_NAMES.iter().map(|s| s.to_string()).collect(),
        cells: a.iter().flatten().map(|&v| Some(v)).collect(),
    })
}

/// Number of painted (defined) cells in a rendered SVG — the test hook for
/// "undefined cells are blank".
pub fn count_cells(svg: &str) -> usize {
    svg.matches("class=\"cell\"").count()
}
