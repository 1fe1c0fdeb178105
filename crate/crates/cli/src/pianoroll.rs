//! Text piano-roll for latent traversals: one row per variant with the
//! decoded steps (midi numbers, `--` for rests) and every extracted
//! attribute, `?` marking undefined read-backs.

use gridtune_core::melody::{
    extract_attributes, midi_from_id, TokenSequence, ATTR_NAMES, NUM_ATTRS, REST_ID,
};

fn step_cell(tok: u8) -> String {
    if tok == REST_ID {
        "--".to_string()
    } else {
        match midi_from_id(tok) {
            Some(m) => format!("{m}"),
            None => "??".to_string(),
        }
    }
}

fn attr_cells(tokens: &TokenSequence) -> String {
    let attrs = extract_attributes(tokens);
    (0..NUM_ATTRS)
        .map(|l| {
            let v = attrs.0[l].map_or("?".to_string(), |d| d.to_string());
            format!("{}={v}", ATTR_NAMES[l])
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the 6 decoded variants of one traversal. `values[i]` is the
/// substituted coordinate value for row i.
pub fn render_traversal(
    attr: usize,
    dim: usize,
    values: &[f64],
    decoded: &[TokenSequence],
    degenerate: bool,
) -> String {
    assert_eq!(values.len(), decoded.len());
    let mut s = String::new();
    s.push_str(&format!(
        "# traversal of '{}' along latent coordinate {dim}\n",
        ATTR_NAMES[attr]
    ));
    s.push_str("# steps 1-16 as midi pitch, -- = rest, | = bar line; ? = undefined read-back\n");
    if degenerate {
        s.push_str("# note: degenerate bounds (min = max); all rows decode the same point\n");
    }
    for (v, toks) in values.iter().zip(decoded) {
        let mut cells: Vec<String> = Vec::with_capacity(17);
        for (i, &t) in toks.0.iter().enumerate() {
            if i == 8 {
                cells.push("|".to_string());
            }
            cells.push(format!("{:>3}", step_cell(t)));
        }
        s.push_str(&format!(
            "z[{dim}]={v:+8.3}  {}  {}\n",
            cells.join(" "),
            attr_cells(toks)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridtune_core::melody::{generate, spec_from_index};

    #[test]
    fn six_rows_with_all_nine_attributes() {
        let toks: Vec<TokenSequence> = (0..6)
            .map(|i| generate(&spec_from_index(i * 1000).unwrap()))
            .collect();
        let vals = [-1.0, -0.6, -0.2, 0.2, 0.6, 1.0];
        let text = render_traversal(0, 0, &vals, &toks, false);
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 6);
        for row in rows {
            for name in ATTR_NAMES {
                assert!(row.contains(&format!("{name}=")), "{row}");
            }
            assert!(row.contains('|'));
        }
    }

    #[test]
    fn rests_and_undefined_are_flagged() {
        let silent = TokenSequence([REST_ID; 16]);
        let text = render_traversal(2, 2, &[0.0], &[silent], true);
        assert!(text.contains("--"));
        assert!(text.contains("scale=?"));
        assert!(text.contains("degenerate"));
    }
}
