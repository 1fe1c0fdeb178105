//! Attribute read-back from arbitrary token sequences, including detection
//! of values that fall outside the factor grid.

use super::{
    rhythm_rank, MelodyError, TokenSequence, CARDINALITIES, NUM_ATTRS, SCALES,
};
use alloc::vec::Vec;

/// Extracted attribute values in canonical order; `None` marks an undefined
/// (out-of-distribution) reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributeVector(pub [Option<u8>; NUM_ATTRS]);

impl AttributeVector {
    pub const UNDEFINED: AttributeVector = AttributeVector([None; NUM_ATTRS]);

    pub fn all_defined(&self) -> bool {
        self.0.iter().all(|v| v.is_some())
    }

    /// Digits of a fully defined vector.
    pub fn digits(&self) -> Option<[u8; NUM_ATTRS]> {
        if self.all_defined() {
            Some(core::array::from_fn(|i| self.0[i].unwrap()))
        } else {
            None
        }
    }
}

/// Reads the nine attributes off a token sequence.
///
/// Rules, in canonical attribute order:
/// - tonic: pitch class of the first sounded note; octave: its register
///   (undefined outside the three modeled registers). Both undefined when
///   the sequence is all rests.
/// - rhythm per bar: the combination index of the bar's onset mask, defined
///   only when the bar has exactly 6 onsets.
/// - scale: the unique scale that, rooted at the extracted tonic, contains
///   every sounded pitch class; requires the four-triple note structure
///   (12 sounded notes). Zero or several matching scales ⇒ undefined.
/// - arp per chord: direction of the k-th temporal 3-note group, defined
///   only when strictly monotone (and only when 12 notes exist at all).
pub fn extract_attributes(t: &TokenSequence) -> AttributeVector {
    let onsets: Vec<(usize, u8)> = t.onsets().collect();
    if onsets.is_empty() {
        return AttributeVector::UNDEFINED;
    }
    let first = onsets[0].1;
    let tonic = first % 12;
    let register = (first / 12) as i32 - 5;
    let octave = (0..3).contains(&register).then_some(register as u8);

    let rhythm: [Option<u8>; 2] = core::array::from_fn(|bar| rhythm_rank(t.bar_mask(bar)));

    let (scale, arps) = if onsets.len() == 12 {
        let mut sounded = [false; 12];
        for &(_, midi) in &onsets {
            sounded[((midi % 12) + 12 - tonic) as usize % 12] = true;
        }
        let mut matches = SCALES
            .iter()
            .filter(|s| (0..12).all(|pc| !sounded[pc] || s.degrees().contains(&(pc as u8))));
        let scale = match (matches.next(), matches.next()) {
            (Some(&s), None) => Some(s as u8),
            _ => None,
        };
        let arps: [Option<u8>; 4] = core::array::from_fn(|k| {
            let g = &onsets[3 * k..3 * k + 3];
            if g[0].1 < g[1].1 && g[1].1 < g[2].1 {
                Some(0)
            } else if g[0].1 > g[1].1 && g[1].1 > g[2].1 {
                Some(1)
            } else {
                None
            }
        });
        (scale, arps)
    } else {
        (None, [None; 4])
    };

    AttributeVector([
        Some(tonic),
        octave,
        scale,
        rhythm[0],
        rhythm[1],
        arps[0],
        arps[1],
        arps[2],
        arps[3],
    ])
}

/// Rescales defined category indices to [0, 1] as index / (cardinality − 1).
pub fn normalize_attributes(a: &AttributeVector) -> Result<[f64; NUM_ATTRS], MelodyError> {
    let mut out = [0.0; NUM_ATTRS];
    for (slot, v) in a.0.iter().enumerate() {
        let v = v.ok_or(MelodyError::UndefinedAttribute(slot))?;
        out[slot] = v as f64 / (CARDINALITIES[slot] - 1) as f64;
    }
    Ok(out)
}

/// Normalizes raw digits (always defined).
pub fn normalize_digits(d: &[u8; NUM_ATTRS]) -> [f64; NUM_ATTRS] {
    core::array::from_fn(|slot| d[slot] as f64 / (CARDINALITIES[slot] - 1) as f64)
}
