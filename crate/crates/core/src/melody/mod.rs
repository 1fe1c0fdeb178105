//! The melody factor grid: nine generative factors, a bijective flat index,
//! deterministic token rendering, and exact attribute read-back.

mod dataset;
mod extract;
mod generate;

pub use dataset::{sample_grid_indices, Dataset, DatasetConfig, Record, Splits};
pub use extract::{extract_attributes, normalize_attributes, normalize_digits, AttributeVector};
pub use generate::{
    generate, id_from_midi, midi_from_id, onset_pattern, rhythm_rank, TokenSequence, MAX_PITCH,
    MIN_PITCH, REST_ID, VOCAB,
};

use core::fmt;

/// Number of generative factors / attributes.
pub const NUM_ATTRS: usize = 9;

/// Category counts per attribute, in canonical order.
pub const CARDINALITIES: [u8; NUM_ATTRS] = [12, 3, 3, 28, 28, 2, 2, 2, 2];

/// Canonical attribute names, matching [`CARDINALITIES`].
pub const ATTR_NAMES: [&str; NUM_ATTRS] = [
    "tonic", "octave", "scale", "rhythm1", "rhythm2", "arp1", "arp2", "arp3", "arp4",
];

/// Total number of factor combinations (product of all cardinalities).
pub const GRID_SIZE: u32 = 1_354_752;

/// Chord roots of the I-IV-V-I cadence as 0-based scale degrees.
pub const CADENCE_DEGREES: [usize; 4] = [0, 3, 4, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MelodyError {
    /// Flat index outside the factor grid.
    IndexOutOfRange(u32),
    /// Rhythm combination index outside 0..28.
    RhythmOutOfRange(u8),
    /// Attribute digit outside its cardinality (slot, value).
    DigitOutOfRange(usize, u8),
    /// Normalization requested on an undefined attribute (slot).
    UndefinedAttribute(usize),
    /// Requested sample size exceeds the grid.
    SizeExceedsGrid(u32),
}

impl fmt::Display for MelodyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MelodyError::IndexOutOfRange(i) => {
                write!(f, "melody index {i} out of range (grid size {GRID_SIZE})")
            }
            MelodyError::RhythmOutOfRange(r) => write!(f, "rhythm index {r} out of range 0..28"),
            MelodyError::DigitOutOfRange(slot, v) => write!(
                f,
                "attribute {} value {v} exceeds cardinality {}",
                ATTR_NAMES[slot], CARDINALITIES[slot]
            ),
            MelodyError::UndefinedAttribute(slot) => {
                write!(f, "attribute {} is undefined", ATTR_NAMES[slot])
            }
            MelodyError::SizeExceedsGrid(n) => {
                write!(f, "sample size {n} exceeds grid size {GRID_SIZE}")
            }
        }
    }
}

impl core::error::Error for MelodyError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Major = 0,
    HarmonicMinor = 1,
    Blues = 2,
}

pub const SCALES: [Scale; 3] = [Scale::Major, Scale::HarmonicMinor, Scale::Blues];

impl Scale {
    /// Pitch-class offsets from the tonic, ascending.
    pub fn degrees(self) -> &'static [u8] {
        match self {
            Scale::Major => &[0, 2, 4, 5, 7, 9, 11],
            Scale::HarmonicMinor => &[0, 2, 3, 5, 7, 8, 11],
            Scale::Blues => &[0, 3, 5, 6, 7, 10],
        }
    }

    pub fn from_index(i: u8) -> Option<Scale> {
        SCALES.get(i as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArpDir {
    Up = 0,
    Down = 1,
}

impl ArpDir {
    pub fn from_index(i: u8) -> Option<ArpDir> {
        match i {
            0 => Some(ArpDir::Up),
            1 => Some(ArpDir::Down),
            _ => None,
        }
    }
}

/// One point of the factor grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MelodySpec {
    /// Pitch class of the tonic, 0..12.
    pub tonic: u8,
    /// Register of the tonic, 0..3 (register r puts the tonic in MIDI octave r+5).
    pub octave: u8,
    pub scale: Scale,
    /// Onset-combination index per bar, 0..28 each.
    pub rhythm: [u8; 2],
    /// Arpeggiation direction per cadence chord.
    pub arp: [ArpDir; 4],
}

impl MelodySpec {
    /// MIDI number of the tonic in the spec's register.
    pub fn tonic_midi(&self) -> u8 {
        12 * (self.octave + 5) + self.tonic
    }

    /// Attribute digits in canonical order.
    pub fn digits(&self) -> [u8; NUM_ATTRS] {
        [
            self.tonic,
            self.octave,
            self.scale as u8,
            self.rhythm[0],
            self.rhythm[1],
            self.arp[0] as u8,
            self.arp[1] as u8,
            self.arp[2] as u8,
            self.arp[3] as u8,
        ]
    }

    pub fn from_digits(d: [u8; NUM_ATTRS]) -> Result<MelodySpec, MelodyError> {
        for (slot, (&v, &card)) in d.iter().zip(CARDINALITIES.iter()).enumerate() {
            if v >= card {
                return Err(MelodyError::DigitOutOfRange(slot, v));
            }
        }
        Ok(MelodySpec {
            tonic: d[0],
            octave: d[1],
            scale: Scale::from_index(d[2]).unwrap(),
            rhythm: [d[3], d[4]],
            arp: [
                ArpDir::from_index(d[5]).unwrap(),
                ArpDir::from_index(d[6]).unwrap(),
                ArpDir::from_index(d[7]).unwrap(),
                ArpDir::from_index(d[8]).unwrap(),
            ],
        })
    }
}

/// Decodes a flat grid index into its factor digits (big-endian mixed radix
/// over the canonical attribute order).
pub fn spec_from_index(i: u32) -> Result<MelodySpec, MelodyError> {
    if i >= GRID_SIZE {
        return Err(MelodyError::IndexOutOfRange(i));
    }
    let mut rem = i;
    let mut digits = [0u8; NUM_ATTRS];
    for slot in (0..NUM_ATTRS).rev() {
        let card = CARDINALITIES[slot] as u32;
        digits[slot] = (rem % card) as u8;
        rem /= card;
    }
    Ok(MelodySpec::from_digits(digits).unwrap())
}

/// Inverse of [`spec_from_index`].
pub fn index_from_spec(s: &MelodySpec) -> u32 {
    let mut i = 0u32;
    for (slot, &d) in s.digits().iter().enumerate() {
        i = i * CARDINALITIES[slot] as u32 + d as u32;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent decode: repeated divmod against an explicitly spelled-out
    // radix list, least-significant digit first.
    fn oracle_digits(mut i: u32) -> [u8; 9] {
        let radices = [12u32, 3, 3, 28, 28, 2, 2, 2, 2];
        let mut out = [0u8; 9];
        for slot in [8, 7, 6, 5, 4, 3, 2, 1, 0] {
            out[slot] = (i % radices[slot]) as u8;
            i /= radices[slot];
        }
        out
    }

    #[test]
    fn grid_size_is_product_of_cardinalities() {
        let p: u32 = CARDINALITIES.iter().map(|&c| c as u32).product();
        assert_eq!(p, GRID_SIZE);
        assert_eq!(GRID_SIZE, 1_354_752);
    }

    #[test]
    fn index_zero_is_all_zero_digits() {
        let s = spec_from_index(0).unwrap();
        assert_eq!(s.digits(), [0; 9]);
        assert_eq!(s.scale, Scale::Major);
        assert_eq!(s.arp, [ArpDir::Up; 4]);
    }

    #[test]
    fn index_max_is_all_max_digits() {
        let s = spec_from_index(GRID_SIZE - 1).unwrap();
        let want: [u8; 9] = core::array::from_fn(|slot| CARDINALITIES[slot] - 1);
        assert_eq!(s.digits(), want);
    }

    #[test]
    fn index_one_increments_last_digit_only() {
        let s = spec_from_index(1).unwrap();
        assert_eq!(s.digits(), [0, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(s.arp[3], ArpDir::Down);
    }

    #[test]
    fn decode_matches_divmod_oracle() {
        let mut rng = crate::rng::DetRng::new(0xD1CE);
        for _ in 0..10_000 {
            let i = rng.below(GRID_SIZE as usize) as u32;
            assert_eq!(spec_from_index(i).unwrap().digits(), oracle_digits(i));
        }
    }

    #[test]
    fn round_trip_on_random_indices() {
        let mut rng = crate::rng::DetRng::new(42);
        for _ in 0..10_000 {
            let i = rng.below(GRID_SIZE as usize) as u32;
            assert_eq!(index_from_spec(&spec_from_index(i).unwrap()), i);
        }
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert_eq!(
            spec_from_index(GRID_SIZE),
            Err(MelodyError::IndexOutOfRange(GRID_SIZE))
        );
    }

    #[test]
    fn bad_digits_rejected() {
        let mut d = [0u8; 9];
        d[3] = 28;
        assert_eq!(
            MelodySpec::from_digits(d),
            Err(MelodyError::DigitOutOfRange(3, 28))
        );
    }
}
