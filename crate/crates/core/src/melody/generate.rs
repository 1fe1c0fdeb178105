//! Token rendering: onset-combination unranking and cadence arpeggiation.

use super::{ArpDir, MelodyError, MelodySpec, Scale, CADENCE_DEGREES};

/// Token id reserved for rests.
pub const REST_ID: u8 = 0;
/// Lowest reachable MIDI pitch (harmonic-minor I descending from the lowest tonic).
pub const MIN_PITCH: u8 = 51;
/// Highest reachable MIDI pitch (blues V ascending from the highest tonic).
pub const MAX_PITCH: u8 = 112;
/// Token vocabulary size: every reachable pitch plus the rest token.
pub const VOCAB: usize = (MAX_PITCH - MIN_PITCH + 1) as usize + 1;

/// Maps a MIDI pitch to its token id (rest is [`REST_ID`]).
pub fn id_from_midi(midi: u8) -> Option<u8> {
    (MIN_PITCH..=MAX_PITCH)
        .contains(&midi)
        .then(|| midi - MIN_PITCH + 1)
}

/// Maps a token id back to a MIDI pitch; `None` for the rest token or ids
/// beyond the vocabulary.
pub fn midi_from_id(id: u8) -> Option<u8> {
    (1..VOCAB as u8).contains(&id).then(|| id - 1 + MIN_PITCH)
}

/// Two bars of eighth-note slots; each entry is a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSequence(pub [u8; 16]);

impl TokenSequence {
    pub const LEN: usize = 16;

    /// Onset mask of one bar (bit i set ⇔ slot i sounds a pitch).
    pub fn bar_mask(&self, bar: usize) -> u8 {
        let mut mask = 0u8;
        for slot in 0..8 {
            if midi_from_id(self.0[8 * bar + slot]).is_some() {
                mask |= 1 << slot;
            }
        }
        mask
    }

    /// Sounded notes in temporal order as (step, midi) pairs. Ids beyond the
    /// vocabulary are clamped into it by `midi_from_id` returning `None`, so
    /// callers never see phantom pitches.
    pub fn onsets(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(step, &id)| midi_from_id(id).map(|m| (step, m)))
    }
}

fn binom(n: u32, k: u32) -> u32 {
    if k > n {
        return 0;
    }
    let mut acc = 1u32;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Unranks a 6-of-8 onset combination in lexicographic order of ascending
/// slot tuples. Bit i of the result corresponds to slot i.
pub fn onset_pattern(r: u8) -> Result<u8, MelodyError> {
    if r >= 28 {
        return Err(MelodyError::RhythmOutOfRange(r));
    }
    let mut rank = r as u32;
    let mut mask = 0u8;
    let mut slot = 0u32;
    for remaining in (1..=6u32).rev() {
        loop {
            // Combinations starting at `slot` keep it and choose the rest
            // from the slots above it.
            let here = binom(7 - slot, remaining - 1);
            if rank < here {
                break;
            }
            rank -= here;
            slot += 1;
        }
        mask |= 1 << slot;
        slot += 1;
    }
    Ok(mask)
}

/// Ranks a 6-onset mask back to its combination index; `None` unless exactly
/// 6 bits are set.
pub fn rhythm_rank(mask: u8) -> Option<u8> {
    if mask.count_ones() != 6 {
        return None;
    }
    let mut rank = 0u32;
    let mut prev: i32 = -1;
    let mut remaining = 6u32;
    for slot in 0..8u32 {
        if mask & (1 << slot) == 0 {
            continue;
        }
        for skipped in (prev + 1) as u32..slot {
            rank += binom(7 - skipped, remaining - 1);
        }
        prev = slot as i32;
        remaining -= 1;
    }
    Some(rank as u8)
}

/// Triad on the given 0-based scale degree: degrees d, d+2, d+4 with octave
/// carry, as semitone offsets from the tonic.
fn triad_offsets(scale: Scale, degree: usize) -> [i16; 3] {
    let degs = scale.degrees();
    let n = degs.len();
    core::array::from_fn(|k| {
        let d = degree + 2 * k;
        degs[d % n] as i16 + 12 * (d / n) as i16
    })
}

/// Renders a spec to tokens. Each bar sounds two 3-note arpeggios at its
/// onset slots; chords follow the I-IV-V-I cadence. A descending arpeggio
/// keeps the chord root first and drops the remaining tones an octave, so the
/// opening note of the melody is always the tonic.
pub fn generate(s: &MelodySpec) -> TokenSequence {
    let base = s.tonic_midi() as i16;
    let mut notes = [0u8; 12];
    for (c, &deg) in CADENCE_DEGREES.iter().enumerate() {
        let t = triad_offsets(s.scale, deg);
        let ordered = match s.arp[c] {
            ArpDir::Up => [t[0], t[1], t[2]],
            ArpDir::Down => [t[0], t[2] - 12, t[1] - 12],
        };
        for (k, off) in ordered.into_iter().enumerate() {
            notes[3 * c + k] = (base + off) as u8;
        }
    }
    let mut tokens = [REST_ID; 16];
    let mut next = 0;
    for bar in 0..2 {
        let mask = onset_pattern(s.rhythm[bar]).unwrap();
        for slot in 0..8 {
            if mask & (1 << slot) != 0 {
                tokens[8 * bar + slot] = id_from_midi(notes[next]).unwrap();
                next += 1;
            }
        }
    }
    TokenSequence(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::{spec_from_index, GRID_SIZE, SCALES};
    use alloc::vec::Vec;

    // Brute-force oracle: every 6-bit mask as an ascending slot tuple, in
    // lexicographic tuple order.
    fn enumerate_masks() -> Vec<u8> {
        let mut tuples: Vec<Vec<u8>> = (0u16..256)
            .filter(|m| m.count_ones() == 6)
            .map(|m| (0..8).filter(|s| m & (1 << s) != 0).collect())
            .collect();
        tuples.sort();
        tuples
            .into_iter()
            .map(|t| t.into_iter().fold(0u8, |m, s| m | (1 << s)))
            .collect()
    }

    fn mask_string(mask: u8) -> alloc::string::String {
        (0..8)
            .map(|s| if mask & (1 << s) != 0 { '1' } else { '0' })
            .collect()
    }

    #[test]
    fn unranking_matches_enumeration_oracle() {
        let oracle = enumerate_masks();
        assert_eq!(oracle.len(), 28);
        for (r, &want) in oracle.iter().enumerate() {
            let got = onset_pattern(r as u8).unwrap();
            assert_eq!(got, want, "rank {r}");
            assert_eq!(got.count_ones(), 6);
            assert_eq!(rhythm_rank(got), Some(r as u8));
        }
        assert_eq!(mask_string(oracle[0]), "11111100");
        assert_eq!(mask_string(oracle[27]), "00111111");
    }

    #[test]
    fn rank_rejects_wrong_popcount() {
        assert_eq!(rhythm_rank(0b1111_1110), None);
        assert_eq!(rhythm_rank(0b0001_1111), None);
        assert!(onset_pattern(28).is_err());
    }

    #[test]
    fn triads_match_hand_computed_tables() {
        // Offsets for chords I, IV, V per scale, from spelling out the
        // degree arithmetic by hand.
        let cases: [(Scale, [[i16; 3]; 3]); 3] = [
            (Scale::Major, [[0, 4, 7], [5, 9, 12], [7, 11, 14]]),
            (Scale::HarmonicMinor, [[0, 3, 7], [5, 8, 12], [7, 11, 14]]),
            (Scale::Blues, [[0, 5, 7], [6, 10, 15], [7, 12, 17]]),
        ];
        for (scale, want) in cases {
            for (i, deg) in [0usize, 3, 4].into_iter().enumerate() {
                assert_eq!(triad_offsets(scale, deg), want[i], "{scale:?} deg {deg}");
            }
        }
    }

    #[test]
    fn c_major_all_up_renders_cadence() {
        let s = MelodySpec {
            tonic: 0,
            octave: 1,
            scale: Scale::Major,
            rhythm: [0, 0],
            arp: [ArpDir::Up; 4],
        };
        let t = generate(&s);
        let midis: Vec<Option<u8>> = t.0.iter().map(|&id| midi_from_id(id)).collect();
        // C-E-G, F-A-C | G-B-D, C-E-G around middle-register C = 72.
        let want = [
            Some(72),
            Some(76),
            Some(79),
            Some(77),
            Some(81),
            Some(84),
            None,
            None,
            Some(79),
            Some(83),
            Some(86),
            Some(72),
            Some(76),
            Some(79),
            None,
            None,
        ];
        assert_eq!(midis.as_slice(), want.as_slice());
    }

    #[test]
    fn flipping_one_arp_touches_only_its_triple() {
        let mut rng = crate::rng::DetRng::new(9);
        for _ in 0..2_000 {
            let i = rng.below(GRID_SIZE as usize) as u32;
            let mut spec = spec_from_index(i).unwrap();
            let k = rng.below(4);
            let base = generate(&spec);
            spec.arp[k] = match spec.arp[k] {
                ArpDir::Up => ArpDir::Down,
                ArpDir::Down => ArpDir::Up,
            };
            let flipped = generate(&spec);
            let onset_steps: Vec<usize> = base.onsets().map(|(step, _)| step).collect();
            for step in 0..16 {
                let in_triple = onset_steps[3 * k..3 * k + 3].contains(&step);
                if !in_triple {
                    assert_eq!(base.0[step], flipped.0[step], "step {step} outside arp {k}");
                }
            }
            // The chord root leads the triple in both directions.
            assert_eq!(base.0[onset_steps[3 * k]], flipped.0[onset_steps[3 * k]]);
            let triple: Vec<u8> = flipped.onsets().map(|(_, m)| m).collect();
            let g = &triple[3 * k..3 * k + 3];
            match spec.arp[k] {
                ArpDir::Up => assert!(g[0] < g[1] && g[1] < g[2]),
                ArpDir::Down => assert!(g[0] > g[1] && g[1] > g[2]),
            }
        }
    }

    #[test]
    fn rhythm2_does_not_affect_bar1() {
        let mut rng = crate::rng::DetRng::new(10);
        for _ in 0..1_000 {
            let i = rng.below(GRID_SIZE as usize) as u32;
            let mut spec = spec_from_index(i).unwrap();
            let base = generate(&spec);
            spec.rhythm[1] = rng.below(28) as u8;
            let changed = generate(&spec);
            assert_eq!(base.0[..8], changed.0[..8]);
        }
    }

    #[test]
    fn every_sequence_has_12_pitches_and_4_rests() {
        let mut rng = crate::rng::DetRng::new(11);
        for _ in 0..1_000 {
            let i = rng.below(GRID_SIZE as usize) as u32;
            let t = generate(&spec_from_index(i).unwrap());
            assert_eq!(t.onsets().count(), 12);
            assert_eq!(t.0.iter().filter(|&&id| id == REST_ID).count(), 4);
        }
    }

    #[test]
    fn vocabulary_covers_exactly_the_reachable_pitches() {
        // Enumerate every triad tone over every tonic placement in both
        // directions; the extremes must hit the declared bounds exactly.
        let mut lo = u8::MAX;
        let mut hi = u8::MIN;
        for scale in SCALES {
            for deg in CADENCE_DEGREES {
                let t = triad_offsets(scale, deg);
                for off in [t[0], t[1], t[2], t[2] - 12, t[1] - 12] {
                    for base in 60i16..=95 {
                        let p = (base + off) as u8;
                        lo = lo.min(p);
                        hi = hi.max(p);
                    }
                }
            }
        }
        assert_eq!(lo, MIN_PITCH);
        assert_eq!(hi, MAX_PITCH);
        assert_eq!(VOCAB, 63);
        for p in MIN_PITCH..=MAX_PITCH {
            assert_eq!(midi_from_id(id_from_midi(p).unwrap()), Some(p));
        }
        assert_eq!(id_from_midi(MIN_PITCH - 1), None);
        assert_eq!(id_from_midi(MAX_PITCH + 1), None);
        assert_eq!(midi_from_id(REST_ID), None);
        assert_eq!(midi_from_id(VOCAB as u8), None);
    }
}
