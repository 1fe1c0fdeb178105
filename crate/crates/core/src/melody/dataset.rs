//! In-memory dataset assembly: seeded subsampling of the factor grid and the
//! 70/20/10 split bookkeeping. Serialization lives with the companion crate.

use super::{generate, spec_from_index, MelodyError, TokenSequence, GRID_SIZE, NUM_ATTRS};
use crate::rng::{streams, DetRng};
use alloc::vec::Vec;
use core::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetConfig {
    /// Number of grid points to draw (≤ [`GRID_SIZE`]).
    pub size: u32,
    pub seed: u64,
}

/// One melody with its ground-truth factor digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub tokens: TokenSequence,
    pub attrs: [u8; NUM_ATTRS],
    /// Flat grid index this record was generated from.
    pub grid_index: u32,
}

/// Contiguous record ranges per split; records are stored pre-shuffled, so
/// ranges are enough.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    /// 70/20/10 by floor division; the test split absorbs the remainder.
    pub fn for_len(n: usize) -> Splits {
        let train = n * 7 / 10;
        let val = n * 2 / 10;
        Splits {
            train: 0..train,
            val: train..train + val,
            test: train + val..n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub splits: Splits,
    pub seed: u64,
}

/// Draws `n` distinct grid indices, uniformly without replacement, in the
/// (random) order that also serves as the record order. Deterministic in
/// (seed, n).
pub fn sample_grid_indices(n: u32, seed: u64) -> Result<Vec<u32>, MelodyError> {
    if n > GRID_SIZE {
        return Err(MelodyError::SizeExceedsGrid(n));
    }
    let mut pool: Vec<u32> = (0..GRID_SIZE).collect();
    let mut rng = DetRng::for_stream(seed, &[streams::DATASET]);
    for i in 0..n as usize {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(n as usize);
    Ok(pool)
}

impl Dataset {
    pub fn build(cfg: &DatasetConfig) -> Result<Dataset, MelodyError> {
        let indices = sample_grid_indices(cfg.size, cfg.seed)?;
        let records = indices
            .into_iter()
            .map(|grid_index| {
                let spec = spec_from_index(grid_index).unwrap();
                Record {
                    tokens: generate(&spec),
                    attrs: spec.digits(),
                    grid_index,
                }
            })
            .collect::<Vec<_>>();
        Ok(Dataset {
            splits: Splits::for_len(records.len()),
            records,
            seed: cfg.seed,
        })
    }

    pub fn train(&self) -> &[Record] {
        &self.records[self.splits.train.clone()]
    }

    pub fn val(&self) -> &[Record] {
        &self.records[self.splits.val.clone()]
    }

    pub fn test(&self) -> &[Record] {
        &self.records[self.splits.test.clone()]
    }
}
