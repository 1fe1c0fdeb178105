//! On-disk dataset format ("DMEL"): a little-endian header carrying the
//! sampling seed, attribute schema, and split lengths, followed by fixed
//! 29-byte records (16 tokens, 9 attribute digits, u32 grid index). A text
//! sidecar duplicates the split ranges for human inspection.

use crate::error::{io_at, CliError, Result};
use crate::wire::*;
use gridtune_core::melody::{
    Dataset, Record, Splits, TokenSequence, CARDINALITIES, GRID_SIZE, NUM_ATTRS, VOCAB,
};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DMEL";
const VERSION: u16 = 1;

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let tmp = path.with_extension("dmel.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_at(&tmp))?);
        let io = io_at(&tmp);
        (|| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w_u16(&mut w, VERSION)?;
            w_u64(&mut w, ds.seed)?;
            w_u8(&mut w, NUM_ATTRS as u8)?;
            w.write_all(&CARDINALITIES)?;
            w_u64(&mut w, ds.splits.train.len() as u64)?;
            w_u64(&mut w, ds.splits.val.len() as u64)?;
            w_u64(&mut w, ds.records.len() as u64)?;
            for r in &ds.records {
                w.write_all(&r.tokens.0)?;
                w.write_all(&r.attrs)?;
                w_u32(&mut w, r.grid_index)?;
            }
            w.flush()
        })()
        .map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io_at(path))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "dataset {} (run gen-data first)",
            path.display()
        )));
    }
    let mut r = BufReader::new(File::open(path).map_err(io_at(path))?);
    let bad = |msg: &str| CliError::format(path, msg);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_at(path))?;
    if &magic != MAGIC {
        return Err(bad("not a dataset file (bad magic)"));
    }
    let version = r_u16(&mut r).map_err(io_at(path))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported dataset version {version}")));
    }
    let seed = r_u64(&mut r).map_err(io_at(path))?;
    let attrs = r_u8(&mut r).map_err(io_at(path))?;
    if attrs as usize != NUM_ATTRS {
        return Err(bad(&format!("expected {NUM_ATTRS} attributes, file has {attrs}")));
    }
    let mut cards = [0u8; NUM_ATTRS];
    r.read_exact(&mut cards).map_err(io_at(path))?;
    if cards != CARDINALITIES {
        return Err(bad("attribute cardinalities do not match this build"));
    }
    let train_len = r_u64(&mut r).map_err(io_at(path))? as usize;
    let val_len = r_u64(&mut r).map_err(io_at(path))? as usize;
    let count = r_u64(&mut r).map_err(io_at(path))? as usize;
    if train_len + val_len > count {
        return Err(bad("split lengths exceed the record count"));
    }

    let mut records = Vec::with_capacity(count);
    let mut buf = [0u8; 29];
    for i in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| bad(&format!("truncated at record {i} of {count}")))?;
        let mut tokens = [0u8; TokenSequence::LEN];
        tokens.copy_from_slice(&buf[..16]);
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= VOCAB) {
            return Err(bad(&format!("record {i}: token {t} out of vocabulary")));
        }
        let mut attrs = [0u8; NUM_ATTRS];
        attrs.copy_from_slice(&buf[16..25]);
        for (a, &k) in attrs.iter().zip(CARDINALITIES.iter()) {
            if *a >= k {
                return Err(bad(&format!("record {i}: attribute digit {a} ≥ {k}")));
            }
        }
        let grid_index = u32::from_le_bytes(buf[25..29].try_into().unwrap());
        if grid_index >= GRID_SIZE {
            return Err(bad(&format!("record {i}: grid index {grid_index} out of range")));
        }
        records.push(Record {
            tokens: TokenSequence(tokens),
            attrs,
            grid_index,
        });
    }
    Ok(Dataset {
        records,
        splits: Splits {
            train: 0..train_len,
            val: train_len..train_len + val_len,
            test: train_len + val_len..count,
        },
        seed,
    })
}

/// Human-readable sidecar with the split ranges.
pub fn write_splits_sidecar(path: &Path, ds: &Dataset) -> Result<()> {
    let s = &ds.splits;
    let text = format!(
        "# record index ranges per split\nseed={}\nsize={}\ntrain={}..{}\nval={}..{}\ntest={}..{}\n",
        ds.seed,
        ds.records.len(),
        s.train.start,
        s.train.end,
        s.val.start,
        s.val.end,
        s.test.start,
        s.test.end,
    );
    std::fs::write(path, text).map_err(io_at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridtune_core::melody::DatasetConfig;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("gridtune-dmel-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trips_exactly() {
        let ds = Dataset::build(&DatasetConfig { size: 257, seed: 3 }).unwrap();
        let path = tmp("rt.dmel");
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn same_build_writes_identical_bytes() {
        let a = tmp("a.dmel");
        let b = tmp("b.dmel");
        for p in [&a, &b] {
            let ds = Dataset::build(&DatasetConfig { size: 100, seed: 7 }).unwrap();
            write_dataset(p, &ds).unwrap();
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn missing_and_corrupt_files_are_reported() {
        let err = read_dataset(&tmp("nope.dmel")).unwrap_err();
        assert_eq!(err.exit_code(), 3);

        let path = tmp("corrupt.dmel");
        std::fs::write(&path, b"DMELxx").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);

        let ds = Dataset::build(&DatasetConfig { size: 10, seed: 1 }).unwrap();
        let good = tmp("trunc.dmel");
        write_dataset(&good, &ds).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&good, &bytes).unwrap();
        let err = read_dataset(&good).unwrap_err();
        assert!(matches!(err, CliError::Format { .. }), "{err}");
    }
}
