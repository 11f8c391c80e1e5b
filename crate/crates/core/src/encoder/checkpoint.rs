//! Binary checkpoint: magic `MSCLEMB1`, then `num_users`, `num_items`, `dim`
//! as little-endian u64, then user rows and item rows as little-endian f64,
//! row-major.

use std::fs;
use std::path::Path;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::table::Table;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSCLEMB1";
const HEADER_LEN: usize = 8 + 3 * 8;

pub fn encode_checkpoint(table: &EmbeddingTable) -> Vec<u8> {
    let values = table.users.as_slice().len() + table.items.as_slice().len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for n in [table.num_users(), table.num_items(), table.dim()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in table.users.as_slice().iter().chain(table.items.as_slice()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EmbeddingTable> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("magic bytes do not match MSCLEMB1".into()));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| Error::Checkpoint(format!("count {v} too large")));
    let (nu, ni, dim) = (to_usize(read_u64(8))?, to_usize(read_u64(16))?, to_usize(read_u64(24))?);
    let expected = nu
        .checked_add(ni)
        .and_then(|r| r.checked_mul(dim))
        .and_then(|v| v.checked_mul(8))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Checkpoint("header counts overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} bytes for {nu} users, {ni} items, dim {dim}; found {}",
            bytes.len()
        )));
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let users: Vec<f64> = values.by_ref().take(nu * dim).collect();
    let items: Vec<f64> = values.collect();
    EmbeddingTable::new(Table::from_vec(nu, dim, users)?, Table::from_vec(ni, dim, items)?)
}

pub fn write_checkpoint(path: &Path, table: &EmbeddingTable) -> Result<()> {
    fs::write(path, encode_checkpoint(table))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<EmbeddingTable> {
    decode_checkpoint(&fs::read(path)?)
}
