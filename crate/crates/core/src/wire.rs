//! Little-endian fixed-width encodings for collective payloads.

use crate::error::{DpcError, Result};

pub(crate) fn put_i64(buf: &mut Vec<u8>, v: i64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn encode_i64s(values: &[i64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for &v in values {
        put_i64(&mut buf, v);
    }
    buf
}

/// Splits `bytes` into fixed-size records of `width` bytes.
pub(crate) fn records(bytes: &[u8], width: usize) -> Result<std::slice::ChunksExact<'_, u8>> {
    if !bytes.len().is_multiple_of(width) {
        return Err(DpcError::ProtocolCorruption(format!(
            "payload of {} bytes is not a multiple of the {width}-byte record size",
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(width))
}

#[inline]
pub(crate) fn i64_at(rec: &[u8], word: usize) -> i64 {
    i64::from_le_bytes(rec[word * 8..word * 8 + 8].try_into().unwrap())
}

#[inline]
pub(crate) fn f64_at(rec: &[u8], word: usize) -> f64 {
    f64::from_le_bytes(rec[word * 8..word * 8 + 8].try_into().unwrap())
}

pub(crate) fn decode_i64s(bytes: &[u8]) -> Result<Vec<i64>> {
    Ok(records(bytes, 8)?.map(|r| i64_at(r, 0)).collect())
}
