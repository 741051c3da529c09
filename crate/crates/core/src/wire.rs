//! Little-endian helpers for the library's own message formats.

use crate::error::GridError;
use crate::topology::CellId;
use crate::transport::Rank;

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn encode_ids(ids: &[CellId]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * ids.len());
    for c in ids {
        put_u64(&mut out, c.0);
    }
    out
}

pub(crate) fn decode_ids(bytes: &[u8], source: Rank) -> Result<Vec<CellId>, GridError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(GridError::MalformedMessage {
            sender: source,
            reason: format!("id list of {} bytes", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| CellId(u64::from_le_bytes(b.try_into().unwrap())))
        .collect())
}

/// Cursor over a received message.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    source: Rank,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], source: Rank) -> Self {
        Reader { bytes, at: 0, source }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], GridError> {
        if self.bytes.len() - self.at < n {
            return Err(GridError::MalformedMessage {
                sender: self.source,
                reason: format!("truncated at byte {} (wanted {n} more)", self.at),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub(crate) fn u64(&mut self) -> Result<u64, GridError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, GridError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, GridError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.at == self.bytes.len()
    }

    pub(crate) fn finish(&self) -> Result<(), GridError> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(GridError::MalformedMessage {
                sender: self.source,
                reason: format!("{} trailing bytes", self.bytes.len() - self.at),
            })
        }
    }
}
