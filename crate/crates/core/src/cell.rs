//! The contract between the grid and user cell data.

use thiserror::Error;

/// Selects which slice of a cell's data an exchange moves.
pub type TransferTag = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct DecodeError(pub String);

impl DecodeError {
    pub fn length(expected: usize, actual: usize) -> Self {
        DecodeError(format!("expected {expected} bytes, got {actual}"))
    }
}

/// User data stored in every cell.
///
/// For each transfer tag a cell exposes a byte slice: its length, how to
/// write it and how to read it back into a remote copy. The length may
/// depend on the cell and change between steps; when it does, a receiver
/// must first learn the new size (see
/// [`Grid::two_phase_variable_exchange`](crate::grid::Grid::two_phase_variable_exchange)).
///
/// `encode`/`decode` move the complete state when a cell changes owner and
/// default to the slice of tag 0. `prolong` and `restrict` map data across
/// refinement and unrefinement; children are always in ascending id order.
pub trait CellData: Clone + Default + Send + 'static {
    fn transfer_len(&self, tag: TransferTag) -> usize;

    fn write_transfer(&self, tag: TransferTag, out: &mut Vec<u8>);

    fn read_transfer(&mut self, tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError>;

    fn encode(&self, out: &mut Vec<u8>) {
        self.write_transfer(0, out);
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut cell = Self::default();
        cell.read_transfer(0, bytes)?;
        Ok(cell)
    }

    /// Data of the 8 children created when this cell is refined. Copies the
    /// parent into every child by default.
    fn prolong(&self) -> [Self; 8] {
        std::array::from_fn(|_| self.clone())
    }

    /// Data of the parent created when these children are unrefined. Keeps
    /// the first child by default; numeric types override this with an
    /// average.
    fn restrict(children: &[Self; 8]) -> Self {
        children[0].clone()
    }
}

impl CellData for () {
    fn transfer_len(&self, _tag: TransferTag) -> usize {
        0
    }

    fn write_transfer(&self, _tag: TransferTag, _out: &mut Vec<u8>) {}

    fn read_transfer(&mut self, _tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        if bytes.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::length(0, bytes.len()))
        }
    }
}

impl CellData for f64 {
    fn transfer_len(&self, _tag: TransferTag) -> usize {
        8
    }

    fn write_transfer(&self, _tag: TransferTag, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_transfer(&mut self, _tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| DecodeError::length(8, bytes.len()))?;
        *self = f64::from_le_bytes(arr);
        Ok(())
    }

    fn restrict(children: &[Self; 8]) -> Self {
        children.iter().sum::<f64>() / 8.0
    }
}
