use thiserror::Error;

use crate::topology::{CellId, TopologyError};
use crate::transport::{Rank, TransportError};

/// Errors raised by grid operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("cell {0} does not exist")]
    NoSuchCell(CellId),
    #[error("cell {cell} is owned by rank {owner}, not by this rank")]
    NotLocal { cell: CellId, owner: Rank },
    #[error("refinement levels around cell {cell} near indices {near:?} differ by more than one")]
    BalanceViolation { cell: CellId, near: [u64; 3] },
    #[error("neighborhood size {0} is larger than the supported maximum of 1024")]
    NeighborhoodTooLarge(u32),
    #[error("cell {0} is already at the maximum refinement level")]
    RefineAtMaxLevel(CellId),
    #[error("cell {0} is at refinement level 0 and cannot be unrefined")]
    UnrefineAtLevelZero(CellId),
    #[error("cell {0} has both a refine and an unrefine request")]
    ConflictingRequest(CellId),
    #[error("rank {rank} outside 0..{ranks}")]
    InvalidRank { rank: Rank, ranks: usize },
    #[error("a remote neighbor exchange is already in flight")]
    ExchangeInFlight,
    #[error("no remote neighbor exchange is in flight")]
    NoExchangeInFlight,
    #[error("the {0} of the current exchange were already waited for")]
    AlreadyWaited(&'static str),
    #[error("grid structure changed while a remote neighbor exchange was in flight")]
    StructureChangedDuringExchange,
    #[error("local cell data sent in the current exchange was modified before its sends completed")]
    SendBufferModified,
    #[error("cell {cell} transferred {actual} bytes but {expected} were expected")]
    TransferLength { cell: CellId, expected: usize, actual: usize },
    #[error("malformed message from rank {sender}: {reason}")]
    MalformedMessage { sender: Rank, reason: String },
    #[error("cannot decode data of cell {cell}: {reason}")]
    Decode { cell: CellId, reason: String },
    #[error("degenerate state: {0}")]
    DegenerateState(&'static str),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<std::io::Error> for GridError {
    fn from(e: std::io::Error) -> Self {
        GridError::Io(e.to_string())
    }
}
