//! A distributed, cell-refinable cartesian grid.
//!
//! Cells are identified by globally unique ids ([`topology`]) and placed in
//! space by a [`geometry`]. Each rank holds the complete cell to owner table
//! and explicit neighbor lists for its own cells ([`mesh`]). Cells can be
//! refined and unrefined at run time while neighboring cells stay within one
//! refinement level of each other ([`amr`]), redistributed between ranks
//! ([`partition`]), and copies of remote neighbors are kept up to date with
//! point-to-point messages ([`exchange`]). Ranks run on the in-process
//! message-passing runtime in [`transport`].
//!
//! ```
//! use gridforge_core::{run_ranks, CellId, GridBuilder, GridError, PartitionMethod};
//!
//! let counts = run_ranks(2, |comm| {
//!     let grid = GridBuilder::new([4, 4, 1])
//!         .partition(PartitionMethod::Block)
//!         .build::<f64>(comm)?;
//!     Ok::<_, GridError>(grid.local_cells().len())
//! })
//! .unwrap();
//! assert_eq!(counts, vec![8, 8]);
//! ```

pub mod amr;
pub mod cell;
pub mod error;
pub mod exchange;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod mesh;
pub mod partition;
pub mod topology;
pub mod transport;
mod wire;

pub use amr::{Adaptation, Decision, FlowState, RefinementIndexInputs};
pub use cell::{CellData, DecodeError, TransferTag};
pub use error::GridError;
pub use exchange::{Batching, TransferPlan};
pub use geometry::{ConstantGeometry, Geometry};
pub use grid::{Grid, GridBuilder};
pub use io::DumpValues;
pub use mesh::{Mesh, Neighbor};
pub use partition::{MigrationReport, PartitionMethod};
pub use topology::{CellId, Indices, Topology, TopologyError};
pub use transport::{run_ranks, run_ranks_with, Comm, CommStats, Rank, ReduceOp, RunOptions, Subsystem, Tag, TransportError};
