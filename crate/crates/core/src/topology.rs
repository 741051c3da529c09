//! Cell ids, refinement levels and index-space coordinates.
//!
//! Every possible cell of a grid has a unique positive id. Ids of refinement
//! level 0 come first, then all possible ids of level 1 and so on. Within a
//! level ids grow with x first, then y, then z. Id 0 is never a cell.
//!
//! Positions are expressed as indices of the finest lattice: a grid with
//! `n_i` level-0 cells in dimension `i` and maximum refinement level `L` has
//! indices `0..n_i * 2^L`, and a cell of level `l` spans `2^(L - l)` of them.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("grid must have at least one level-0 cell per dimension, got {0:?}")]
    EmptyDimension([u64; 3]),
    #[error("grid of {size:?} level-0 cells with maximum refinement level {max_level} does not fit 64-bit cell ids")]
    Overflow { size: [u64; 3], max_level: u32 },
    #[error("refinement level {level} outside 0..={max_level}")]
    LevelOutOfRange { level: u32, max_level: u32 },
    #[error("invalid cell id {0}")]
    InvalidCell(u64),
    #[error("indices {0:?} outside the grid")]
    IndicesOutOfRange([u64; 3]),
    #[error("indices {indices:?} are not aligned to a cell of refinement level {level}")]
    Misaligned { indices: [u64; 3], level: u32 },
}

/// Globally unique cell identifier. Zero is reserved as the invalid id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CellId(pub u64);

impl CellId {
    pub const INVALID: CellId = CellId(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        self.0 != 0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Position of a cell on the finest lattice; the corner closest to the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Indices(pub [u64; 3]);

impl Indices {
    pub fn new(x: u64, y: u64, z: u64) -> Self {
        Indices([x, y, z])
    }
}

impl From<[u64; 3]> for Indices {
    fn from(v: [u64; 3]) -> Self {
        Indices(v)
    }
}

/// Immutable grid parameters: level-0 size, maximum refinement level and
/// periodicity. All id arithmetic goes through this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    size: [u64; 3],
    max_level: u32,
    periodic: [bool; 3],
    // first id of every level plus one past the last valid id
    level_starts: Vec<u64>,
}

// Signed offsets between cells are computed in i64, so the finest lattice
// must stay well inside that range.
const MAX_EXTENT: u64 = 1 << 60;

impl Topology {
    pub fn new(size: [u64; 3], max_level: u32, periodic: [bool; 3]) -> Result<Self, TopologyError> {
        if size.contains(&0) {
            return Err(TopologyError::EmptyDimension(size));
        }
        let overflow = TopologyError::Overflow { size, max_level };
        if max_level >= 60 {
            return Err(overflow);
        }
        for &n in &size {
            match n.checked_shl(max_level) {
                Some(e) if e < MAX_EXTENT && e >> max_level == n => {}
                _ => return Err(overflow),
            }
        }
        let level0 = size[0]
            .checked_mul(size[1])
            .and_then(|v| v.checked_mul(size[2]))
            .ok_or(overflow.clone())?;

        let mut level_starts = Vec::with_capacity(max_level as usize + 2);
        let mut start: u64 = 1;
        let mut count = level0;
        level_starts.push(start);
        for level in 0..=max_level {
            start = start.checked_add(count).ok_or(overflow.clone())?;
            level_starts.push(start);
            if level < max_level {
                count = count.checked_mul(8).ok_or(overflow.clone())?;
            }
        }
        Ok(Topology {
            size,
            max_level,
            periodic,
            level_starts,
        })
    }

    /// Number of level-0 cells per dimension.
    pub fn size(&self) -> [u64; 3] {
        self.size
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    /// Number of finest-lattice indices per dimension.
    pub fn extent(&self) -> [u64; 3] {
        self.size.map(|n| n << self.max_level)
    }

    /// Largest valid cell id.
    pub fn max_id(&self) -> CellId {
        CellId(self.level_starts[self.max_level as usize + 1] - 1)
    }

    /// Number of level-0 cells.
    pub fn level0_count(&self) -> u64 {
        self.size.iter().product()
    }

    /// Number of possible cells of the given level.
    pub fn level_count(&self, level: u32) -> Result<u64, TopologyError> {
        self.check_level(level)?;
        let l = level as usize;
        Ok(self.level_starts[l + 1] - self.level_starts[l])
    }

    /// First id of a refinement level.
    pub fn level_start(&self, level: u32) -> Result<CellId, TopologyError> {
        self.check_level(level)?;
        Ok(CellId(self.level_starts[level as usize]))
    }

    /// Edge length of a cell of the given level, in finest-lattice indices.
    pub fn cell_size(&self, level: u32) -> u64 {
        debug_assert!(level <= self.max_level);
        1 << (self.max_level - level)
    }

    pub fn is_valid(&self, id: CellId) -> bool {
        id.0 != 0 && id <= self.max_id()
    }

    pub fn level_of(&self, id: CellId) -> Result<u32, TopologyError> {
        if !self.is_valid(id) {
            return Err(TopologyError::InvalidCell(id.0));
        }
        // level_starts is sorted; the level is the last start <= id
        let pos = self.level_starts.partition_point(|&s| s <= id.0);
        Ok(pos as u32 - 1)
    }

    pub fn indices_of(&self, id: CellId) -> Result<Indices, TopologyError> {
        let level = self.level_of(id)?;
        let ordinal = id.0 - self.level_starts[level as usize];
        let nx = self.size[0] << level;
        let ny = self.size[1] << level;
        let shift = self.max_level - level;
        let x = ordinal % nx;
        let y = (ordinal / nx) % ny;
        let z = ordinal / (nx * ny);
        Ok(Indices([x << shift, y << shift, z << shift]))
    }

    /// Level and indices in one call.
    pub fn locate(&self, id: CellId) -> Result<(u32, Indices), TopologyError> {
        Ok((self.level_of(id)?, self.indices_of(id)?))
    }

    pub fn id_from(&self, level: u32, indices: Indices) -> Result<CellId, TopologyError> {
        self.check_level(level)?;
        let extent = self.extent();
        let ix = indices.0;
        if (0..3).any(|d| ix[d] >= extent[d]) {
            return Err(TopologyError::IndicesOutOfRange(ix));
        }
        let shift = self.max_level - level;
        let mask = (1u64 << shift) - 1;
        if ix.iter().any(|&i| i & mask != 0) {
            return Err(TopologyError::Misaligned { indices: ix, level });
        }
        Ok(self.id_unchecked(level, ix))
    }

    /// Like [`Topology::id_from`] but rounds the indices down to the level's
    /// lattice, i.e. returns the level-`level` cell containing `indices`.
    pub fn id_containing(&self, level: u32, indices: Indices) -> Result<CellId, TopologyError> {
        self.check_level(level)?;
        let extent = self.extent();
        if (0..3).any(|d| indices.0[d] >= extent[d]) {
            return Err(TopologyError::IndicesOutOfRange(indices.0));
        }
        Ok(self.id_unchecked(level, indices.0))
    }

    // caller guarantees level and indices are in range
    pub(crate) fn id_unchecked(&self, level: u32, ix: [u64; 3]) -> CellId {
        let shift = self.max_level - level;
        let nx = self.size[0] << level;
        let ny = self.size[1] << level;
        let (x, y, z) = (ix[0] >> shift, ix[1] >> shift, ix[2] >> shift);
        CellId(self.level_starts[level as usize] + x + nx * (y + ny * z))
    }

    /// The 8 children of a cell in ascending id order, or nothing at the
    /// maximum refinement level.
    pub fn children_of(&self, id: CellId) -> Result<Vec<CellId>, TopologyError> {
        let (level, Indices(ix)) = self.locate(id)?;
        if level == self.max_level {
            return Ok(Vec::new());
        }
        let half = self.cell_size(level + 1);
        let mut out = Vec::with_capacity(8);
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let c = [ix[0] + dx * half, ix[1] + dy * half, ix[2] + dz * half];
                    out.push(self.id_unchecked(level + 1, c));
                }
            }
        }
        Ok(out)
    }

    pub fn parent_of(&self, id: CellId) -> Result<Option<CellId>, TopologyError> {
        let (level, Indices(ix)) = self.locate(id)?;
        if level == 0 {
            return Ok(None);
        }
        Ok(Some(self.id_unchecked(level - 1, ix)))
    }

    /// All children of this cell's parent, the cell itself included. Empty
    /// for level-0 cells.
    pub fn siblings_of(&self, id: CellId) -> Result<Vec<CellId>, TopologyError> {
        match self.parent_of(id)? {
            Some(parent) => self.children_of(parent),
            None => Ok(Vec::new()),
        }
    }

    /// Maps signed finest-lattice indices into the grid, wrapping periodic
    /// dimensions. Returns `None` outside a non-periodic boundary.
    pub fn wrap_indices(&self, raw: [i64; 3]) -> Option<Indices> {
        self.wrap_with_shift(raw).map(|(ix, _)| ix)
    }

    /// Wrapped indices plus the shift `raw - wrapped` per dimension.
    pub(crate) fn wrap_with_shift(&self, raw: [i64; 3]) -> Option<(Indices, [i64; 3])> {
        let extent = self.extent();
        let mut out = [0u64; 3];
        let mut shift = [0i64; 3];
        for d in 0..3 {
            let e = extent[d] as i64;
            let v = raw[d];
            if (0..e).contains(&v) {
                out[d] = v as u64;
            } else if self.periodic[d] {
                let w = v.rem_euclid(e);
                out[d] = w as u64;
                shift[d] = v - w;
            } else {
                return None;
            }
        }
        Some((Indices(out), shift))
    }

    fn check_level(&self, level: u32) -> Result<(), TopologyError> {
        if level > self.max_level {
            Err(TopologyError::LevelOutOfRange {
                level,
                max_level: self.max_level,
            })
        } else {
            Ok(())
        }
    }
}
