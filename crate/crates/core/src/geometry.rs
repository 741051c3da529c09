//! Physical placement of cells.

use crate::topology::{CellId, Topology, TopologyError};

/// Maps cells to physical space.
pub trait Geometry {
    /// Physical edge lengths of a cell.
    fn cell_length(&self, topology: &Topology, id: CellId) -> Result<[f64; 3], TopologyError>;

    /// Axis-aligned extent of a cell as (min corner, max corner).
    fn cell_bounding_box(
        &self,
        topology: &Topology,
        id: CellId,
    ) -> Result<([f64; 3], [f64; 3]), TopologyError>;

    fn cell_center(&self, topology: &Topology, id: CellId) -> Result<[f64; 3], TopologyError> {
        let (lo, hi) = self.cell_bounding_box(topology, id)?;
        Ok([0, 1, 2].map(|d| lo[d] + (hi[d] - lo[d]) / 2.0))
    }

    fn cell_volume(&self, topology: &Topology, id: CellId) -> Result<f64, TopologyError> {
        let len = self.cell_length(topology, id)?;
        Ok(len[0] * len[1] * len[2])
    }
}

/// Homogeneous cartesian geometry: every cell of a refinement level has the
/// same size, half that of the previous level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantGeometry {
    pub origin: [f64; 3],
    /// Edge lengths of a level-0 cell.
    pub level0_cell_length: [f64; 3],
}

impl Default for ConstantGeometry {
    fn default() -> Self {
        ConstantGeometry {
            origin: [0.0; 3],
            level0_cell_length: [1.0; 3],
        }
    }
}

impl ConstantGeometry {
    pub fn new(origin: [f64; 3], level0_cell_length: [f64; 3]) -> Self {
        ConstantGeometry {
            origin,
            level0_cell_length,
        }
    }

    /// Physical length of one finest-lattice index step.
    pub fn index_length(&self, topology: &Topology) -> [f64; 3] {
        let scale = (1u64 << topology.max_level()) as f64;
        self.level0_cell_length.map(|l| l / scale)
    }
}

impl Geometry for ConstantGeometry {
    fn cell_length(&self, topology: &Topology, id: CellId) -> Result<[f64; 3], TopologyError> {
        let level = topology.level_of(id)?;
        let scale = (1u64 << level) as f64;
        Ok(self.level0_cell_length.map(|l| l / scale))
    }

    fn cell_bounding_box(
        &self,
        topology: &Topology,
        id: CellId,
    ) -> Result<([f64; 3], [f64; 3]), TopologyError> {
        let (level, ix) = topology.locate(id)?;
        let step = self.index_length(topology);
        let span = topology.cell_size(level);
        let lo = [0, 1, 2].map(|d| self.origin[d] + ix.0[d] as f64 * step[d]);
        let hi = [0, 1, 2].map(|d| self.origin[d] + (ix.0[d] + span) as f64 * step[d]);
        Ok((lo, hi))
    }

    fn cell_center(&self, topology: &Topology, id: CellId) -> Result<[f64; 3], TopologyError> {
        let (level, ix) = topology.locate(id)?;
        let step = self.index_length(topology);
        let half = topology.cell_size(level) as f64 / 2.0;
        Ok([0, 1, 2].map(|d| self.origin[d] + (ix.0[d] as f64 + half) * step[d]))
    }
}
