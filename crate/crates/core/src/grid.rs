//! A rank's view of the distributed grid: mesh structure plus cell data.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use crate::cell::CellData;
use crate::error::GridError;
use crate::exchange::{Batching, InFlight, TransferPlan};
use crate::geometry::{ConstantGeometry, Geometry};
use crate::mesh::{Mesh, Neighbor};
use crate::partition::{partition, PartitionMethod};
use crate::topology::{CellId, Topology};
use crate::transport::{Comm, Rank};

/// Parameters of a grid. Every rank must build its grid from identical
/// parameters.
#[derive(Debug, Clone)]
pub struct GridBuilder {
    size: [u64; 3],
    max_level: u32,
    periodic: [bool; 3],
    neighborhood: u32,
    geometry: ConstantGeometry,
    partition: PartitionMethod,
}

impl GridBuilder {
    /// A grid of `size` level-0 cells, unrefinable, non-periodic, with
    /// neighborhood size 1 and everything on rank 0.
    pub fn new(size: [u64; 3]) -> Self {
        GridBuilder {
            size,
            max_level: 0,
            periodic: [false; 3],
            neighborhood: 1,
            geometry: ConstantGeometry::default(),
            partition: PartitionMethod::None,
        }
    }

    pub fn max_level(mut self, max_level: u32) -> Self {
        self.max_level = max_level;
        self
    }

    pub fn periodic(mut self, periodic: [bool; 3]) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn neighborhood(mut self, n: u32) -> Self {
        self.neighborhood = n;
        self
    }

    pub fn geometry(mut self, geometry: ConstantGeometry) -> Self {
        self.geometry = geometry;
        self
    }

    /// Method for the initial partition and for [`Grid::balance_load`].
    pub fn partition(mut self, method: PartitionMethod) -> Self {
        self.partition = method;
        self
    }

    /// Creates all level-0 cells with default data. Needs no communication.
    pub fn build<D: CellData>(self, comm: Comm) -> Result<Grid<D>, GridError> {
        let topology = Topology::new(self.size, self.max_level, self.periodic)?;
        let cells: Vec<CellId> = (1..=topology.level0_count()).map(CellId).collect();
        let ranks = comm.size();
        let owners = partition(self.partition, &topology, &cells, &vec![1.0; cells.len()], ranks)
            .unwrap_or_else(|| vec![0; cells.len()]);
        let table: FxHashMap<CellId, Rank> = cells.iter().copied().zip(owners).collect();
        let mesh = Mesh::new(topology, self.neighborhood, comm.rank(), ranks, table)?;
        let data = mesh.local_cells().iter().map(|&c| (c, D::default())).collect();
        let mut grid = Grid {
            mesh,
            geometry: self.geometry,
            comm,
            data,
            remote: FxHashMap::default(),
            refine_requests: BTreeSet::new(),
            unrefine_requests: BTreeSet::new(),
            pins: Default::default(),
            weights: FxHashMap::default(),
            partition_method: self.partition,
            batching: Batching::PerRank,
            plan: None,
            in_flight: None,
        };
        grid.sync_remote_copies();
        Ok(grid)
    }
}

/// One rank's part of a distributed grid.
///
/// Cells are addressed by id everywhere. Data of local cells is read and
/// written with [`Grid::data`] and [`Grid::data_mut`]; copies of remote
/// neighbors are readable through [`Grid::data`] too and are refreshed only
/// by the exchange functions.
pub struct Grid<D: CellData> {
    pub(crate) mesh: Mesh,
    pub(crate) geometry: ConstantGeometry,
    pub(crate) comm: Comm,
    pub(crate) data: FxHashMap<CellId, D>,
    pub(crate) remote: FxHashMap<CellId, D>,
    pub(crate) refine_requests: BTreeSet<CellId>,
    pub(crate) unrefine_requests: BTreeSet<CellId>,
    pub(crate) pins: std::collections::BTreeMap<CellId, Rank>,
    pub(crate) weights: FxHashMap<CellId, f64>,
    pub(crate) partition_method: PartitionMethod,
    pub(crate) batching: Batching,
    pub(crate) plan: Option<TransferPlan>,
    pub(crate) in_flight: Option<InFlight>,
}

impl<D: CellData> Grid<D> {
    pub fn comm(&self) -> &Comm {
        &self.comm
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn topology(&self) -> &Topology {
        self.mesh.topology()
    }

    pub fn geometry(&self) -> &ConstantGeometry {
        &self.geometry
    }

    pub fn partition_method(&self) -> PartitionMethod {
        self.partition_method
    }

    pub fn set_partition_method(&mut self, method: PartitionMethod) {
        self.partition_method = method;
    }

    pub fn local_cells(&self) -> &[CellId] {
        self.mesh.local_cells()
    }

    pub fn cell_count(&self) -> usize {
        self.mesh.cell_count()
    }

    pub fn exists(&self, id: CellId) -> bool {
        self.mesh.exists(id)
    }

    pub fn owner_of(&self, id: CellId) -> Result<Rank, GridError> {
        self.mesh.owner_of(id)
    }

    pub fn is_local(&self, id: CellId) -> Result<bool, GridError> {
        self.mesh.is_local(id)
    }

    pub fn neighbors_of(&self, id: CellId) -> Result<&[Neighbor], GridError> {
        self.mesh.neighbors_of(id)
    }

    pub fn neighbors_to(&self, id: CellId) -> Result<&[Neighbor], GridError> {
        self.mesh.neighbors_to(id)
    }

    pub fn inner_cells(&self) -> &[CellId] {
        self.mesh.inner_cells()
    }

    pub fn outer_cells(&self) -> &[CellId] {
        self.mesh.outer_cells()
    }

    pub fn remote_neighbors(&self) -> &[CellId] {
        self.mesh.remote_neighbors()
    }

    pub fn level_of(&self, id: CellId) -> Result<u32, GridError> {
        Ok(self.topology().level_of(id)?)
    }

    pub fn cell_center(&self, id: CellId) -> Result<[f64; 3], GridError> {
        Ok(self.geometry.cell_center(self.topology(), id)?)
    }

    pub fn cell_length(&self, id: CellId) -> Result<[f64; 3], GridError> {
        Ok(self.geometry.cell_length(self.topology(), id)?)
    }

    pub fn cell_volume(&self, id: CellId) -> Result<f64, GridError> {
        Ok(self.geometry.cell_volume(self.topology(), id)?)
    }

    /// Data of a local cell or the local copy of a remote neighbor.
    pub fn data(&self, id: CellId) -> Option<&D> {
        self.data.get(&id).or_else(|| self.remote.get(&id))
    }

    pub fn data_mut(&mut self, id: CellId) -> Result<&mut D, GridError> {
        if !self.data.contains_key(&id) {
            self.require_local(id)?;
        }
        Ok(self.data.get_mut(&id).expect("local cells have data"))
    }

    /// Copy of a remote neighbor's data, if `id` is one.
    pub fn remote_copy(&self, id: CellId) -> Option<&D> {
        self.remote.get(&id)
    }

    /// Mutable access to remote copies, for resizing receive buffers
    /// between the phases of a variable-size exchange.
    pub fn remote_copy_mut(&mut self, id: CellId) -> Option<&mut D> {
        self.remote.get_mut(&id)
    }

    /// Local cells with their data, ascending by id.
    pub fn local_data(&self) -> impl Iterator<Item = (CellId, &D)> {
        self.mesh.local_cells().iter().map(|c| (*c, &self.data[c]))
    }

    pub(crate) fn require_local(&self, id: CellId) -> Result<(), GridError> {
        let owner = self.mesh.owner_of(id)?;
        if owner == self.comm.rank() {
            Ok(())
        } else {
            Err(GridError::NotLocal { cell: id, owner })
        }
    }

    pub(crate) fn ensure_no_exchange(&self) -> Result<(), GridError> {
        if self.in_flight.is_some() {
            Err(GridError::StructureChangedDuringExchange)
        } else {
            Ok(())
        }
    }

    /// Called after the owner table changed: rebuilds arrows, remote copy
    /// storage and drops the transfer plan.
    pub(crate) fn structure_changed(&mut self) -> Result<(), GridError> {
        self.mesh.rebuild()?;
        self.plan = None;
        self.sync_remote_copies();
        Ok(())
    }

    fn sync_remote_copies(&mut self) {
        let mut remote = FxHashMap::default();
        for &c in self.mesh.remote_neighbors() {
            let d = self.remote.remove(&c).unwrap_or_default();
            remote.insert(c, d);
        }
        self.remote = remote;
    }
}
