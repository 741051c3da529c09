//! The grid graph.
//!
//! Every rank holds the complete cell to owner table. For its own cells it
//! additionally keeps two arrow lists: `neighbors_of(c)`, the cells whose
//! data `c` depends on, and `neighbors_to(c)`, the cells that depend on `c`.
//! With refinement the two differ: a small cell next to a large one sees
//! fewer cells than the large one does.
//!
//! A cell of level `l` and edge `s` (in finest indices) with neighborhood
//! size `n >= 1` sees every cell intersecting the box that extends `n * s`
//! past each of its faces. With `n == 0` it sees the cells intersecting the
//! six face-adjacent boxes of its own size. Periodic dimensions make a cell
//! visible once per periodic image, so each arrow carries the image shift.

use rustc_hash::FxHashMap;

use crate::error::GridError;
use crate::topology::{CellId, Indices, Topology};
use crate::transport::Rank;

/// Largest accepted neighborhood size.
pub const MAX_NEIGHBORHOOD: u32 = 1024;

/// One arrow of a cell's neighbor list.
///
/// `shift` counts how many grid extents the neighbor's periodic image is
/// displaced from the neighbor itself; it is zero without periodicity.
/// Arrows are ordered by id, then shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Neighbor {
    pub id: CellId,
    pub shift: [i16; 3],
}

impl Neighbor {
    pub fn new(id: CellId, shift: [i16; 3]) -> Self {
        Neighbor { id, shift }
    }

    /// Finest-lattice corner of the periodic image this arrow points at.
    pub fn image_corner(&self, topology: &Topology) -> [i64; 3] {
        let ix = topology
            .indices_of(self.id)
            .expect("arrows reference valid cells")
            .0;
        let extent = topology.extent();
        [0, 1, 2].map(|d| ix[d] as i64 + self.shift[d] as i64 * extent[d] as i64)
    }

    /// The same arrow seen from the other end.
    pub fn reversed(&self, id: CellId) -> Neighbor {
        Neighbor {
            id,
            shift: self.shift.map(|s| -s),
        }
    }
}

/// Whether the half-open box `[corner, corner + size)` intersects the
/// neighborhood of a cell with the given corner and size.
pub(crate) fn region_intersects(n: u32, center_corner: [i64; 3], center_size: i64, corner: [i64; 3], size: i64) -> bool {
    let overlaps = |lo: [i64; 3], hi: [i64; 3]| (0..3).all(|d| corner[d] < hi[d] && corner[d] + size > lo[d]);
    if n > 0 {
        let r = n as i64 * center_size;
        let lo = center_corner.map(|c| c - r);
        let hi = center_corner.map(|c| c + center_size + r);
        return overlaps(lo, hi);
    }
    for d in 0..3 {
        for dir in [-1, 1] {
            let mut lo = center_corner;
            lo[d] += dir * center_size;
            let hi = lo.map(|v| v + center_size);
            if overlaps(lo, hi) {
                return true;
            }
        }
    }
    false
}

fn block_offsets(n: u32) -> Vec<[i64; 3]> {
    if n == 0 {
        return vec![[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
    }
    let n = n as i64;
    let mut out = Vec::with_capacity(((2 * n + 1) as usize).pow(3));
    for z in -n..=n {
        for y in -n..=n {
            for x in -n..=n {
                out.push([x, y, z]);
            }
        }
    }
    out
}

fn shift_units(topology: &Topology, delta: [i64; 3]) -> [i16; 3] {
    let extent = topology.extent();
    [0, 1, 2].map(|d| (delta[d] / extent[d] as i64) as i16)
}

/// Neighbor search of `id` against an arbitrary existence predicate.
///
/// The neighborhood is tiled by blocks of the cell's own size. Each block is
/// covered either by one cell of the same level, by the parent-level cell
/// containing it, or by all eight of its children; anything else means the
/// refinement levels around the cell are out of balance.
pub(crate) fn search_neighbors_in(
    topology: &Topology,
    n: u32,
    id: CellId,
    exists: impl Fn(CellId) -> bool,
) -> Result<Vec<Neighbor>, GridError> {
    let (level, Indices(ix)) = topology.locate(id)?;
    let s = topology.cell_size(level) as i64;
    let corner = ix.map(|v| v as i64);
    let max_level = topology.max_level();
    let mut out = Vec::new();
    for b in block_offsets(n) {
        let raw = [0, 1, 2].map(|d| corner[d] + b[d] * s);
        let Some((Indices(w), delta)) = topology.wrap_with_shift(raw) else {
            continue;
        };
        let shift = shift_units(topology, delta);
        let same = topology.id_unchecked(level, w);
        if exists(same) {
            out.push(Neighbor::new(same, shift));
            continue;
        }
        if level > 0 {
            let parent = topology.id_unchecked(level - 1, w);
            if exists(parent) {
                out.push(Neighbor::new(parent, shift));
                continue;
            }
        }
        if level < max_level {
            let half = s as u64 / 2;
            let mut children = [CellId::INVALID; 8];
            let mut all = true;
            let mut k = 0;
            for dz in 0..2 {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let c = topology.id_unchecked(level + 1, [w[0] + dx * half, w[1] + dy * half, w[2] + dz * half]);
                        all &= exists(c);
                        children[k] = c;
                        k += 1;
                    }
                }
            }
            if all {
                out.extend(children.iter().map(|&c| Neighbor::new(c, shift)));
                continue;
            }
        }
        return Err(GridError::BalanceViolation { cell: id, near: w });
    }
    out.sort_unstable();
    out.dedup();
    out.retain(|nb| !(nb.id == id && nb.shift == [0; 3]));
    Ok(out)
}

/// Cells having `id` in their own neighborhood, given `id`'s forward list.
///
/// Such a cell is either at least as fine as `id`, in which case it is in
/// the forward list already, or one level coarser and close to `id`'s
/// parent.
pub(crate) fn reverse_neighbors_in(
    topology: &Topology,
    n: u32,
    id: CellId,
    forward: &[Neighbor],
    exists: impl Fn(CellId) -> bool,
) -> Vec<Neighbor> {
    let (level, Indices(ix)) = topology.locate(id).expect("searched cell is valid");
    let s = topology.cell_size(level) as i64;
    let corner = ix.map(|v| v as i64);
    let extent = topology.extent();
    let mut out = Vec::new();
    for nb in forward {
        let (nl, Indices(nix)) = topology.locate(nb.id).expect("arrows reference valid cells");
        if nl < level {
            continue;
        }
        let image = [0, 1, 2].map(|d| nix[d] as i64 + nb.shift[d] as i64 * extent[d] as i64);
        if region_intersects(n, image, topology.cell_size(nl) as i64, corner, s) {
            out.push(*nb);
        }
    }
    if level > 0 {
        let ps = 2 * s;
        let pc = corner.map(|v| v - v.rem_euclid(ps));
        let m = n.max(1) as i64;
        for z in -m..=m {
            for y in -m..=m {
                for x in -m..=m {
                    let raw = [pc[0] + x * ps, pc[1] + y * ps, pc[2] + z * ps];
                    let Some((Indices(w), delta)) = topology.wrap_with_shift(raw) else {
                        continue;
                    };
                    let coarse = topology.id_unchecked(level - 1, w);
                    if exists(coarse) && region_intersects(n, raw, ps, corner, s) {
                        out.push(Neighbor::new(coarse, shift_units(topology, delta)));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Replicated cell table plus arrow lists of one rank's cells.
#[derive(Debug, Clone)]
pub struct Mesh {
    topology: Topology,
    neighborhood: u32,
    rank: Rank,
    ranks: usize,
    owners: FxHashMap<CellId, Rank>,
    local: Vec<CellId>,
    local_index: FxHashMap<CellId, usize>,
    of_start: Vec<usize>,
    of_list: Vec<Neighbor>,
    to_start: Vec<usize>,
    to_list: Vec<Neighbor>,
    remote_neighbors: Vec<CellId>,
    inner: Vec<CellId>,
    outer: Vec<CellId>,
    epoch: u64,
}

impl Mesh {
    /// Builds the mesh seen by `rank` from a complete cell to owner table.
    pub fn new(
        topology: Topology,
        neighborhood: u32,
        rank: Rank,
        ranks: usize,
        owners: FxHashMap<CellId, Rank>,
    ) -> Result<Mesh, GridError> {
        if neighborhood > MAX_NEIGHBORHOOD {
            return Err(GridError::NeighborhoodTooLarge(neighborhood));
        }
        if rank >= ranks {
            return Err(GridError::InvalidRank { rank, ranks });
        }
        if let Some((&id, &owner)) = owners.iter().find(|(id, &o)| o >= ranks || !topology.is_valid(**id)) {
            if !topology.is_valid(id) {
                return Err(GridError::NoSuchCell(id));
            }
            return Err(GridError::InvalidRank { rank: owner, ranks });
        }
        let mut mesh = Mesh {
            topology,
            neighborhood,
            rank,
            ranks,
            owners,
            local: Vec::new(),
            local_index: FxHashMap::default(),
            of_start: Vec::new(),
            of_list: Vec::new(),
            to_start: Vec::new(),
            to_list: Vec::new(),
            remote_neighbors: Vec::new(),
            inner: Vec::new(),
            outer: Vec::new(),
            epoch: 0,
        };
        mesh.rebuild()?;
        Ok(mesh)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn neighborhood(&self) -> u32 {
        self.neighborhood
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    /// Incremented by every structural or ownership change.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn cell_count(&self) -> usize {
        self.owners.len()
    }

    pub fn exists(&self, id: CellId) -> bool {
        self.owners.contains_key(&id)
    }

    pub fn owner_of(&self, id: CellId) -> Result<Rank, GridError> {
        self.owners.get(&id).copied().ok_or(GridError::NoSuchCell(id))
    }

    pub fn is_local(&self, id: CellId) -> Result<bool, GridError> {
        Ok(self.owner_of(id)? == self.rank)
    }

    /// This rank's cells in ascending id order.
    pub fn local_cells(&self) -> &[CellId] {
        &self.local
    }

    /// Unordered view of the replicated table.
    pub fn owners(&self) -> &FxHashMap<CellId, Rank> {
        &self.owners
    }

    /// All cells with owners, ascending by id.
    pub fn sorted_cells(&self) -> Vec<(CellId, Rank)> {
        let mut v: Vec<_> = self.owners.iter().map(|(&c, &r)| (c, r)).collect();
        v.sort_unstable();
        v
    }

    fn local_slot(&self, id: CellId) -> Result<usize, GridError> {
        match self.local_index.get(&id) {
            Some(&i) => Ok(i),
            None => {
                let owner = self.owner_of(id)?;
                Err(GridError::NotLocal { cell: id, owner })
            }
        }
    }

    /// Cells whose data the local cell `id` depends on.
    pub fn neighbors_of(&self, id: CellId) -> Result<&[Neighbor], GridError> {
        let i = self.local_slot(id)?;
        Ok(&self.of_list[self.of_start[i]..self.of_start[i + 1]])
    }

    /// Cells that have the local cell `id` among their neighbors.
    pub fn neighbors_to(&self, id: CellId) -> Result<&[Neighbor], GridError> {
        let i = self.local_slot(id)?;
        Ok(&self.to_list[self.to_start[i]..self.to_start[i + 1]])
    }

    /// Cells owned by other ranks that appear in local arrow lists,
    /// ascending.
    pub fn remote_neighbors(&self) -> &[CellId] {
        &self.remote_neighbors
    }

    /// Local cells without remote neighbors.
    pub fn inner_cells(&self) -> &[CellId] {
        &self.inner
    }

    /// Local cells with at least one neighbor on another rank.
    pub fn outer_cells(&self) -> &[CellId] {
        &self.outer
    }

    pub fn classify_cells(&self) -> (Vec<CellId>, Vec<CellId>) {
        (self.inner.clone(), self.outer.clone())
    }

    /// The finest existing cell covering `indices`.
    pub fn find_smallest_existing(&self, indices: Indices) -> Option<CellId> {
        (0..=self.topology.max_level())
            .rev()
            .filter_map(|l| self.topology.id_containing(l, indices).ok())
            .find(|c| self.exists(*c))
    }

    /// Fresh neighbor search for any existing cell, local or not.
    pub fn search_neighbors(&self, id: CellId) -> Result<Vec<Neighbor>, GridError> {
        if !self.exists(id) {
            return Err(GridError::NoSuchCell(id));
        }
        search_neighbors_in(&self.topology, self.neighborhood, id, |c| self.owners.contains_key(&c))
    }

    /// FNV-1a hash of the sorted (cell, owner) table. Equal on all ranks
    /// whenever their tables agree.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (c, r) in self.sorted_cells() {
            for b in c.0.to_le_bytes().into_iter().chain((r as u64).to_le_bytes()) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub(crate) fn owners_mut(&mut self) -> &mut FxHashMap<CellId, Rank> {
        &mut self.owners
    }

    /// Recomputes local cells, arrow lists and the inner/outer split after
    /// the owner table changed. Fails if refinement levels are out of
    /// balance anywhere around a local cell.
    pub(crate) fn rebuild(&mut self) -> Result<(), GridError> {
        self.epoch += 1;
        let mut local: Vec<CellId> = self
            .owners
            .iter()
            .filter(|(_, &r)| r == self.rank)
            .map(|(&c, _)| c)
            .collect();
        local.sort_unstable();
        self.local_index = local.iter().enumerate().map(|(i, &c)| (c, i)).collect();

        let owners = &self.owners;
        let exists = |c: CellId| owners.contains_key(&c);
        let mut of_start = Vec::with_capacity(local.len() + 1);
        let mut to_start = Vec::with_capacity(local.len() + 1);
        let mut of_list = Vec::new();
        let mut to_list = Vec::new();
        of_start.push(0);
        to_start.push(0);
        for &c in &local {
            let of = search_neighbors_in(&self.topology, self.neighborhood, c, exists)?;
            let to = reverse_neighbors_in(&self.topology, self.neighborhood, c, &of, exists);
            of_list.extend_from_slice(&of);
            to_list.extend_from_slice(&to);
            of_start.push(of_list.len());
            to_start.push(to_list.len());
        }

        let mut remote = Vec::new();
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        for (i, &c) in local.iter().enumerate() {
            let arrows = of_list[of_start[i]..of_start[i + 1]]
                .iter()
                .chain(&to_list[to_start[i]..to_start[i + 1]]);
            let mut is_outer = false;
            for nb in arrows {
                if owners[&nb.id] != self.rank {
                    is_outer = true;
                    remote.push(nb.id);
                }
            }
            if is_outer {
                outer.push(c);
            } else {
                inner.push(c);
            }
        }
        remote.sort_unstable();
        remote.dedup();

        self.local = local;
        self.of_start = of_start;
        self.of_list = of_list;
        self.to_start = to_start;
        self.to_list = to_list;
        self.remote_neighbors = remote;
        self.inner = inner;
        self.outer = outer;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(size: [u64; 3], max_level: u32, periodic: [bool; 3], n: u32) -> Mesh {
        let t = Topology::new(size, max_level, periodic).unwrap();
        let owners = (1..=t.level0_count()).map(|i| (CellId(i), 0)).collect();
        Mesh::new(t, n, 0, 1, owners).unwrap()
    }

    #[test]
    fn periodic_counts() {
        for (n, count) in [(1, 26), (2, 124)] {
            let m = uniform([4, 4, 4], 0, [true; 3], n);
            for &c in m.local_cells() {
                assert_eq!(m.neighbors_of(c).unwrap().len(), count);
                assert_eq!(m.neighbors_to(c).unwrap(), m.neighbors_of(c).unwrap());
            }
        }
    }

    #[test]
    fn lone_cell_has_no_neighbors() {
        let m = uniform([1, 1, 1], 0, [false; 3], 1);
        assert!(m.neighbors_of(CellId(1)).unwrap().is_empty());
        assert!(m.neighbors_to(CellId(1)).unwrap().is_empty());
    }

    #[test]
    fn face_neighbors_of_uniform_grid() {
        let m = uniform([3, 3, 3], 0, [false; 3], 0);
        let center = CellId(14);
        let ids: Vec<u64> = m.neighbors_of(center).unwrap().iter().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![5, 11, 13, 15, 17, 23]);
    }

    #[test]
    fn fig2_asymmetry() {
        let t = Topology::new([1, 1, 1], 2, [false; 3]).unwrap();
        let mut owners: FxHashMap<CellId, Rank> = FxHashMap::default();
        for c in t.children_of(CellId(1)).unwrap() {
            owners.insert(c, 0);
        }
        owners.remove(&CellId(3));
        for c in t.children_of(CellId(3)).unwrap() {
            owners.insert(c, 0);
        }
        let m = Mesh::new(t, 1, 0, 1, owners).unwrap();
        let ids = |l: &[Neighbor]| l.iter().map(|n| n.id).collect::<Vec<_>>();
        assert!(ids(m.neighbors_of(CellId(2)).unwrap()).contains(&CellId(13)));
        assert!(!ids(m.neighbors_of(CellId(13)).unwrap()).contains(&CellId(2)));
        assert!(ids(m.neighbors_to(CellId(13)).unwrap()).contains(&CellId(2)));
    }

    #[test]
    fn unbalanced_mesh_is_rejected() {
        let t = Topology::new([2, 1, 1], 2, [false; 3]).unwrap();
        let mut owners: FxHashMap<CellId, Rank> = FxHashMap::default();
        owners.insert(CellId(1), 0);
        // cell 2 refined twice: level-2 cells next to level-0 cell 1
        let level1 = t.children_of(CellId(2)).unwrap();
        for &c in &level1 {
            for g in t.children_of(c).unwrap() {
                owners.insert(g, 0);
            }
        }
        assert!(matches!(
            Mesh::new(t, 1, 0, 1, owners),
            Err(GridError::BalanceViolation { .. })
        ));
    }

    #[test]
    fn smallest_existing() {
        let t = Topology::new([1, 1, 1], 2, [false; 3]).unwrap();
        let owners = std::iter::once((CellId(1), 0)).collect();
        let m = Mesh::new(t, 1, 0, 1, owners).unwrap();
        assert_eq!(m.find_smallest_existing(Indices::new(3, 2, 1)), Some(CellId(1)));
    }

    #[test]
    fn outer_cells_of_1d_split() {
        let t = Topology::new([4, 1, 1], 0, [false; 3]).unwrap();
        let owners: FxHashMap<CellId, Rank> = [(1, 0), (2, 0), (3, 1), (4, 1)]
            .into_iter()
            .map(|(c, r)| (CellId(c), r))
            .collect();
        let m = Mesh::new(t, 1, 0, 2, owners).unwrap();
        assert_eq!(m.inner_cells(), &[CellId(1)]);
        assert_eq!(m.outer_cells(), &[CellId(2)]);
        assert_eq!(m.remote_neighbors(), &[CellId(3)]);
        assert!(matches!(m.neighbors_of(CellId(3)), Err(GridError::NotLocal { owner: 1, .. })));
        assert!(matches!(m.neighbors_of(CellId(9)), Err(GridError::NoSuchCell(_))));
    }
}
