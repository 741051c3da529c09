//! Assigning cells to ranks.
//!
//! Every method is a pure function of the replicated cell table, so all
//! ranks compute the same assignment without talking to each other. Only
//! the data of moved cells travels, point to point, in
//! [`Grid::balance_load`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::cell::CellData;
use crate::error::GridError;
use crate::grid::Grid;
use crate::topology::{CellId, Topology};
use crate::transport::{Rank, Subsystem, Tag};
use crate::wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionMethod {
    /// Keep the current owners. A freshly built grid puts every cell on
    /// rank 0.
    #[default]
    None,
    /// Independent uniform draw per cell, in ascending id order.
    Random { seed: u64 },
    /// Contiguous id ranges of similar total weight.
    Block,
    /// Recursive weighted median splits of cell centers along the longest
    /// axis of the current subdomain.
    Rcb,
    /// Contiguous chunks, of similar total weight, of the cells ordered
    /// along a Hilbert curve through their centers.
    HilbertSfc,
}

impl std::str::FromStr for PartitionMethod {
    type Err = String;

    /// Parses `none`, `block`, `rcb`, `hilbert` and `random:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "none" => Ok(PartitionMethod::None),
            "block" => Ok(PartitionMethod::Block),
            "rcb" => Ok(PartitionMethod::Rcb),
            "hilbert" | "hilbert_sfc" | "hsfc" => Ok(PartitionMethod::HilbertSfc),
            "random" => Err("random partitioning needs a seed: random:<seed>".into()),
            other => match other.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| PartitionMethod::Random { seed })
                    .map_err(|e| format!("bad random seed {seed:?}: {e}")),
                None => Err(format!("unknown partition method {s:?}")),
            },
        }
    }
}

/// Position on a 3D Hilbert curve, compared as a 192-bit integer (most
/// significant word first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HilbertKey(pub [u64; 3]);

// Skilling, "Programming the Hilbert curve" (2004): coordinates to the
// transposed Hilbert index, in place.
fn axes_to_transpose(x: &mut [u64; 3], bits: u32) {
    let m = 1u64 << (bits - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..3 {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..3 {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    q = m;
    while q > 1 {
        if x[2] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }
}

fn transpose_to_axes(x: &mut [u64; 3], bits: u32) {
    let n = 1u64 << bits;
    let t = x[2] >> 1;
    for i in (1..3).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    let mut q = 2;
    while q != n {
        let p = q - 1;
        for i in (0..3).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
}

/// Hilbert index of a point of the cube `[0, 2^bits)^3`.
pub fn hilbert_key(coords: [u64; 3], bits: u32) -> HilbertKey {
    assert!((1..=64).contains(&bits), "hilbert curve order must be in 1..=64");
    let mut x = coords;
    axes_to_transpose(&mut x, bits);
    let mut key = [0u64; 3];
    let mut pos = 0usize; // bit position counted from the least significant end
    for j in 0..bits {
        for i in (0..3).rev() {
            if (x[i] >> j) & 1 == 1 {
                key[2 - pos / 64] |= 1 << (pos % 64);
            }
            pos += 1;
        }
    }
    HilbertKey(key)
}

/// Inverse of [`hilbert_key`].
pub fn hilbert_point(key: HilbertKey, bits: u32) -> [u64; 3] {
    assert!((1..=64).contains(&bits), "hilbert curve order must be in 1..=64");
    let mut x = [0u64; 3];
    let mut pos = 0usize;
    for j in 0..bits {
        for i in (0..3).rev() {
            if (key.0[2 - pos / 64] >> (pos % 64)) & 1 == 1 {
                x[i] |= 1 << j;
            }
            pos += 1;
        }
    }
    transpose_to_axes(&mut x, bits);
    x
}

/// Curve order used for a topology: centers are taken on the doubled
/// finest lattice, so the cube side is twice the smallest power of two
/// covering the largest extent.
pub fn hilbert_bits(topology: &Topology) -> u32 {
    let max_extent = topology.extent().into_iter().max().unwrap_or(1);
    max_extent.next_power_of_two().trailing_zeros() + 1
}

/// Cell center on the doubled finest lattice: `2 * corner + size`.
pub fn doubled_center(topology: &Topology, id: CellId) -> [u64; 3] {
    let (level, ix) = topology.locate(id).expect("partitioned cells are valid");
    let s = topology.cell_size(level);
    ix.0.map(|v| 2 * v + s)
}

/// Cells sorted along the Hilbert curve, ties broken by id.
pub fn hilbert_order(topology: &Topology, cells: &[CellId]) -> Vec<CellId> {
    let bits = hilbert_bits(topology);
    let mut keyed: Vec<(HilbertKey, CellId)> = cells
        .iter()
        .map(|&c| (hilbert_key(doubled_center(topology, c), bits), c))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, c)| c).collect()
}

/// Splits a sequence into `ranks` contiguous parts of similar weight: an
/// item goes to the part its weight midpoint falls into.
fn chunk(order: &[usize], weights: &[f64], ranks: usize, out: &mut [Rank]) {
    let total: f64 = order.iter().map(|&i| weights[i]).sum();
    let mut before = 0.0;
    for &i in order {
        let w = weights[i];
        let part = if total > 0.0 {
            (((before + w / 2.0) * ranks as f64 / total).floor() as usize).min(ranks - 1)
        } else {
            0
        };
        out[i] = part;
        before += w;
    }
}

fn rcb(centers: &[[u64; 3]], ids: &[CellId], weights: &[f64], items: &mut [usize], r0: Rank, r1: Rank, out: &mut [Rank]) {
    if items.is_empty() {
        return;
    }
    if r1 - r0 == 1 {
        for &i in items.iter() {
            out[i] = r0;
        }
        return;
    }
    let mut lo = [u64::MAX; 3];
    let mut hi = [0u64; 3];
    for &i in items.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(centers[i][d]);
            hi[d] = hi[d].max(centers[i][d]);
        }
    }
    let mut axis = 0;
    for d in 1..3 {
        if hi[d] - lo[d] > hi[axis] - lo[axis] {
            axis = d;
        }
    }
    items.sort_unstable_by_key(|&i| (centers[i][axis], ids[i]));
    let low_ranks = (r1 - r0) / 2;
    let total: f64 = items.iter().map(|&i| weights[i]).sum();
    let target = total * low_ranks as f64 / (r1 - r0) as f64;
    // split index whose prefix weight is closest to the target, earliest on ties
    let mut best = 0;
    let mut best_err = target.abs();
    let mut prefix = 0.0;
    for (k, &i) in items.iter().enumerate() {
        prefix += weights[i];
        let err = (prefix - target).abs();
        if err < best_err {
            best = k + 1;
            best_err = err;
        }
    }
    let (left, right) = items.split_at_mut(best);
    rcb(centers, ids, weights, left, r0, r0 + low_ranks, out);
    rcb(centers, ids, weights, right, r0 + low_ranks, r1, out);
}

/// Assigns each of `cells` (ascending ids) to a rank. Returns `None` for
/// [`PartitionMethod::None`], which keeps the current owners.
pub fn partition(
    method: PartitionMethod,
    topology: &Topology,
    cells: &[CellId],
    weights: &[f64],
    ranks: usize,
) -> Option<Vec<Rank>> {
    assert!(ranks >= 1, "partitioning needs at least one rank");
    assert_eq!(cells.len(), weights.len(), "one weight per cell");
    let mut out = vec![0; cells.len()];
    match method {
        PartitionMethod::None => return None,
        PartitionMethod::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for r in out.iter_mut() {
                *r = rng.gen_range(0..ranks);
            }
        }
        PartitionMethod::Block => {
            let order: Vec<usize> = (0..cells.len()).collect();
            chunk(&order, weights, ranks, &mut out);
        }
        PartitionMethod::HilbertSfc => {
            let bits = hilbert_bits(topology);
            let mut order: Vec<(HilbertKey, CellId, usize)> = cells
                .iter()
                .enumerate()
                .map(|(i, &c)| (hilbert_key(doubled_center(topology, c), bits), c, i))
                .collect();
            order.sort_unstable();
            let order: Vec<usize> = order.into_iter().map(|(_, _, i)| i).collect();
            chunk(&order, weights, ranks, &mut out);
        }
        PartitionMethod::Rcb => {
            let centers: Vec<[u64; 3]> = cells.iter().map(|&c| doubled_center(topology, c)).collect();
            let mut items: Vec<usize> = (0..cells.len()).collect();
            rcb(&centers, cells, weights, &mut items, 0, ranks, &mut out);
        }
    }
    Some(out)
}

/// Outcome of [`Grid::balance_load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MigrationReport {
    /// Cells that changed owner, over all ranks.
    pub moved: usize,
    /// Cells this rank sent away.
    pub sent: usize,
    /// Cells this rank received.
    pub received: usize,
}

const TAG_MIGRATION_LENGTHS: u32 = 1;
const TAG_MIGRATION_DATA: u32 = 2;

impl<D: CellData> Grid<D> {
    /// Requests that local cell `id` be moved to `rank` by every following
    /// load balance, regardless of the partitioning method.
    pub fn pin(&mut self, id: CellId, rank: Rank) -> Result<(), GridError> {
        self.require_local(id)?;
        if rank >= self.comm().size() {
            return Err(GridError::InvalidRank {
                rank,
                ranks: self.comm().size(),
            });
        }
        self.pins.insert(id, rank);
        Ok(())
    }

    pub fn unpin(&mut self, id: CellId) -> Result<(), GridError> {
        self.require_local(id)?;
        self.pins.remove(&id);
        Ok(())
    }

    pub fn unpin_all(&mut self) {
        self.pins.clear();
    }

    /// Partitioning weight of a local cell; cells default to 1.
    pub fn set_weight(&mut self, id: CellId, weight: f64) -> Result<(), GridError> {
        self.require_local(id)?;
        self.weights.insert(id, weight);
        Ok(())
    }

    /// Repartitions with the grid's configured method.
    pub fn balance_load(&mut self) -> Result<MigrationReport, GridError> {
        self.balance_load_with(self.partition_method)
    }

    /// Collective. Computes a new partition, honoring pins, moves the data
    /// of cells that change owner and rebuilds the neighbor lists.
    pub fn balance_load_with(&mut self, method: PartitionMethod) -> Result<MigrationReport, GridError> {
        self.ensure_no_exchange()?;
        let me = self.comm().rank();

        let mut block = Vec::new();
        wire::put_u64(&mut block, self.pins.len() as u64);
        for (&c, &r) in &self.pins {
            wire::put_u64(&mut block, c.0);
            wire::put_u64(&mut block, r as u64);
        }
        let mut weights: Vec<(CellId, f64)> = self.weights.iter().map(|(&c, &w)| (c, w)).collect();
        weights.sort_unstable_by_key(|&(c, _)| c);
        wire::put_u64(&mut block, weights.len() as u64);
        for (c, w) in weights {
            wire::put_u64(&mut block, c.0);
            block.extend_from_slice(&w.to_le_bytes());
        }
        let gathered = self.comm().allgather_variable(block)?;
        let mut all_pins = BTreeMap::new();
        let mut all_weights = FxHashMap::default();
        for (source, b) in gathered.iter().enumerate() {
            let mut r = wire::Reader::new(b, source);
            for _ in 0..r.u64()? {
                let c = CellId(r.u64()?);
                all_pins.insert(c, r.u64()? as Rank);
            }
            for _ in 0..r.u64()? {
                let c = CellId(r.u64()?);
                all_weights.insert(c, r.f64()?);
            }
        }

        let sorted = self.mesh.sorted_cells();
        let ids: Vec<CellId> = sorted.iter().map(|&(c, _)| c).collect();
        let w: Vec<f64> = ids.iter().map(|c| all_weights.get(c).copied().unwrap_or(1.0)).collect();
        let mut new_owners = partition(method, self.topology(), &ids, &w, self.comm().size())
            .unwrap_or_else(|| sorted.iter().map(|&(_, r)| r).collect());
        for (i, c) in ids.iter().enumerate() {
            if let Some(&r) = all_pins.get(c) {
                new_owners[i] = r;
            }
        }

        let mut outgoing: BTreeMap<Rank, Vec<CellId>> = BTreeMap::new();
        let mut incoming: BTreeMap<Rank, Vec<CellId>> = BTreeMap::new();
        let mut moved = 0;
        for (i, &(c, old)) in sorted.iter().enumerate() {
            let new = new_owners[i];
            if new == old {
                continue;
            }
            moved += 1;
            if old == me {
                outgoing.entry(new).or_default().push(c);
            }
            if new == me {
                incoming.entry(old).or_default().push(c);
            }
        }

        let sent = outgoing.values().map(Vec::len).sum();
        let received = incoming.values().map(Vec::len).sum();
        let arrived = self.move_cells(Subsystem::Migration, &outgoing, &incoming, TAG_MIGRATION_LENGTHS, TAG_MIGRATION_DATA)?;
        for cells in outgoing.values() {
            for c in cells {
                self.data.remove(c);
                self.weights.remove(c);
            }
        }
        for (c, d) in arrived {
            self.data.insert(c, d);
        }
        {
            let owners = self.mesh.owners_mut();
            for (i, c) in ids.iter().enumerate() {
                owners.insert(*c, new_owners[i]);
            }
        }
        self.pins = all_pins.into_iter().filter(|(c, _)| self.data.contains_key(c)).collect();
        self.weights.extend(
            incoming
                .values()
                .flatten()
                .filter_map(|c| all_weights.get(c).map(|&w| (*c, w))),
        );
        self.structure_changed()?;
        Ok(MigrationReport { moved, sent, received })
    }

    /// Sends the full state of `outgoing` cells to their destinations and
    /// receives `incoming` ones, two messages per rank pair: the encoded
    /// lengths, then the concatenated encodings. Both maps list cells in
    /// ascending id order.
    pub(crate) fn move_cells(
        &mut self,
        subsystem: Subsystem,
        outgoing: &BTreeMap<Rank, Vec<CellId>>,
        incoming: &BTreeMap<Rank, Vec<CellId>>,
        lengths_tag: u32,
        data_tag: u32,
    ) -> Result<Vec<(CellId, D)>, GridError> {
        let comm = &self.comm;
        let mut sends = Vec::new();
        for (&dest, cells) in outgoing {
            let mut lengths = Vec::with_capacity(8 * cells.len());
            let mut payload = Vec::new();
            for c in cells {
                let before = payload.len();
                self.data[c].encode(&mut payload);
                wire::put_u64(&mut lengths, (payload.len() - before) as u64);
            }
            sends.push(comm.post_send(dest, Tag::new(subsystem, lengths_tag), lengths)?);
            sends.push(comm.post_send(dest, Tag::new(subsystem, data_tag), payload)?);
        }
        let mut out = Vec::new();
        for (&source, cells) in incoming {
            let lengths = comm.receive(source, Tag::new(subsystem, lengths_tag), 8 * cells.len())?;
            if lengths.len() != 8 * cells.len() {
                return Err(GridError::MalformedMessage {
                    sender: source,
                    reason: format!("expected {} lengths, got {} bytes", cells.len(), lengths.len()),
                });
            }
            let mut r = wire::Reader::new(&lengths, source);
            let lens: Vec<usize> = (0..cells.len()).map(|_| r.u64().map(|v| v as usize)).collect::<Result<_, _>>()?;
            let total = lens.iter().sum();
            let payload = comm.receive(source, Tag::new(subsystem, data_tag), total)?;
            if payload.len() != total {
                return Err(GridError::MalformedMessage {
                    sender: source,
                    reason: format!("expected {total} payload bytes, got {}", payload.len()),
                });
            }
            let mut at = 0;
            for (c, len) in cells.iter().zip(lens) {
                let d = D::decode(&payload[at..at + len]).map_err(|e| GridError::Decode {
                    cell: *c,
                    reason: e.0,
                })?;
                out.push((*c, d));
                at += len;
            }
        }
        comm.wait_all_sends(sends)?;
        Ok(out)
    }

    /// Ratio of the largest to the smallest local cell count over all
    /// ranks; infinite when some rank has no cells. Collective.
    pub fn local_cell_fraction(&self) -> Result<f64, GridError> {
        let count = self.mesh.local_cells().len() as u64;
        let counts = self.comm().allgather_variable(count.to_le_bytes().to_vec())?;
        let counts: Vec<u64> = counts
            .iter()
            .enumerate()
            .map(|(source, b)| wire::Reader::new(b, source).u64())
            .collect::<Result<_, _>>()?;
        Ok(cell_fraction(&counts))
    }
}

/// `max / min` of per-rank cell counts, infinite if a count is zero.
pub fn cell_fraction(counts: &[u64]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    if min == 0 {
        f64::INFINITY
    } else {
        max as f64 / min as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level0(t: &Topology) -> Vec<CellId> {
        (1..=t.level0_count()).map(CellId).collect()
    }

    #[test]
    fn hilbert_round_trip_and_adjacency() {
        for bits in 1..=4u32 {
            let side = 1u64 << bits;
            let mut seen = std::collections::HashSet::new();
            let mut prev: Option<[u64; 3]> = None;
            for k in 0..side * side * side {
                let key = HilbertKey([0, 0, k]);
                let p = hilbert_point(key, bits);
                assert_eq!(hilbert_key(p, bits), key);
                assert!(seen.insert(p));
                if let Some(q) = prev {
                    let dist: u64 = (0..3).map(|d| p[d].abs_diff(q[d])).sum();
                    assert_eq!(dist, 1, "step {k} at order {bits}");
                }
                prev = Some(p);
            }
        }
    }

    #[test]
    fn hilbert_wide_keys() {
        let bits = 61;
        let p = [(1 << 60) + 12345, 987_654_321, (1 << 61) - 1];
        assert_eq!(hilbert_point(hilbert_key(p, bits), bits), p);
    }

    #[test]
    fn block_even_split() {
        let t = Topology::new([10, 10, 1], 0, [false; 3]).unwrap();
        let cells = level0(&t);
        let owners = partition(PartitionMethod::Block, &t, &cells, &vec![1.0; 100], 4).unwrap();
        for r in 0..4 {
            assert_eq!(owners.iter().filter(|&&o| o == r).count(), 25);
        }
        assert!(owners.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rcb_collinear() {
        let t = Topology::new([4, 1, 1], 0, [false; 3]).unwrap();
        let owners = partition(PartitionMethod::Rcb, &t, &level0(&t), &[1.0; 4], 2).unwrap();
        assert_eq!(owners, vec![0, 0, 1, 1]);
    }

    #[test]
    fn random_is_reproducible() {
        let t = Topology::new([10, 10, 10], 0, [false; 3]).unwrap();
        let cells = level0(&t);
        let m = PartitionMethod::Random { seed: 42 };
        let a = partition(m, &t, &cells, &vec![1.0; 1000], 10).unwrap();
        let b = partition(m, &t, &cells, &vec![1.0; 1000], 10).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&r| r < 10));
    }

    #[test]
    fn hilbert_parts_are_contiguous_on_curve() {
        let t = Topology::new([2, 2, 2], 0, [false; 3]).unwrap();
        let order = hilbert_order(&t, &level0(&t));
        assert_eq!(order.len(), 8);
        for w in order.windows(2) {
            let a = t.indices_of(w[0]).unwrap().0;
            let b = t.indices_of(w[1]).unwrap().0;
            let dist: u64 = (0..3).map(|d| a[d].abs_diff(b[d])).sum();
            assert_eq!(dist, 1);
        }
    }

    #[test]
    fn fractions() {
        assert_eq!(cell_fraction(&[6, 3]), 2.0);
        assert_eq!(cell_fraction(&[4, 4, 4]), 1.0);
        assert_eq!(cell_fraction(&[5, 0]), f64::INFINITY);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("block".parse::<PartitionMethod>().unwrap(), PartitionMethod::Block);
        assert_eq!("random:7".parse::<PartitionMethod>().unwrap(), PartitionMethod::Random { seed: 7 });
        assert!("random".parse::<PartitionMethod>().is_err());
        assert!("zoltan".parse::<PartitionMethod>().is_err());
    }
}
