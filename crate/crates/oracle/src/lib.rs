//! Slow, obviously-correct reference implementations for tests.
//!
//! Everything here works from geometry alone: a cell is a box on the finest
//! index lattice, periodic images are explicit translated copies, and every
//! question is answered by comparing against every existing cell.

use std::collections::{BTreeSet, HashSet};

use gridforge_core::{CellId, Neighbor, Topology};

pub mod fixtures;
pub mod scenario;

/// Half-open box on the finest lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IBox {
    pub lo: [i64; 3],
    pub size: i64,
}

impl IBox {
    pub fn of(topology: &Topology, id: CellId) -> IBox {
        let level = topology.level_of(id).unwrap();
        let ix = topology.indices_of(id).unwrap().0;
        IBox {
            lo: ix.map(|v| v as i64),
            size: topology.cell_size(level) as i64,
        }
    }
}

/// Boxes whose union is the neighborhood of a cell: one box reaching `n`
/// cell sizes past each face for `n >= 1`, the six face-adjacent boxes of
/// the cell's own size for `n == 0`.
pub fn region(n: u32, cell: IBox) -> Vec<([i64; 3], [i64; 3])> {
    let s = cell.size;
    if n > 0 {
        let r = n as i64 * s;
        return vec![(cell.lo.map(|v| v - r), cell.lo.map(|v| v + s + r))];
    }
    let mut out = Vec::new();
    for d in 0..3 {
        for dir in [-1i64, 1] {
            let mut lo = cell.lo;
            lo[d] += dir * s;
            out.push((lo, lo.map(|v| v + s)));
        }
    }
    out
}

/// Shifts `k` (in grid extents) for which `b` translated by `k * extent`
/// overlaps the half-open box `[lo, hi)` with positive volume.
fn image_shifts(topology: &Topology, b: IBox, lo: [i64; 3], hi: [i64; 3]) -> Vec<[i64; 3]> {
    let extent = topology.extent().map(|e| e as i64);
    let periodic = topology.periodic();
    let mut ranges = [(0i64, 0i64); 3];
    for d in 0..3 {
        if periodic[d] {
            // b.lo + k*E < hi  and  b.lo + k*E + size > lo
            let kmax = (hi[d] - b.lo[d] - 1).div_euclid(extent[d]);
            let kmin = (lo[d] - b.lo[d] - b.size).div_euclid(extent[d]) + 1;
            ranges[d] = (kmin, kmax);
        } else if b.lo[d] < hi[d] && b.lo[d] + b.size > lo[d] {
            ranges[d] = (0, 0);
        } else {
            return Vec::new();
        }
    }
    let mut out = Vec::new();
    for z in ranges[2].0..=ranges[2].1 {
        for y in ranges[1].0..=ranges[1].1 {
            for x in ranges[0].0..=ranges[0].1 {
                out.push([x, y, z]);
            }
        }
    }
    out
}

fn to_shift(k: [i64; 3]) -> [i16; 3] {
    k.map(|v| v as i16)
}

/// Every cell of `cells` with its box, computed once per query batch.
pub fn boxes(topology: &Topology, cells: &[CellId]) -> Vec<(CellId, IBox)> {
    cells.iter().map(|&c| (c, IBox::of(topology, c))).collect()
}

/// Every image of every cell in `cells` intersecting the neighborhood of
/// `c`, except `c` itself, sorted.
pub fn neighbors_of(topology: &Topology, n: u32, cells: &[CellId], c: CellId) -> Vec<Neighbor> {
    neighbors_of_boxed(topology, n, &boxes(topology, cells), c)
}

/// [`neighbors_of`] over precomputed boxes.
pub fn neighbors_of_boxed(topology: &Topology, n: u32, cells: &[(CellId, IBox)], c: CellId) -> Vec<Neighbor> {
    let center = IBox::of(topology, c);
    let reg = region(n, center);
    let mut out = BTreeSet::new();
    for &(d, b) in cells {
        for (lo, hi) in &reg {
            for k in image_shifts(topology, b, *lo, *hi) {
                if d == c && k == [0; 3] {
                    continue;
                }
                out.insert(Neighbor::new(d, to_shift(k)));
            }
        }
    }
    out.into_iter().collect()
}

/// Every image of every cell whose neighborhood contains `c`, sorted. An
/// entry `(d, k)` means `c` shifted by `-k` extents lies in `d`'s
/// neighborhood.
pub fn neighbors_to(topology: &Topology, n: u32, cells: &[CellId], c: CellId) -> Vec<Neighbor> {
    neighbors_to_boxed(topology, n, &boxes(topology, cells), c)
}

/// [`neighbors_to`] over precomputed boxes.
pub fn neighbors_to_boxed(topology: &Topology, n: u32, cells: &[(CellId, IBox)], c: CellId) -> Vec<Neighbor> {
    let b = IBox::of(topology, c);
    let mut out = BTreeSet::new();
    for &(d, db) in cells {
        for (lo, hi) in region(n, db) {
            for k in image_shifts(topology, b, lo, hi) {
                if d == c && k == [0; 3] {
                    continue;
                }
                out.insert(Neighbor::new(d, to_shift(k.map(|v| -v))));
            }
        }
    }
    out.into_iter().collect()
}

/// First neighboring pair whose refinement levels differ by more than one.
pub fn balance_violation(topology: &Topology, n: u32, cells: &[CellId]) -> Option<(CellId, CellId)> {
    let boxed = boxes(topology, cells);
    for &c in cells {
        let lc = topology.level_of(c).unwrap();
        for nb in neighbors_of_boxed(topology, n, &boxed, c) {
            if topology.level_of(nb.id).unwrap().abs_diff(lc) > 1 {
                return Some((c, nb.id));
            }
        }
    }
    None
}

/// Cells after refining every cell of `refined`.
pub fn apply_refinement(topology: &Topology, cells: &[CellId], refined: &BTreeSet<CellId>) -> Vec<CellId> {
    let mut out = Vec::new();
    for &c in cells {
        if refined.contains(&c) {
            out.extend(topology.children_of(c).unwrap());
        } else {
            out.push(c);
        }
    }
    out.sort_unstable();
    out
}

/// Cells after replacing the children of every parent in `parents`.
pub fn apply_unrefinement(topology: &Topology, cells: &[CellId], parents: &BTreeSet<CellId>) -> Vec<CellId> {
    let mut out: Vec<CellId> = cells
        .iter()
        .copied()
        .filter(|c| {
            topology
                .parent_of(*c)
                .unwrap()
                .is_none_or(|p| !parents.contains(&p))
        })
        .collect();
    out.extend(parents.iter().copied());
    out.sort_unstable();
    out
}

/// Smallest superset of `requests` whose refinement keeps a balanced mesh
/// balanced. Repeatedly adds every unrefined cell that ends up more than one
/// level coarser than a neighbor; each such cell is in any balanced
/// superset, so the fixpoint is the minimum.
pub fn minimal_refinement(topology: &Topology, n: u32, cells: &[CellId], requests: &BTreeSet<CellId>) -> BTreeSet<CellId> {
    let mut set = requests.clone();
    loop {
        let after = apply_refinement(topology, cells, &set);
        let mut forced = Vec::new();
        for &c in &after {
            let lc = topology.level_of(c).unwrap();
            for nb in neighbors_of(topology, n, &after, c) {
                let ln = topology.level_of(nb.id).unwrap();
                if ln > lc + 1 {
                    forced.push(c);
                } else if lc > ln + 1 {
                    forced.push(nb.id);
                }
            }
        }
        let before = set.len();
        set.extend(forced);
        if set.len() == before {
            return set;
        }
    }
}

/// Like [`minimal_refinement`] but by enumerating candidate supersets in
/// order of size. Candidates are all refinable cells not requested;
/// returns `None` if there are more than `max_candidates` of them.
pub fn minimal_refinement_exhaustive(
    topology: &Topology,
    n: u32,
    cells: &[CellId],
    requests: &BTreeSet<CellId>,
    max_candidates: usize,
) -> Option<BTreeSet<CellId>> {
    let candidates: Vec<CellId> = cells
        .iter()
        .copied()
        .filter(|c| !requests.contains(c) && topology.level_of(*c).unwrap() < topology.max_level())
        .collect();
    if candidates.len() > max_candidates {
        return None;
    }
    let mut masks: Vec<u64> = (0..1u64 << candidates.len()).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for m in masks {
        let mut set = requests.clone();
        for (i, &c) in candidates.iter().enumerate() {
            if m >> i & 1 == 1 {
                set.insert(c);
            }
        }
        let after = apply_refinement(topology, cells, &set);
        if balance_violation(topology, n, &after).is_none() {
            return Some(set);
        }
    }
    None
}

/// Checks that `path` is a Hilbert-type curve through the cube
/// `[0, 2^bits)^3`: it visits every point once, each step moves to a
/// face-adjacent point, and at every scale the points of each aligned
/// subcube are visited consecutively.
pub fn check_hilbert_path(path: &[[u64; 3]], bits: u32) -> Result<(), String> {
    let side = 1u64 << bits;
    if path.len() as u64 != side * side * side {
        return Err(format!("{} points for a cube of side {side}", path.len()));
    }
    let distinct: HashSet<[u64; 3]> = path.iter().copied().collect();
    if distinct.len() != path.len() || path.iter().any(|p| p.iter().any(|&v| v >= side)) {
        return Err("points repeat or leave the cube".into());
    }
    for (k, w) in path.windows(2).enumerate() {
        let dist: u64 = (0..3).map(|d| w[0][d].abs_diff(w[1][d])).sum();
        if dist != 1 {
            return Err(format!("step {k} from {:?} to {:?} is not to a face neighbor", w[0], w[1]));
        }
    }
    for j in 1..bits {
        let block = 1usize << (3 * j);
        for (b, points) in path.chunks(block).enumerate() {
            let cube = points[0].map(|v| v >> j);
            if points.iter().any(|p| p.map(|v| v >> j) != cube) {
                return Err(format!("block {b} of {block} points spans several subcubes of side {}", 1 << j));
            }
        }
    }
    Ok(())
}

/// One Game of Life step on a non-periodic board, row-major, `board[y * w + x]`.
pub fn life_step(width: usize, height: usize, board: &[u8]) -> Vec<u8> {
    let mut next = vec![0; board.len()];
    for y in 0..height {
        for x in 0..width {
            let mut live = 0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                        live += board[ny as usize * width + nx as usize] as u32;
                    }
                }
            }
            let alive = board[y * width + x] == 1;
            next[y * width + x] = u8::from(live == 3 || (alive && live == 2));
        }
    }
    next
}

/// Live cells of a board as a set of `(x, y)`.
pub fn live_set(width: usize, board: &[u8]) -> HashSet<(usize, usize)> {
    board
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1)
        .map(|(i, _)| (i % width, i / width))
        .collect()
}
