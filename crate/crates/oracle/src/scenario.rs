//! Seeded random meshes and checks of a live grid against the oracles.

use std::collections::BTreeSet;

use gridforge_core::{CellData, CellId, Grid, GridBuilder, GridError};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{boxes, neighbors_of_boxed, neighbors_to_boxed};

/// Shape of a random test grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshCase {
    pub size: [u64; 3],
    pub max_level: u32,
    pub periodic: [bool; 3],
    pub neighborhood: u32,
}

impl MeshCase {
    /// Base size up to `max_base` per dimension, up to `max_level` levels,
    /// random periodicity and neighborhood size in `0..=3`.
    pub fn random(rng: &mut impl Rng, max_base: u64, max_level: u32) -> MeshCase {
        MeshCase {
            size: [0; 3].map(|_| rng.gen_range(1..=max_base)),
            max_level: rng.gen_range(0..=max_level),
            periodic: [0; 3].map(|_| rng.gen_bool(0.5)),
            neighborhood: rng.gen_range(0..=3),
        }
    }

    pub fn builder(&self) -> GridBuilder {
        GridBuilder::new(self.size)
            .max_level(self.max_level)
            .periodic(self.periodic)
            .neighborhood(self.neighborhood)
    }
}

/// Queues up to `refines` refinements and `unrefines` unrefinements of
/// random local cells. Returns the cells queued for refinement.
pub fn queue_random_requests<D: CellData>(
    grid: &mut Grid<D>,
    rng: &mut impl Rng,
    refines: usize,
    unrefines: usize,
) -> Result<BTreeSet<CellId>, GridError> {
    let max_level = grid.topology().max_level();
    let mut cells = grid.local_cells().to_vec();
    cells.shuffle(rng);
    let mut refined = BTreeSet::new();
    let topology = grid.topology().clone();
    let level = |c: CellId| topology.level_of(c).unwrap();
    for &c in cells.iter().filter(|&&c| level(c) < max_level).take(refines) {
        grid.refine_completely(c)?;
        refined.insert(c);
    }
    cells.shuffle(rng);
    let candidates: Vec<CellId> = cells
        .iter()
        .copied()
        .filter(|c| level(*c) > 0 && !refined.contains(c))
        .take(unrefines)
        .collect();
    for c in candidates {
        grid.unrefine(c)?;
    }
    Ok(refined)
}

/// All existing cells, ascending.
pub fn all_cells<D: CellData>(grid: &Grid<D>) -> Vec<CellId> {
    grid.mesh().sorted_cells().into_iter().map(|(c, _)| c).collect()
}

/// Compares both arrow lists of every local cell with the brute-force
/// oracle.
pub fn check_neighbors<D: CellData>(grid: &Grid<D>) -> Result<(), String> {
    let topology = grid.topology();
    let n = grid.mesh().neighborhood();
    let cells = boxes(topology, &all_cells(grid));
    for &c in grid.local_cells() {
        let got = grid.neighbors_of(c).map_err(|e| e.to_string())?;
        let want = neighbors_of_boxed(topology, n, &cells, c);
        if got != want.as_slice() {
            return Err(format!("neighbors_of({c}) = {got:?}, oracle {want:?}"));
        }
        let got = grid.neighbors_to(c).map_err(|e| e.to_string())?;
        let want = neighbors_to_boxed(topology, n, &cells, c);
        if got != want.as_slice() {
            return Err(format!("neighbors_to({c}) = {got:?}, oracle {want:?}"));
        }
    }
    Ok(())
}

/// Fails if a local cell has a neighbor more than one level away. Run on
/// every rank, this covers every neighboring pair of the grid.
pub fn check_balance<D: CellData>(grid: &Grid<D>) -> Result<(), String> {
    let topology = grid.topology();
    let n = grid.mesh().neighborhood();
    let cells = boxes(topology, &all_cells(grid));
    for &c in grid.local_cells() {
        let level = topology.level_of(c).map_err(|e| e.to_string())?;
        for nb in neighbors_of_boxed(topology, n, &cells, c) {
            if topology.level_of(nb.id).map_err(|e| e.to_string())?.abs_diff(level) > 1 {
                return Err(format!("cells {c} and {} are neighbors more than one level apart", nb.id));
            }
        }
    }
    Ok(())
}
