//! Adaptive refinement.
//!
//! Requests are queued per rank and executed together by the collective
//! [`Grid::stop_refining`]. Refining a cell replaces it with its 8 children;
//! unrefining replaces a whole sibling group with the parent. Neighboring
//! cells never differ by more than one level: refinement spreads to coarser
//! neighbors until that holds again, while unrefinement requests that would
//! break it are dropped.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::{FxHashMap, FxHashSet};

use crate::cell::CellData;
use crate::error::GridError;
use crate::grid::Grid;
use crate::mesh::search_neighbors_in;
use crate::topology::{CellId, Topology};
use crate::transport::{Rank, Subsystem};
use crate::wire;

/// Structural changes made by one [`Grid::stop_refining`], identical on
/// every rank. All lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Adaptation {
    /// Cells that were refined, requested or induced.
    pub refined: Vec<CellId>,
    /// Parents recreated by unrefinement.
    pub unrefined: Vec<CellId>,
    /// Cells that came into existence: children of refined cells and
    /// recreated parents.
    pub created: Vec<CellId>,
    /// Cells that ceased to exist: refined cells and the children of
    /// recreated parents.
    pub removed: Vec<CellId>,
}

impl Adaptation {
    pub fn is_empty(&self) -> bool {
        self.refined.is_empty() && self.unrefined.is_empty()
    }
}

const TAG_UNREFINE_LENGTHS: u32 = 1;
const TAG_UNREFINE_DATA: u32 = 2;

/// Refinement set `refined` and unrefinement set `parents` applied on top
/// of the existing cells, without touching the table.
struct Tentative<'a> {
    topology: &'a Topology,
    owners: &'a FxHashMap<CellId, Rank>,
    refined: &'a FxHashSet<CellId>,
    parents: &'a BTreeSet<CellId>,
}

impl Tentative<'_> {
    fn exists(&self, c: CellId) -> bool {
        let parent = self.topology.parent_of(c).ok().flatten();
        if self.owners.contains_key(&c) {
            !self.refined.contains(&c) && parent.is_none_or(|p| !self.parents.contains(&p))
        } else {
            self.parents.contains(&c) || parent.is_some_and(|p| self.refined.contains(&p))
        }
    }
}

impl<D: CellData> Grid<D> {
    /// Queues local cell `id` for refinement.
    pub fn refine_completely(&mut self, id: CellId) -> Result<(), GridError> {
        self.require_local(id)?;
        if self.topology().level_of(id)? == self.topology().max_level() {
            return Err(GridError::RefineAtMaxLevel(id));
        }
        if self.unrefine_requests.contains(&id) {
            return Err(GridError::ConflictingRequest(id));
        }
        self.refine_requests.insert(id);
        Ok(())
    }

    /// Queues local cell `id`, and with it its whole sibling group, for
    /// unrefinement.
    pub fn unrefine(&mut self, id: CellId) -> Result<(), GridError> {
        self.require_local(id)?;
        if self.topology().level_of(id)? == 0 {
            return Err(GridError::UnrefineAtLevelZero(id));
        }
        if self.refine_requests.contains(&id) {
            return Err(GridError::ConflictingRequest(id));
        }
        self.unrefine_requests.insert(id);
        Ok(())
    }

    /// Drops all queued requests of this rank.
    pub fn cancel_requests(&mut self) {
        self.refine_requests.clear();
        self.unrefine_requests.clear();
    }

    pub fn refine_requests(&self) -> impl Iterator<Item = CellId> + '_ {
        self.refine_requests.iter().copied()
    }

    pub fn unrefine_requests(&self) -> impl Iterator<Item = CellId> + '_ {
        self.unrefine_requests.iter().copied()
    }

    /// Collective. Executes all queued requests of all ranks: induced
    /// refinement, unrefinement filtering, data mapping and the rebuild of
    /// neighbor lists.
    pub fn stop_refining(&mut self) -> Result<Adaptation, GridError> {
        self.ensure_no_exchange()?;
        let refined = self.induced_refinement()?;
        let parents = self.surviving_unrefinements(&refined)?;
        let topology = self.topology().clone();
        let me = self.comm.rank();

        // children of a recreated parent go to the owner of its first child
        let mut outgoing: BTreeMap<Rank, Vec<CellId>> = BTreeMap::new();
        let mut incoming: BTreeMap<Rank, Vec<CellId>> = BTreeMap::new();
        let mut parent_owner = BTreeMap::new();
        for &p in &parents {
            let children = topology.children_of(p)?;
            let dest = self.mesh.owner_of(children[0])?;
            parent_owner.insert(p, dest);
            for &c in &children {
                let src = self.mesh.owner_of(c)?;
                if src == dest {
                    continue;
                }
                if src == me {
                    outgoing.entry(dest).or_default().push(c);
                }
                if dest == me {
                    incoming.entry(src).or_default().push(c);
                }
            }
        }
        for cells in outgoing.values_mut().chain(incoming.values_mut()) {
            cells.sort_unstable();
        }
        let mut arrived: FxHashMap<CellId, D> = self
            .move_cells(Subsystem::Structure, &outgoing, &incoming, TAG_UNREFINE_LENGTHS, TAG_UNREFINE_DATA)?
            .into_iter()
            .collect();

        let mut refined_sorted: Vec<CellId> = refined.into_iter().collect();
        refined_sorted.sort_unstable();
        let mut created = Vec::with_capacity(refined_sorted.len() * 8 + parents.len());
        let mut removed = Vec::with_capacity(refined_sorted.len() + parents.len() * 8);

        for &p in &refined_sorted {
            let owner = self.mesh.owners_mut().remove(&p).expect("refined cells exist");
            let children = topology.children_of(p)?;
            for &c in &children {
                self.mesh.owners_mut().insert(c, owner);
            }
            if owner == me {
                let d = self.data.remove(&p).expect("local cells have data");
                for (c, cd) in children.iter().zip(d.prolong()) {
                    self.data.insert(*c, cd);
                }
                self.pins.remove(&p);
                self.weights.remove(&p);
            }
            created.extend_from_slice(&children);
            removed.push(p);
        }
        for (&p, &owner) in &parent_owner {
            let children = topology.children_of(p)?;
            for c in &children {
                self.mesh.owners_mut().remove(c);
                self.pins.remove(c);
                self.weights.remove(c);
            }
            self.mesh.owners_mut().insert(p, owner);
            if owner == me {
                let values: [D; 8] = std::array::from_fn(|k| {
                    let c = children[k];
                    self.data
                        .remove(&c)
                        .or_else(|| arrived.remove(&c))
                        .expect("children data is local or was received")
                });
                self.data.insert(p, D::restrict(&values));
            } else {
                for c in &children {
                    self.data.remove(c);
                }
            }
            created.push(p);
            removed.extend_from_slice(&children);
        }
        created.sort_unstable();
        removed.sort_unstable();
        self.cancel_requests();
        self.structure_changed()?;
        Ok(Adaptation {
            refined: refined_sorted,
            unrefined: parents.into_iter().collect(),
            created,
            removed,
        })
    }

    /// Global set of cells to refine. In each sweep every rank publishes the
    /// cells it newly decided to refine; a local cell joins when one of its
    /// neighbors in either direction is finer and newly refined. Sweeps end
    /// when no rank adds anything.
    fn induced_refinement(&mut self) -> Result<FxHashSet<CellId>, GridError> {
        let topology = self.topology().clone();
        let mut refined: FxHashSet<CellId> = FxHashSet::default();
        let mut fresh_local: Vec<CellId> = self.refine_requests.iter().copied().collect();
        loop {
            let blocks = self.comm.allgather_variable(wire::encode_ids(&fresh_local))?;
            let mut fresh: FxHashSet<CellId> = FxHashSet::default();
            for (source, b) in blocks.iter().enumerate() {
                for c in wire::decode_ids(b, source)? {
                    if refined.insert(c) {
                        fresh.insert(c);
                    }
                }
            }
            if fresh.is_empty() {
                return Ok(refined);
            }
            fresh_local.clear();
            for &d in self.mesh.local_cells() {
                if refined.contains(&d) {
                    continue;
                }
                let level = topology.level_of(d)?;
                let forced = self
                    .mesh
                    .neighbors_of(d)?
                    .iter()
                    .chain(self.mesh.neighbors_to(d)?)
                    .any(|nb| fresh.contains(&nb.id) && topology.level_of(nb.id).is_ok_and(|l| l > level));
                if forced {
                    fresh_local.push(d);
                }
            }
        }
    }

    /// Parents whose children will be replaced. Requests are shared by all
    /// ranks, then a group is dropped if one of its children is not a
    /// current cell or is being refined, or if the parent would see a cell
    /// more than one level away from its own once all surviving groups and
    /// refinements are applied. Dropping repeats until nothing changes.
    fn surviving_unrefinements(&mut self, refined: &FxHashSet<CellId>) -> Result<BTreeSet<CellId>, GridError> {
        let topology = self.topology().clone();
        let mut local_parents = Vec::new();
        for &c in &self.unrefine_requests {
            if self.mesh.exists(c) {
                local_parents.push(topology.parent_of(c)?.expect("unrefine requests are above level 0"));
            }
        }
        local_parents.sort_unstable();
        local_parents.dedup();
        let blocks = self.comm.allgather_variable(wire::encode_ids(&local_parents))?;
        let mut parents = BTreeSet::new();
        for (source, b) in blocks.iter().enumerate() {
            for p in wire::decode_ids(b, source)? {
                let children = topology.children_of(p)?;
                if children.iter().all(|c| self.mesh.exists(*c) && !refined.contains(c)) {
                    parents.insert(p);
                }
            }
        }
        let n = self.mesh.neighborhood();
        loop {
            let state = Tentative {
                topology: &topology,
                owners: self.mesh.owners(),
                refined,
                parents: &parents,
            };
            let violating: Vec<CellId> = parents
                .iter()
                .copied()
                .filter(|&p| search_neighbors_in(&topology, n, p, |c| state.exists(c)).is_err())
                .collect();
            if violating.is_empty() {
                return Ok(parents);
            }
            for p in violating {
                parents.remove(&p);
            }
        }
    }
}

/// Conserved-variable state of one cell for the refinement index.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowState {
    /// Mass density.
    pub rho: f64,
    /// Total energy density.
    pub u1: f64,
    /// Momentum density.
    pub p: [f64; 3],
    /// Perturbed magnetic field.
    pub b1: [f64; 3],
    pub v: [f64; 3],
}

/// Two face-sharing cells plus interface quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefinementIndexInputs {
    pub a: FlowState,
    pub b: FlowState,
    /// Largest wave speed at the interface.
    pub v_wave: f64,
    /// Vacuum permeability.
    pub mu0: f64,
}

fn norm2(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

fn diff(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Ratio term where a zero numerator contributes nothing even if the
/// denominator vanishes.
fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64, GridError> {
    if num == 0.0 {
        Ok(0.0)
    } else if den > 0.0 {
        Ok(num / den)
    } else {
        Err(GridError::DegenerateState(what))
    }
}

/// Refinement index of a cell pair: the largest of the relative jumps in
/// density, energy, momentum, magnetic energy, magnetic field and velocity.
/// Hatted quantities are the smaller of the two cells' values.
pub fn refinement_index(x: &RefinementIndexInputs) -> Result<f64, GridError> {
    let (a, b) = (&x.a, &x.b);
    let rho_hat = a.rho.min(b.rho);
    let u1_hat = a.u1.min(b.u1);
    let rho_u1_hat = (a.rho * a.u1).min(b.rho * b.u1);
    if !(rho_hat > 0.0) {
        return Err(GridError::DegenerateState("density must be positive"));
    }
    if !(u1_hat > 0.0) {
        return Err(GridError::DegenerateState("total energy density must be positive"));
    }
    if x.v_wave < 0.0 {
        return Err(GridError::DegenerateState("wave speed must not be negative"));
    }
    let d_b = norm2(diff(a.b1, b.b1));
    let b_hat = norm2(a.b1).sqrt().min(norm2(b.b1).sqrt());
    let v_min = norm2(a.v).min(norm2(b.v)) + (0.01 * x.v_wave).powi(2);
    let terms = [
        (a.rho - b.rho).abs() / rho_hat,
        (a.u1 - b.u1).abs() / u1_hat,
        norm2(diff(a.p, b.p)) / (2.0 * rho_u1_hat),
        ratio(d_b, 2.0 * x.mu0 * u1_hat, "vacuum permeability must be positive")?,
        ratio(d_b.sqrt(), b_hat, "magnetic field vanishes on one side of a field jump")?,
        ratio(norm2(diff(a.v, b.v)), v_min, "velocity scale vanishes on one side of a velocity jump")?,
    ];
    Ok(terms.into_iter().fold(0.0, f64::max))
}

/// Density and velocity terms only, for solvers without the other fields.
pub fn density_velocity_index(rho: [f64; 2], v: [[f64; 3]; 2], v_wave: f64) -> Result<f64, GridError> {
    let rho_hat = rho[0].min(rho[1]);
    if !(rho_hat > 0.0) {
        return Err(GridError::DegenerateState("density must be positive"));
    }
    let v_min = norm2(v[0]).min(norm2(v[1])) + (0.01 * v_wave).powi(2);
    let dv = ratio(norm2(diff(v[0], v[1])), v_min, "velocity scale vanishes on one side of a velocity jump")?;
    Ok(((rho[0] - rho[1]).abs() / rho_hat).max(dv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Refine,
    Unrefine,
    Keep,
}

/// Index above which a level-`level` cell is refined.
pub fn refine_threshold(level: u32, max_level: u32) -> f64 {
    0.02 * (level + 1) as f64 / max_level as f64
}

/// Index below which a level-`level` cell may be unrefined.
pub fn unrefine_threshold(level: u32, max_level: u32) -> f64 {
    refine_threshold(level, max_level) / 2.0
}

/// Threshold decision for a cell whose index is `alpha`.
pub fn decide(alpha: f64, level: u32, max_level: u32) -> Decision {
    if max_level == 0 {
        return Decision::Keep;
    }
    if level < max_level && alpha > refine_threshold(level, max_level) {
        Decision::Refine
    } else if level > 0 && alpha < unrefine_threshold(level, max_level) {
        Decision::Unrefine
    } else {
        Decision::Keep
    }
}

impl<D: CellData> Grid<D> {
    /// Queues requests for every local cell from its refinement index.
    /// Returns how many refine and unrefine requests were queued.
    pub fn adapt_by_index(&mut self, mut alpha: impl FnMut(&Self, CellId) -> Result<f64, GridError>) -> Result<(usize, usize), GridError> {
        let max_level = self.topology().max_level();
        let cells = self.local_cells().to_vec();
        let mut counts = (0, 0);
        for c in cells {
            let level = self.topology().level_of(c)?;
            match decide(alpha(self, c)?, level, max_level) {
                Decision::Refine => {
                    self.refine_completely(c)?;
                    counts.0 += 1;
                }
                Decision::Unrefine => {
                    self.unrefine(c)?;
                    counts.1 += 1;
                }
                Decision::Keep => {}
            }
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(rho: f64) -> FlowState {
        FlowState {
            rho,
            u1: 2.0,
            p: [1.0, 0.5, 0.0],
            b1: [0.0, 0.0, 1.0],
            v: [1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn identical_states_have_zero_index() {
        let x = RefinementIndexInputs {
            a: state(1.0),
            b: state(1.0),
            v_wave: 3.0,
            mu0: 1.0,
        };
        assert_eq!(refinement_index(&x).unwrap(), 0.0);
    }

    #[test]
    fn density_jump() {
        let x = RefinementIndexInputs {
            a: state(1.0),
            b: state(2.0),
            v_wave: 3.0,
            mu0: 1.0,
        };
        assert_eq!(refinement_index(&x).unwrap(), 1.0);
    }

    #[test]
    fn every_term_by_hand() {
        let a = FlowState {
            rho: 2.0,
            u1: 4.0,
            p: [1.0, 0.0, 0.0],
            b1: [1.0, 0.0, 0.0],
            v: [1.0, 0.0, 0.0],
        };
        let mut b = a;
        b.u1 = 5.0;
        let x = |b: FlowState| RefinementIndexInputs { a, b, v_wave: 10.0, mu0: 0.5 };
        assert_eq!(refinement_index(&x(b)).unwrap(), 0.25);
        let mut b = a;
        b.p = [5.0, 0.0, 0.0];
        // 16 / (2 * 8)
        assert_eq!(refinement_index(&x(b)).unwrap(), 1.0);
        let mut b = a;
        b.b1 = [1.0, 2.0, 0.0];
        // max(4 / (2 * 0.5 * 4), 2 / 1)
        assert_eq!(refinement_index(&x(b)).unwrap(), 2.0);
        let mut b = a;
        b.v = [3.0, 0.0, 0.0];
        // 4 / (1 + 0.01)
        assert_eq!(refinement_index(&x(b)).unwrap(), 4.0 / (1.0 + 0.1f64.powi(2)));
    }

    #[test]
    fn degenerate_states() {
        let x = RefinementIndexInputs {
            a: state(0.0),
            b: state(1.0),
            v_wave: 0.0,
            mu0: 1.0,
        };
        assert!(refinement_index(&x).is_err());
        let mut y = x;
        y.a = state(1.0);
        y.a.b1 = [0.0; 3];
        assert!(matches!(refinement_index(&y), Err(GridError::DegenerateState(_))));
    }

    #[test]
    fn thresholds() {
        assert_eq!(decide(0.015, 0, 4), Decision::Refine);
        assert_eq!(decide(0.002, 1, 4), Decision::Unrefine);
        assert!(0.002 < unrefine_threshold(0, 4));
        assert_eq!(decide(0.025, 0, 4), Decision::Refine);
        assert_eq!(decide(0.004, 0, 4), Decision::Keep);
        assert_eq!(decide(0.004, 1, 4), Decision::Unrefine);
        assert_eq!(decide(0.006, 1, 4), Decision::Keep);
        for l in 0..4 {
            assert_eq!(decide(0.0201, l, 4), Decision::Refine);
        }
        assert_eq!(decide(1.0, 4, 4), Decision::Keep);
        assert_eq!(decide(0.0, 0, 4), Decision::Keep);
    }
}
