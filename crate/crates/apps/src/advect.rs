//! Conservative advection of a scalar density with a uniform velocity on
//! the periodic unit cube, using donor-cell upwind fluxes through cell
//! faces and runtime refinement driven by relative density jumps.
//!
//! Mass crossing a face is computed from the same operands by both cells
//! sharing it, so whatever leaves one cell enters the other and total mass
//! changes only by rounding. Faces between cells of different levels use
//! the area of the finer cell.

use std::path::PathBuf;

use gridforge_core::amr::density_velocity_index;
use gridforge_core::io::{dump_grid, export_vtk};
use gridforge_core::{
    run_ranks_with, Adaptation, CellData, CellId, Comm, ConstantGeometry, DecodeError, DumpValues, Grid, GridBuilder,
    GridError, PartitionMethod, ReduceOp, RunOptions, TransferTag,
};

use crate::{Reporter, StepStats};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdvectionCell {
    /// Cell-average density.
    pub rho: f64,
    /// Density after the step being computed.
    pub rho_next: f64,
}

impl CellData for AdvectionCell {
    fn transfer_len(&self, _tag: TransferTag) -> usize {
        8
    }

    fn write_transfer(&self, _tag: TransferTag, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.rho.to_le_bytes());
    }

    fn read_transfer(&mut self, _tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        let b: [u8; 8] = bytes.try_into().map_err(|_| DecodeError::length(8, bytes.len()))?;
        self.rho = f64::from_le_bytes(b);
        Ok(())
    }

    fn restrict(children: &[Self; 8]) -> Self {
        let rho = children.iter().map(|c| c.rho).sum::<f64>() / 8.0;
        AdvectionCell { rho, rho_next: rho }
    }
}

impl DumpValues for AdvectionCell {
    fn dump_values(&self, out: &mut Vec<f64>) {
        out.push(self.rho);
    }

    fn value_names() -> Vec<String> {
        vec!["rho".into()]
    }
}

/// Initial density: 1 plus a smooth bump of height `amplitude` and radius
/// `radius` around `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump {
            center: [0.5; 3],
            radius: 0.15,
            amplitude: 0.5,
        }
    }
}

impl Bump {
    pub fn density(&self, x: [f64; 3]) -> f64 {
        let r = (0..3).map(|d| (x[d] - self.center[d]).powi(2)).sum::<f64>().sqrt();
        if r >= self.radius {
            1.0
        } else {
            let c = (std::f64::consts::FRAC_PI_2 * r / self.radius).cos();
            1.0 + self.amplitude * c * c
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdvectConfig {
    /// Level-0 cells per dimension.
    pub base: u64,
    /// Maximum refinement level.
    pub levels: u32,
    pub cfl: f64,
    pub steps: u64,
    /// Adapt the grid every this many steps; 0 disables refinement after
    /// the initial one.
    pub adapt_every: u64,
    /// Rebalance whenever the local cell fraction reaches this value.
    pub rebalance_fc: Option<f64>,
    pub velocity: [f64; 3],
    pub ranks: usize,
    pub partition: PartitionMethod,
    pub initial: Bump,
    /// Keep the dump text every this many steps (and of step 0 and the
    /// last step); 0 keeps none.
    pub dump_every: u64,
    /// Also write kept dumps to this directory as `step-<k>.dump`, with a
    /// legacy VTK rendering next to each as `step-<k>.vtk`.
    pub dump_dir: Option<PathBuf>,
    pub schedule_seed: Option<u64>,
}

impl Default for AdvectConfig {
    fn default() -> Self {
        AdvectConfig {
            base: 16,
            levels: 2,
            cfl: 0.4,
            steps: 100,
            adapt_every: 1,
            rebalance_fc: None,
            velocity: [1.0, 0.5, 0.25],
            ranks: 1,
            partition: PartitionMethod::HilbertSfc,
            initial: Bump::default(),
            dump_every: 0,
            dump_dir: None,
            schedule_seed: None,
        }
    }
}

impl AdvectConfig {
    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |what: String| Err(GridError::InvalidArgument(what));
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad(format!("CFL number {} must be in (0, 1)", self.cfl));
        }
        if self.base == 0 {
            return bad("base grid size must be positive".into());
        }
        if self.velocity.iter().any(|v| !v.is_finite()) {
            return bad("velocity must be finite".into());
        }
        if let Some(fc) = self.rebalance_fc {
            if !(fc >= 1.0) {
                return bad(format!("rebalance threshold {fc} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// What one [`Advection::advance`] did besides the flux update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub adaptation: Option<Adaptation>,
    /// Local cell fraction seen by the rebalance check, if it ran.
    pub fc: Option<f64>,
    pub rebalanced: bool,
}

/// Which side of `c` a neighbor image touches through a face: the axis
/// and the sign of the outward normal.
fn shared_face(c_lo: [i64; 3], c_size: i64, n_lo: [i64; 3], n_size: i64) -> Option<(usize, f64)> {
    let mut face = None;
    for d in 0..3 {
        if n_lo[d] == c_lo[d] + c_size {
            face = face.or(Some((d, 1.0)));
        } else if n_lo[d] + n_size == c_lo[d] {
            face = face.or(Some((d, -1.0)));
        } else if n_lo[d].max(c_lo[d]) >= (n_lo[d] + n_size).min(c_lo[d] + c_size) {
            return None;
        }
    }
    let (axis, _) = face?;
    // touching along the face axis only; the other axes must overlap
    for e in (0..3).filter(|&e| e != axis) {
        if n_lo[e].max(c_lo[e]) >= (n_lo[e] + n_size).min(c_lo[e] + c_size) {
            return None;
        }
    }
    face
}

/// One rank's view of the simulation.
pub struct Advection {
    grid: Grid<AdvectionCell>,
    velocity: [f64; 3],
    cfl: f64,
    adapt_every: u64,
    rebalance_fc: Option<f64>,
    steps_done: u64,
}

impl Advection {
    /// Builds the grid, refines it around the initial bump (one round per
    /// level, resampling the density after each) and balances the load.
    pub fn new(comm: Comm, config: &AdvectConfig) -> Result<Advection, GridError> {
        config.validate()?;
        let l0 = 1.0 / config.base as f64;
        let grid = GridBuilder::new([config.base; 3])
            .max_level(config.levels)
            .periodic([true; 3])
            .neighborhood(0)
            .geometry(ConstantGeometry::new([0.0; 3], [l0; 3]))
            .partition(config.partition)
            .build(comm)?;
        let mut sim = Advection {
            grid,
            velocity: config.velocity,
            cfl: config.cfl,
            adapt_every: config.adapt_every,
            rebalance_fc: config.rebalance_fc,
            steps_done: 0,
        };
        sim.sample(&config.initial)?;
        for _ in 0..config.levels {
            sim.adapt()?;
            sim.sample(&config.initial)?;
        }
        if config.ranks > 1 {
            sim.grid.balance_load()?;
        }
        Ok(sim)
    }

    fn sample(&mut self, bump: &Bump) -> Result<(), GridError> {
        for c in self.grid.local_cells().to_vec() {
            let rho = bump.density(self.grid.cell_center(c)?);
            *self.grid.data_mut(c)? = AdvectionCell { rho, rho_next: rho };
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid<AdvectionCell> {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut Grid<AdvectionCell> {
        &mut self.grid
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    fn corner_and_size(&self, c: CellId) -> Result<([i64; 3], i64), GridError> {
        let t = self.grid.topology();
        let (level, ix) = t.locate(c)?;
        Ok((ix.0.map(|v| v as i64), t.cell_size(level) as i64))
    }

    /// Largest relative density jump over the faces of local cell `c`.
    pub fn refinement_index(&self, c: CellId) -> Result<f64, GridError> {
        let grid = &self.grid;
        let t = grid.topology();
        let (lo, size) = self.corner_and_size(c)?;
        let rho = grid.data(c).expect("local cell").rho;
        let v = self.velocity;
        let speed = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut alpha: f64 = 0.0;
        for nb in grid.neighbors_of(c)? {
            let n_size = t.cell_size(t.level_of(nb.id)?) as i64;
            if shared_face(lo, size, nb.image_corner(t), n_size).is_none() {
                continue;
            }
            let other = grid.data(nb.id).expect("neighbor data is local or copied").rho;
            alpha = alpha.max(density_velocity_index([rho, other], [v, v], speed)?);
        }
        Ok(alpha)
    }

    /// Refreshes neighbor copies, queues requests from the refinement index
    /// and executes them.
    pub fn adapt(&mut self) -> Result<Adaptation, GridError> {
        self.grid.update_copies_of_remote_neighbors(0)?;
        let mut alphas = Vec::with_capacity(self.grid.local_cells().len());
        for &c in self.grid.local_cells() {
            alphas.push(self.refinement_index(c)?);
        }
        let mut it = alphas.into_iter();
        self.grid.adapt_by_index(|_, _| Ok(it.next().expect("one index per local cell")))?;
        self.grid.stop_refining()
    }

    /// Time step allowed by the local cells; infinite without local cells
    /// or motion.
    pub fn local_dt_limit(&self) -> Result<f64, GridError> {
        let mut rate: f64 = 0.0;
        for &c in self.grid.local_cells() {
            let len = self.grid.cell_length(c)?;
            let r: f64 = (0..3).map(|d| self.velocity[d].abs() / len[d]).sum();
            rate = rate.max(r);
        }
        Ok(if rate > 0.0 { self.cfl / rate } else { f64::INFINITY })
    }

    /// One full step: optional adaptation, optional rebalance, the global
    /// time step (the only reduction of the step) and the flux update.
    pub fn advance(&mut self) -> Result<StepReport, GridError> {
        let mut report = StepReport::default();
        if self.adapt_every > 0 && self.steps_done % self.adapt_every == 0 && self.steps_done > 0 {
            report.adaptation = Some(self.adapt()?);
        }
        if let Some(threshold) = self.rebalance_fc {
            let fc = self.grid.local_cell_fraction()?;
            report.fc = Some(fc);
            if fc >= threshold {
                self.grid.balance_load()?;
                report.rebalanced = true;
            }
        }
        let dt = self.grid.comm().allreduce(self.local_dt_limit()?, ReduceOp::Min)?;
        report.dt = if dt.is_finite() { dt } else { 0.0 };
        self.step_with_dt(report.dt)?;
        Ok(report)
    }

    fn update_cell(&mut self, c: CellId, dt: f64) -> Result<(), GridError> {
        let grid = &self.grid;
        let t = grid.topology();
        let (lo, size) = self.corner_and_size(c)?;
        let len = grid.cell_length(c)?;
        let volume = len[0] * len[1] * len[2];
        let rho = grid.data(c).expect("local cell").rho;
        let mut mass = rho * volume;
        for nb in grid.neighbors_of(c)? {
            let n_level = t.level_of(nb.id)?;
            let n_size = t.cell_size(n_level) as i64;
            let Some((axis, sign)) = shared_face(lo, size, nb.image_corner(t), n_size) else {
                continue;
            };
            let finer = if n_size < size { grid.cell_length(nb.id)? } else { len };
            let area = (0..3).filter(|&e| e != axis).map(|e| finer[e]).product::<f64>();
            let v_out = sign * self.velocity[axis];
            if v_out > 0.0 {
                mass -= ((dt * v_out) * area) * rho;
            } else if v_out < 0.0 {
                let upwind = grid.data(nb.id).expect("neighbor data is local or copied").rho;
                mass += ((dt * -v_out) * area) * upwind;
            }
        }
        self.grid.data_mut(c)?.rho_next = mass / volume;
        Ok(())
    }

    /// Flux update with a given time step. Inner cells are computed while
    /// the copies of remote neighbors are in transit.
    pub fn step_with_dt(&mut self, dt: f64) -> Result<(), GridError> {
        self.grid.start_remote_neighbor_copy_updates(0)?;
        for c in self.grid.inner_cells().to_vec() {
            self.update_cell(c, dt)?;
        }
        self.grid.wait_remote_neighbor_copy_update_receives()?;
        for c in self.grid.outer_cells().to_vec() {
            self.update_cell(c, dt)?;
        }
        self.grid.wait_remote_neighbor_copy_update_sends()?;
        for c in self.grid.local_cells().to_vec() {
            let d = self.grid.data_mut(c)?;
            d.rho = d.rho_next;
        }
        self.steps_done += 1;
        Ok(())
    }

    /// Total mass over all ranks. Collective.
    pub fn mass(&self) -> Result<f64, GridError> {
        let mut local = 0.0;
        for (c, d) in self.grid.local_data() {
            local += d.rho * self.grid.cell_volume(c)?;
        }
        Ok(self.grid.comm().allreduce(local, ReduceOp::Sum)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvectOutcome {
    pub initial_mass: f64,
    pub final_mass: f64,
    pub final_cells: usize,
    /// Largest cell count seen after any step.
    pub peak_cells: usize,
    /// Kept dumps as `(step, text)`.
    pub dumps: Vec<(u64, String)>,
    /// Steps on which the load was rebalanced.
    pub rebalances: Vec<u64>,
    /// Allreduces done inside each `advance`, from rank 0.
    pub allreduces_per_step: Vec<u64>,
    /// Largest level difference between face neighbors seen at any step.
    pub max_level_jump: u32,
}

fn max_level_jump(sim: &Advection) -> Result<u32, GridError> {
    let g = sim.grid();
    let mut worst = 0;
    for &c in g.local_cells() {
        let l = g.level_of(c)?;
        for nb in g.neighbors_of(c)? {
            worst = worst.max(g.level_of(nb.id)?.abs_diff(l));
        }
    }
    Ok(g.comm().allreduce(worst as u64, ReduceOp::Max)? as u32)
}

/// Runs the whole simulation on `config.ranks` ranks.
pub fn run(config: &AdvectConfig, report: Option<Reporter<'_>>) -> Result<AdvectOutcome, GridError> {
    config.validate()?;
    if let Some(dir) = &config.dump_dir {
        std::fs::create_dir_all(dir)?;
    }
    let options = RunOptions {
        schedule_seed: config.schedule_seed,
    };
    let mut out = run_ranks_with(config.ranks, options, |comm| {
        let mut sim = Advection::new(comm, config)?;
        let initial_mass = sim.mass()?;
        let mut dumps = Vec::new();
        let mut rebalances = Vec::new();
        let mut allreduces = Vec::new();
        let mut worst = max_level_jump(&sim)?;
        let mut peak_cells = sim.grid().cell_count();
        let keep = |sim: &Advection, step: u64, dumps: &mut Vec<(u64, String)>| -> Result<(), GridError> {
            if let Some(dir) = &config.dump_dir {
                export_vtk(sim.grid(), &dir.join(format!("step-{step}.vtk")))?;
            }
            if let Some(text) = dump_grid(sim.grid())? {
                if let Some(dir) = &config.dump_dir {
                    std::fs::write(dir.join(format!("step-{step}.dump")), &text)?;
                }
                dumps.push((step, text));
            }
            Ok(())
        };
        if config.dump_every > 0 {
            keep(&sim, 0, &mut dumps)?;
        }
        for step in 1..=config.steps {
            let before = sim.grid().comm().stats();
            let r = sim.advance()?;
            allreduces.push(sim.grid().comm().stats().since(&before).allreduces);
            if r.rebalanced {
                rebalances.push(step);
            }
            worst = worst.max(max_level_jump(&sim)?);
            peak_cells = peak_cells.max(sim.grid().cell_count());
            if let Some(report) = report {
                let mass = sim.mass()?;
                let fc = match r.fc {
                    Some(fc) => fc,
                    None => sim.grid().local_cell_fraction()?,
                };
                if sim.grid().comm().rank() == 0 {
                    report(&StepStats {
                        step,
                        cells: sim.grid().cell_count(),
                        mass,
                        fc,
                        dt: r.dt,
                    });
                }
            }
            if config.dump_every > 0 && (step % config.dump_every == 0 || step == config.steps) {
                keep(&sim, step, &mut dumps)?;
            }
        }
        Ok::<_, GridError>(AdvectOutcome {
            initial_mass,
            final_mass: sim.mass()?,
            final_cells: sim.grid().cell_count(),
            peak_cells,
            dumps,
            rebalances,
            allreduces_per_step: allreduces,
            max_level_jump: worst,
        })
    })?;
    Ok(out.swap_remove(0))
}
