//! Demonstration programs built on `gridforge-core`: a distributed Game of
//! Life, conservative advection with runtime refinement, and two
//! benchmarks. The `gridforge` binary is a thin command line front end over
//! these modules.

use std::fmt;

pub mod advect;
pub mod bench;
pub mod gol;

/// One line of per-step output, printed as
/// `step=<k> cells=<n> mass=<m> fc=<f> dt=<dt>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub cells: usize,
    pub mass: f64,
    pub fc: f64,
    pub dt: f64,
}

impl fmt::Display for StepStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} cells={} mass={} fc={} dt={}",
            self.step, self.cells, self.mass, self.fc, self.dt
        )
    }
}

/// Receives stats lines from rank 0 while a run is in progress.
pub type Reporter<'a> = &'a (dyn Fn(&StepStats) + Sync);
