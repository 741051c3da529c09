//! Conway's Game of Life on a distributed, non-periodic 2D board.

use std::str::FromStr;

use gridforge_core::io::gather_values;
use gridforge_core::{
    run_ranks_with, CellData, CommStats, DecodeError, DumpValues, Grid, GridBuilder, GridError,
    PartitionMethod, RunOptions, TransferTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Reporter, StepStats};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LifeCell {
    pub alive: u8,
    /// Scratch space for the neighbor count of the current step.
    pub live_neighbor_count: u32,
}

impl CellData for LifeCell {
    fn transfer_len(&self, _tag: TransferTag) -> usize {
        1
    }

    fn write_transfer(&self, _tag: TransferTag, out: &mut Vec<u8>) {
        out.push(self.alive);
    }

    fn read_transfer(&mut self, _tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        match bytes {
            [v @ (0 | 1)] => {
                self.alive = *v;
                Ok(())
            }
            [v] => Err(DecodeError(format!("cell state {v} is neither 0 nor 1"))),
            _ => Err(DecodeError::length(1, bytes.len())),
        }
    }
}

impl DumpValues for LifeCell {
    fn dump_values(&self, out: &mut Vec<f64>) {
        out.push(self.alive as f64);
    }

    fn value_names() -> Vec<String> {
        vec!["alive".into()]
    }
}

/// Initial board contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Glider,
    Blinker,
    /// A glider in the top left corner and a blinker on the right.
    GliderAndBlinker,
    /// Every cell alive with probability 1/3.
    Random { seed: u64 },
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "glider" => Ok(Pattern::Glider),
            "blinker" => Ok(Pattern::Blinker),
            "glider+blinker" | "glider-blinker" => Ok(Pattern::GliderAndBlinker),
            "random" => Err("random pattern needs a seed: random:<seed>".into()),
            _ => match s.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| Pattern::Random { seed })
                    .map_err(|e| format!("bad pattern seed {seed:?}: {e}")),
                None => Err(format!("unknown pattern {s:?}, expected glider, blinker, glider+blinker or random:<seed>")),
            },
        }
    }
}

impl Pattern {
    /// Row-major board, `board[y * width + x]`, 1 for live cells.
    pub fn board(&self, width: usize, height: usize) -> Vec<u8> {
        let mut b = vec![0u8; width * height];
        let mut set = |x: usize, y: usize| {
            if x < width && y < height {
                b[y * width + x] = 1;
            }
        };
        let glider = [(1, 0), (2, 1), (0, 2), (1, 2), (2, 2)];
        match *self {
            Pattern::Glider => glider.iter().for_each(|&(x, y)| set(x, y)),
            Pattern::Blinker => {
                let (x, y) = (width / 2, height / 2);
                for dy in 0..3 {
                    set(x, (y + dy).saturating_sub(1));
                }
            }
            Pattern::GliderAndBlinker => {
                glider.iter().for_each(|&(x, y)| set(x, y));
                let x = width.saturating_sub(2);
                for y in 1..4 {
                    set(x, y);
                }
            }
            Pattern::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for y in 0..height {
                    for x in 0..width {
                        if rng.gen_range(0..3) == 0 {
                            set(x, y);
                        }
                    }
                }
            }
        }
        b
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GolConfig {
    pub width: u64,
    pub height: u64,
    pub steps: u64,
    pub ranks: usize,
    pub partition: PartitionMethod,
    pub pattern: Pattern,
    /// Perturbs thread scheduling reproducibly; results must not change.
    pub schedule_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GolOutcome {
    /// Final board, row-major.
    pub board: Vec<u8>,
    /// Per rank, everything communicated by the steps themselves
    /// (exchanges and rule updates, not reporting).
    pub step_stats: Vec<CommStats>,
}

/// Runs the game and returns the final board. With a reporter, rank 0
/// emits one stats line per step; `mass` is the number of live cells.
pub fn run(config: &GolConfig, report: Option<Reporter<'_>>) -> Result<GolOutcome, GridError> {
    let (w, h) = (config.width, config.height);
    let initial = config.pattern.board(w as usize, h as usize);
    let options = RunOptions {
        schedule_seed: config.schedule_seed,
    };
    let per_rank = run_ranks_with(config.ranks, options, |comm| {
        let mut grid: Grid<LifeCell> = GridBuilder::new([w, h, 1])
            .neighborhood(1)
            .partition(config.partition)
            .build(comm)?;
        for c in grid.local_cells().to_vec() {
            let idx = (c.0 - 1) as usize;
            grid.data_mut(c)?.alive = initial[idx];
        }
        let fc = if report.is_some() { grid.local_cell_fraction()? } else { 0.0 };
        let mut stats = CommStats::default();
        for step in 1..=config.steps {
            let before = grid.comm().stats();
            life_step(&mut grid)?;
            let after = grid.comm().stats();
            stats.accumulate(&after.since(&before));
            if let Some(report) = report {
                let live = grid.local_data().map(|(_, d)| d.alive as u64).sum::<u64>();
                let live = grid.comm().allreduce(live, gridforge_core::ReduceOp::Sum)?;
                if grid.comm().rank() == 0 {
                    report(&StepStats {
                        step,
                        cells: grid.cell_count(),
                        mass: live as f64,
                        fc,
                        dt: 1.0,
                    });
                }
            }
        }
        let board = gather_values(&grid)?.map(|records| {
            let mut board = vec![0u8; (w * h) as usize];
            for (c, v) in records {
                board[(c.0 - 1) as usize] = v[0] as u8;
            }
            board
        });
        Ok::<_, GridError>((board, stats))
    })?;
    let step_stats = per_rank.iter().map(|(_, s)| s.clone()).collect();
    let board = per_rank.into_iter().next().and_then(|(b, _)| b).expect("rank 0 gathers the board");
    Ok(GolOutcome { board, step_stats })
}

/// One generation: refresh copies of remote neighbors, count live
/// neighbors, apply B3/S23.
pub fn life_step(grid: &mut Grid<LifeCell>) -> Result<(), GridError> {
    grid.update_copies_of_remote_neighbors(0)?;
    let cells = grid.local_cells().to_vec();
    for &c in &cells {
        let mut live = 0;
        for nb in grid.neighbors_of(c)? {
            live += grid.data(nb.id).expect("neighbors are local or copied").alive as u32;
        }
        grid.data_mut(c)?.live_neighbor_count = live;
    }
    for c in cells {
        let d = grid.data_mut(c)?;
        let n = d.live_neighbor_count;
        d.alive = u8::from(n == 3 || (d.alive == 1 && n == 2));
    }
    Ok(())
}
