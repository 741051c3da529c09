//! Benchmarks for refinement throughput and neighbor data exchange.

use std::time::{Duration, Instant};

use gridforge_core::{
    run_ranks, Batching, CellData, CellId, DecodeError, Grid, GridBuilder, GridError, PartitionMethod, ReduceOp,
    TransferTag,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AmrSpeed {
    /// Cells created by refinement over the whole run.
    pub created: u64,
    /// Cells in the final grid.
    pub final_cells: u64,
    /// Wall time of the refinement rounds alone.
    pub elapsed: Duration,
}

impl AmrSpeed {
    pub fn cells_per_second(&self) -> f64 {
        self.created as f64 / self.elapsed.as_secs_f64()
    }
}

/// Number of refinement levels needed to go from `base` to `target`
/// cells per dimension.
pub fn levels_between(base: u64, target: u64) -> Result<u32, GridError> {
    if base == 0 || target < base || target % base != 0 || !(target / base).is_power_of_two() {
        return Err(GridError::InvalidArgument(format!("target {target} is not base {base} times a power of two")));
    }
    Ok((target / base).trailing_zeros())
}

/// Refines a `base`³ grid uniformly, one level per round, until it has
/// `target`³ cells. Only the refinement rounds are timed.
pub fn amr_speed(base: u64, target: u64, ranks: usize) -> Result<AmrSpeed, GridError> {
    let levels = levels_between(base, target)?;
    let per_rank = run_ranks(ranks, |comm| {
        let mut grid: Grid<()> = GridBuilder::new([base; 3])
            .max_level(levels)
            .neighborhood(0)
            .partition(PartitionMethod::HilbertSfc)
            .build(comm)?;
        grid.comm().barrier()?;
        let start = Instant::now();
        let mut created = 0u64;
        for _ in 0..levels {
            for c in grid.local_cells().to_vec() {
                grid.refine_completely(c)?;
            }
            created += grid.stop_refining()?.created.len() as u64;
        }
        grid.comm().barrier()?;
        let elapsed = start.elapsed();
        let local = grid.local_cells().len() as u64;
        let total = grid.comm().allreduce(local, ReduceOp::Sum)?;
        Ok::<_, GridError>(AmrSpeed {
            created,
            final_cells: total,
            elapsed,
        })
    })?;
    Ok(per_rank.into_iter().next().expect("at least one rank"))
}

/// Opaque per-cell payload of a fixed size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Payload(pub Vec<u8>);

impl CellData for Payload {
    fn transfer_len(&self, _tag: TransferTag) -> usize {
        self.0.len()
    }

    fn write_transfer(&self, _tag: TransferTag, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }

    fn read_transfer(&mut self, _tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        if bytes.len() != self.0.len() {
            return Err(DecodeError::length(self.0.len(), bytes.len()));
        }
        self.0.copy_from_slice(bytes);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExchangeBenchConfig {
    /// Approximate number of cells; the grid is the nearest cube.
    pub cells: u64,
    pub bytes: usize,
    pub ranks: usize,
    pub batching: Batching,
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeBench {
    pub cells: u64,
    pub rounds: u32,
    /// Messages and bytes sent by all ranks together per round.
    pub messages_per_round: u64,
    pub bytes_per_round: u64,
    pub elapsed: Duration,
}

impl ExchangeBench {
    pub fn seconds_per_round(&self) -> f64 {
        self.elapsed.as_secs_f64() / self.rounds.max(1) as f64
    }
}

/// Times repeated updates of remote neighbor copies on a periodic cube
/// with face neighbors only, partitioned along a Hilbert curve.
pub fn exchange_bench(config: &ExchangeBenchConfig) -> Result<ExchangeBench, GridError> {
    let side = ((config.cells.max(1) as f64).cbrt().round() as u64).max(1);
    let per_rank = run_ranks(config.ranks, |comm| {
        let mut grid: Grid<Payload> = GridBuilder::new([side; 3])
            .periodic([true; 3])
            .neighborhood(0)
            .partition(PartitionMethod::HilbertSfc)
            .build(comm)?;
        grid.set_message_batching(config.batching)?;
        for c in grid.local_cells().to_vec() {
            let fill = (c.0 % 251) as u8;
            *grid.data_mut(c)? = Payload(vec![fill; config.bytes]);
        }
        let remote: Vec<CellId> = grid.remote_neighbors().to_vec();
        for c in remote {
            if let Some(copy) = grid.remote_copy_mut(c) {
                copy.0 = vec![0; config.bytes];
            }
        }
        // first round outside the clock builds the transfer plan
        grid.update_copies_of_remote_neighbors(0)?;
        grid.comm().barrier()?;
        let before = grid.comm().stats();
        let start = Instant::now();
        for _ in 0..config.rounds {
            grid.update_copies_of_remote_neighbors(0)?;
        }
        let elapsed = start.elapsed();
        let d = grid.comm().stats().since(&before);
        let messages = grid.comm().allreduce(d.messages_sent, ReduceOp::Sum)?;
        let bytes = grid.comm().allreduce(d.bytes_sent, ReduceOp::Sum)?;
        Ok::<_, GridError>((messages, bytes, elapsed))
    })?;
    let (messages, bytes, _) = per_rank[0];
    let elapsed = per_rank.iter().map(|r| r.2).max().unwrap_or_default();
    let rounds = config.rounds.max(1) as u64;
    Ok(ExchangeBench {
        cells: side.pow(3),
        rounds: config.rounds,
        messages_per_round: messages / rounds,
        bytes_per_round: bytes / rounds,
        elapsed,
    })
}
