//! Cell types and drivers for exchange tests.

use std::collections::BTreeMap;

use gridforge_core::{
    run_ranks_with, Batching, CellData, CellId, CommStats, DecodeError, Grid, GridBuilder, GridError, PartitionMethod,
    RunOptions, TransferTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-size cell: tag 0 transfers all 24 bytes, tag 1 only the first 8.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bytes24(pub [u8; 24]);

impl CellData for Bytes24 {
    fn transfer_len(&self, tag: TransferTag) -> usize {
        if tag == 1 {
            8
        } else {
            24
        }
    }

    fn write_transfer(&self, tag: TransferTag, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0[..self.transfer_len(tag)]);
    }

    fn read_transfer(&mut self, tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        let n = self.transfer_len(tag);
        if bytes.len() != n {
            return Err(DecodeError::length(n, bytes.len()));
        }
        self.0[..n].copy_from_slice(bytes);
        Ok(())
    }
}

/// Variable-size cell holding a list of particle positions. Tag 0
/// transfers the particle count, tag 1 the positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Particles {
    pub count: u64,
    pub positions: Vec<f64>,
}

pub const COUNT_TAG: TransferTag = 0;
pub const POSITIONS_TAG: TransferTag = 1;

impl Particles {
    /// Sizes a remote copy for the count received in the first phase.
    pub fn resize(&mut self) {
        self.positions.resize(self.count as usize, 0.0);
    }
}

impl CellData for Particles {
    fn transfer_len(&self, tag: TransferTag) -> usize {
        match tag {
            COUNT_TAG => 8,
            _ => 8 * self.positions.len(),
        }
    }

    fn write_transfer(&self, tag: TransferTag, out: &mut Vec<u8>) {
        match tag {
            COUNT_TAG => out.extend_from_slice(&self.count.to_le_bytes()),
            _ => {
                for p in &self.positions {
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
        }
    }

    fn read_transfer(&mut self, tag: TransferTag, bytes: &[u8]) -> Result<(), DecodeError> {
        if bytes.len() != self.transfer_len(tag) {
            return Err(DecodeError::length(self.transfer_len(tag), bytes.len()));
        }
        match tag {
            COUNT_TAG => self.count = u64::from_le_bytes(bytes.try_into().unwrap()),
            _ => {
                for (p, b) in self.positions.iter_mut().zip(bytes.chunks_exact(8)) {
                    *p = f64::from_le_bytes(b.try_into().unwrap());
                }
            }
        }
        Ok(())
    }

    fn encode(&self, out: &mut Vec<u8>) {
        self.write_transfer(COUNT_TAG, out);
        self.write_transfer(POSITIONS_TAG, out);
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() < 8 || !(bytes.len() - 8).is_multiple_of(8) {
            return Err(DecodeError(format!("{} bytes is not a particle list", bytes.len())));
        }
        let mut p = Particles::default();
        p.read_transfer(COUNT_TAG, &bytes[..8])?;
        p.resize();
        p.read_transfer(POSITIONS_TAG, &bytes[8..])?;
        Ok(p)
    }
}

/// How the copies are brought up to date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    Synchronous,
    ReceivesFirst,
    SendsFirst,
}

/// Deterministic pseudo-random contents of cell `c` in round `round`.
pub fn cell_bytes(seed: u64, round: u64, c: CellId) -> Bytes24 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c.0 << 20) ^ round.wrapping_mul(0x9e37_79b9));
    let mut b = [0u8; 24];
    rng.fill(&mut b);
    Bytes24(b)
}

/// Per-rank result of [`exchange_snapshot`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    /// Contents of every remote copy after each round.
    pub copies: Vec<BTreeMap<CellId, Bytes24>>,
    /// Communication done by the exchanges alone.
    pub stats: CommStats,
}

/// Fills a refined 6x5x4 grid with random bytes and updates the remote
/// copies `rounds` times with the given mode.
pub fn exchange_snapshot(
    ranks: usize,
    partition: PartitionMethod,
    batching: Batching,
    mode: UpdateMode,
    seed: u64,
    rounds: u64,
) -> Result<Vec<Snapshot>, GridError> {
    run_ranks_with(ranks, RunOptions { schedule_seed: Some(seed) }, |comm| {
        let mut grid: Grid<Bytes24> = GridBuilder::new([6, 5, 4])
            .max_level(1)
            .periodic([true, false, true])
            .neighborhood(1)
            .partition(partition)
            .build(comm)?;
        for c in [CellId(8), CellId(40)] {
            if grid.is_local(c)? {
                grid.refine_completely(c)?;
            }
        }
        grid.stop_refining()?;
        grid.set_message_batching(batching)?;
        let start = grid.comm().stats();
        let mut copies = Vec::new();
        for round in 0..rounds {
            for c in grid.local_cells().to_vec() {
                *grid.data_mut(c)? = cell_bytes(seed, round, c);
            }
            match mode {
                UpdateMode::Synchronous => grid.update_copies_of_remote_neighbors(0)?,
                UpdateMode::ReceivesFirst => {
                    grid.start_remote_neighbor_copy_updates(0)?;
                    grid.wait_remote_neighbor_copy_update_receives()?;
                    grid.wait_remote_neighbor_copy_update_sends()?;
                }
                UpdateMode::SendsFirst => {
                    grid.start_remote_neighbor_copy_updates(0)?;
                    grid.wait_remote_neighbor_copy_update_sends()?;
                    grid.wait_remote_neighbor_copy_update_receives()?;
                }
            }
            let snap = grid
                .remote_neighbors()
                .iter()
                .map(|&c| (c, grid.remote_copy(c).expect("remote neighbor has a copy").clone()))
                .collect();
            copies.push(snap);
        }
        Ok(Snapshot {
            copies,
            stats: grid.comm().stats().since(&start),
        })
    })
}

/// Random particle lists for `rounds` steps exchanged with the two-phase
/// protocol. Every rank checks each received list against the sender's
/// deterministic contents and returns how many lists it verified.
pub fn particle_rounds(ranks: usize, partition: PartitionMethod, seed: u64, rounds: u64) -> Result<Vec<(u64, CommStats)>, GridError> {
    let contents = move |round: u64, c: CellId| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ c.0.wrapping_mul(0x5851_f42d) ^ (round << 32));
        let n = rng.gen_range(0..12usize);
        let positions: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect();
        Particles {
            count: n as u64,
            positions,
        }
    };
    run_ranks_with(ranks, RunOptions { schedule_seed: Some(seed) }, |comm| {
        let mut grid: Grid<Particles> = GridBuilder::new([5, 5, 3])
            .periodic([true; 3])
            .neighborhood(1)
            .partition(partition)
            .build(comm)?;
        let start = grid.comm().stats();
        let mut verified = 0;
        for round in 0..rounds {
            for c in grid.local_cells().to_vec() {
                *grid.data_mut(c)? = contents(round, c);
            }
            grid.two_phase_variable_exchange(COUNT_TAG, POSITIONS_TAG, |_, copy| copy.resize())?;
            for &c in grid.remote_neighbors() {
                let got = grid.remote_copy(c).expect("remote neighbor has a copy");
                assert_eq!(got, &contents(round, c), "round {round}, cell {c}");
                verified += 1;
            }
        }
        Ok((verified, grid.comm().stats().since(&start)))
    })
}
