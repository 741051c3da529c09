use gridforge_core::{run_ranks, Batching, CellId, Grid, GridBuilder, GridError, PartitionMethod};
use gridforge_oracle::fixtures::{
    cell_bytes, exchange_snapshot, particle_rounds, Bytes24, Particles, UpdateMode, COUNT_TAG, POSITIONS_TAG,
};

const MODES: [UpdateMode; 3] = [UpdateMode::Synchronous, UpdateMode::ReceivesFirst, UpdateMode::SendsFirst];

#[test]
fn copies_match_owner_data_in_every_mode() {
    for (ranks, partition) in [(2, PartitionMethod::Block), (3, PartitionMethod::Random { seed: 5 }), (4, PartitionMethod::HilbertSfc)] {
        let reference = exchange_snapshot(ranks, partition, Batching::PerRank, UpdateMode::Synchronous, 11, 3).unwrap();
        for snap in &reference {
            for (round, copies) in snap.copies.iter().enumerate() {
                assert!(!copies.is_empty());
                for (c, data) in copies {
                    assert_eq!(data, &cell_bytes(11, round as u64, *c));
                }
            }
        }
        for batching in [Batching::PerRank, Batching::PerCell] {
            for mode in MODES {
                let other = exchange_snapshot(ranks, partition, batching, mode, 11, 3).unwrap();
                for (a, b) in reference.iter().zip(&other) {
                    assert_eq!(a.copies, b.copies, "{batching:?} {mode:?}");
                    assert_eq!(b.stats.collectives(), 0);
                }
            }
        }
    }
}

#[test]
fn per_cell_mode_sends_more_messages() {
    let batched = exchange_snapshot(3, PartitionMethod::Block, Batching::PerRank, UpdateMode::Synchronous, 1, 1).unwrap();
    let single = exchange_snapshot(3, PartitionMethod::Block, Batching::PerCell, UpdateMode::Synchronous, 1, 1).unwrap();
    let total = |s: &[gridforge_oracle::fixtures::Snapshot]| s.iter().map(|x| x.stats.messages_sent).sum::<u64>();
    assert!(total(&single) > total(&batched));
}

#[test]
fn variable_size_payloads_round_trip() {
    for ranks in [2, 3] {
        let out = particle_rounds(ranks, PartitionMethod::Random { seed: 9 }, 4, 20).unwrap();
        for (verified, stats) in out {
            assert!(verified > 0);
            assert_eq!(stats.collectives(), 0);
        }
    }
}

fn two_particles(comm: gridforge_core::Comm, batching: Batching) -> Result<Grid<Particles>, GridError> {
    let mut grid: Grid<Particles> = GridBuilder::new([4, 1, 1]).partition(PartitionMethod::Block).build(comm)?;
    grid.set_message_batching(batching)?;
    for c in grid.local_cells().to_vec() {
        let d = grid.data_mut(c)?;
        d.count = 2;
        d.resize();
    }
    Ok(grid)
}

#[test]
fn wrongly_sized_copy_is_a_length_error() {
    for batching in [Batching::PerRank, Batching::PerCell] {
        let err = run_ranks(2, |comm| {
            let mut grid = two_particles(comm, batching)?;
            grid.two_phase_variable_exchange(COUNT_TAG, POSITIONS_TAG, |_, copy| {
                copy.positions = vec![0.0; copy.count as usize + 1];
            })
        })
        .unwrap_err();
        assert!(matches!(err, GridError::TransferLength { expected: 24, actual: 16, .. }), "{err}");
    }
}

#[test]
fn unsized_copy_overflows_the_receive() {
    for batching in [Batching::PerRank, Batching::PerCell] {
        let err = run_ranks(2, |comm| {
            let mut grid = two_particles(comm, batching)?;
            grid.update_copies_of_remote_neighbors(COUNT_TAG)?;
            grid.update_copies_of_remote_neighbors(POSITIONS_TAG)
        })
        .unwrap_err();
        assert!(
            matches!(err, GridError::Transport(gridforge_core::TransportError::ReceiveOverflow { .. })),
            "{err}"
        );
    }
}

#[test]
fn misuse_of_split_phase_is_reported() {
    run_ranks(2, |comm| {
        let mut grid: Grid<Bytes24> = GridBuilder::new([4, 1, 1]).partition(PartitionMethod::Block).build(comm)?;
        assert!(matches!(grid.wait_remote_neighbor_copy_update_receives(), Err(GridError::NoExchangeInFlight)));
        grid.start_remote_neighbor_copy_updates(0)?;
        assert!(matches!(grid.start_remote_neighbor_copy_updates(0), Err(GridError::ExchangeInFlight)));
        assert!(matches!(grid.stop_refining(), Err(GridError::StructureChangedDuringExchange)));
        assert!(matches!(grid.set_message_batching(Batching::PerCell), Err(GridError::ExchangeInFlight)));
        grid.wait_remote_neighbor_copy_update_receives()?;
        assert!(matches!(grid.wait_remote_neighbor_copy_update_receives(), Err(GridError::AlreadyWaited(_))));
        grid.wait_remote_neighbor_copy_update_sends()?;
        assert!(!grid.exchange_in_flight());
        assert!(matches!(grid.wait_remote_neighbor_copy_update_sends(), Err(GridError::NoExchangeInFlight)));
        Ok::<_, GridError>(())
    })
    .unwrap();
}

#[test]
fn modified_send_buffer_is_detected() {
    let results = run_ranks(2, |comm| {
        let mut grid: Grid<Bytes24> = GridBuilder::new([4, 1, 1]).partition(PartitionMethod::Block).build(comm)?;
        grid.start_remote_neighbor_copy_updates(0)?;
        grid.wait_remote_neighbor_copy_update_receives()?;
        let outer = grid.outer_cells()[0];
        grid.data_mut(outer)?.0[0] ^= 1;
        Ok::<_, GridError>(matches!(grid.wait_remote_neighbor_copy_update_sends(), Err(GridError::SendBufferModified)))
    })
    .unwrap();
    assert_eq!(results, vec![cfg!(debug_assertions); 2]);
}

#[test]
fn plan_is_cached_until_structure_changes() {
    run_ranks(2, |comm| {
        let mut grid: Grid<Bytes24> = GridBuilder::new([4, 4, 1]).max_level(1).partition(PartitionMethod::Block).build(comm)?;
        let first = grid.transfer_plan().clone();
        assert_eq!(grid.transfer_plan(), &first);
        let c = grid.local_cells()[0];
        grid.refine_completely(c)?;
        grid.stop_refining()?;
        assert_ne!(grid.transfer_plan().epoch(), first.epoch());
        let plan = grid.transfer_plan().clone();
        let received: usize = plan.receive.values().map(Vec::len).sum();
        assert_eq!(received, grid.remote_neighbors().len());
        Ok::<_, GridError>(())
    })
    .unwrap();
}

#[test]
fn send_and_receive_lists_mirror_each_other() {
    let plans = run_ranks(3, |comm| {
        let mut grid: Grid<()> = GridBuilder::new([5, 4, 3])
            .max_level(1)
            .neighborhood(2)
            .partition(PartitionMethod::Random { seed: 2 })
            .build(comm)?;
        if grid.is_local(CellId(30))? {
            grid.refine_completely(CellId(30))?;
        }
        grid.stop_refining()?;
        Ok::<_, GridError>(grid.transfer_plan().clone())
    })
    .unwrap();
    for (a, pa) in plans.iter().enumerate() {
        for (b, pb) in plans.iter().enumerate() {
            if a != b {
                assert_eq!(pa.send.get(&b), pb.receive.get(&a), "{a} -> {b}");
            }
        }
    }
}
