use std::collections::BTreeSet;

use gridforge_core::{run_ranks, CellId, Grid, GridBuilder, GridError, PartitionMethod};
use gridforge_oracle::scenario::{all_cells, check_balance, check_neighbors, queue_random_requests, MeshCase};
use gridforge_oracle::{apply_refinement, balance_violation, minimal_refinement, minimal_refinement_exhaustive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single<T: Send + 'static>(f: impl Fn(gridforge_core::Comm) -> Result<T, GridError> + Send + Sync + 'static) -> T {
    run_ranks(1, f).unwrap().pop().unwrap()
}

#[test]
fn random_meshes_match_oracle_on_one_rank() {
    for seed in 0..40u64 {
        single(move |comm| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let case = MeshCase::random(&mut rng, 4, 3);
            let mut grid: Grid<()> = case.builder().build(comm)?;
            check_neighbors(&grid).unwrap_or_else(|e| panic!("seed {seed} {case:?}: {e}"));
            for _ in 0..4 {
                queue_random_requests(&mut grid, &mut rng, 3, 6)?;
                grid.stop_refining()?;
                check_neighbors(&grid).unwrap_or_else(|e| panic!("seed {seed} {case:?}: {e}"));
                check_balance(&grid).unwrap_or_else(|e| panic!("seed {seed} {case:?}: {e}"));
            }
            Ok(())
        });
    }
}

#[test]
fn random_meshes_match_oracle_across_ranks() {
    for seed in 100..110u64 {
        let hashes = run_ranks(3, move |comm| {
            let rank = comm.rank() as u64;
            let mut shape_rng = ChaCha8Rng::seed_from_u64(seed);
            let case = MeshCase::random(&mut shape_rng, 4, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + rank);
            let mut grid: Grid<()> = case.builder().partition(PartitionMethod::Random { seed }).build(comm)?;
            for _ in 0..3 {
                queue_random_requests(&mut grid, &mut rng, 2, 4)?;
                grid.stop_refining()?;
                check_neighbors(&grid).unwrap_or_else(|e| panic!("seed {seed} {case:?}: {e}"));
                check_balance(&grid).unwrap_or_else(|e| panic!("seed {seed} {case:?}: {e}"));
            }
            Ok::<_, GridError>(grid.mesh().content_hash())
        })
        .unwrap();
        assert!(hashes.windows(2).all(|w| w[0] == w[1]), "replicated tables differ: {hashes:?}");
    }
}

#[test]
fn arrows_are_dual() {
    for seed in 200..215u64 {
        single(move |comm| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let case = MeshCase::random(&mut rng, 3, 2);
            let mut grid: Grid<()> = case.builder().build(comm)?;
            for _ in 0..2 {
                queue_random_requests(&mut grid, &mut rng, 3, 0)?;
                grid.stop_refining()?;
            }
            for &c in grid.local_cells() {
                for nb in grid.neighbors_of(c)? {
                    let back = nb.reversed(c);
                    assert!(grid.neighbors_to(nb.id)?.contains(&back), "{c} -> {nb:?} has no reverse arrow");
                }
                for nb in grid.neighbors_to(c)? {
                    let back = nb.reversed(c);
                    assert!(grid.neighbors_of(nb.id)?.contains(&back), "{nb:?} -> {c} has no forward arrow");
                }
            }
            Ok(())
        });
    }
}

#[test]
fn committed_refinement_is_minimal() {
    for seed in 300..340u64 {
        single(move |comm| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let size = [0; 3].map(|_| rng.gen_range(1..=4));
            let n = rng.gen_range(0..=3);
            let periodic = [0; 3].map(|_| rng.gen_bool(0.5));
            let mut grid: Grid<()> = GridBuilder::new(size).max_level(2).periodic(periodic).neighborhood(n).build(comm)?;
            for _ in 0..3 {
                let before = all_cells(&grid);
                let requests = queue_random_requests(&mut grid, &mut rng, 2, 0)?;
                let want = minimal_refinement(grid.topology(), n, &before, &requests);
                let got: BTreeSet<CellId> = grid.stop_refining()?.refined.into_iter().collect();
                assert_eq!(got, want, "seed {seed}");
                assert_eq!(all_cells(&grid), apply_refinement(grid.topology(), &before, &got));
            }
            Ok(())
        });
    }
}

#[test]
fn fixpoint_oracle_agrees_with_enumeration() {
    // 2x1x1 grid with two levels keeps the candidate count small enough to
    // enumerate every superset.
    single(|comm| {
        let mut grid: Grid<()> = GridBuilder::new([2, 1, 1]).max_level(2).neighborhood(1).build(comm)?;
        grid.refine_completely(CellId(1))?;
        grid.stop_refining()?;
        let cells = all_cells(&grid);
        let t = grid.topology().clone();
        assert!(balance_violation(&t, 1, &cells).is_none());
        for &c in cells.iter().filter(|c| t.level_of(**c).unwrap() == 1) {
            let requests = BTreeSet::from([c]);
            let fast = minimal_refinement(&t, 1, &cells, &requests);
            let slow = minimal_refinement_exhaustive(&t, 1, &cells, &requests, 12).unwrap();
            assert_eq!(fast, slow, "request {c}");
            assert!(fast.contains(&CellId(2)), "cell 2 must follow a refined level-1 neighbor");
        }
        Ok(())
    });
}

#[test]
fn search_agrees_with_stored_lists() {
    single(|comm| {
        let mut grid: Grid<()> = GridBuilder::new([3, 3, 3]).max_level(2).neighborhood(2).build(comm)?;
        grid.refine_completely(CellId(14))?;
        grid.stop_refining()?;
        for &c in grid.local_cells() {
            assert_eq!(grid.mesh().search_neighbors(c)?, grid.neighbors_of(c)?);
        }
        Ok(())
    });
}

#[test]
fn inner_and_outer_partition_local_cells() {
    let out = run_ranks(2, |comm| {
        let grid: Grid<()> = GridBuilder::new([6, 6, 1]).partition(PartitionMethod::Block).build(comm)?;
        let mut all: Vec<CellId> = grid.inner_cells().iter().chain(grid.outer_cells()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, grid.local_cells());
        for &c in grid.outer_cells() {
            assert!(grid.neighbors_of(c)?.iter().chain(grid.neighbors_to(c)?).any(|nb| !grid.is_local(nb.id).unwrap()));
        }
        for &c in grid.inner_cells() {
            assert!(grid.neighbors_of(c)?.iter().chain(grid.neighbors_to(c)?).all(|nb| grid.is_local(nb.id).unwrap()));
        }
        Ok::<_, GridError>(grid.outer_cells().len())
    })
    .unwrap();
    // 18 cells per rank, each touching the cut with one row of 6
    assert_eq!(out, vec![6, 6]);
}
