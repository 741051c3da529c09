use std::collections::BTreeMap;

use gridforge_core::io::gather_values;
use gridforge_core::partition::{hilbert_bits, hilbert_key, hilbert_order, hilbert_point, partition, HilbertKey};
use gridforge_core::{run_ranks, CellId, Grid, GridBuilder, GridError, Indices, PartitionMethod, Topology};
use gridforge_oracle::check_hilbert_path;
use proptest::prelude::*;

const METHODS: [PartitionMethod; 4] = [
    PartitionMethod::Block,
    PartitionMethod::Rcb,
    PartitionMethod::HilbertSfc,
    PartitionMethod::Random { seed: 17 },
];

fn key_from_index(k: u64) -> HilbertKey {
    HilbertKey([0, 0, k])
}

#[test]
fn curve_is_hilbert_type() {
    for bits in 1..=4 {
        let n = 1u64 << (3 * bits);
        let path: Vec<[u64; 3]> = (0..n).map(|k| hilbert_point(key_from_index(k), bits)).collect();
        check_hilbert_path(&path, bits).unwrap();
        for (k, p) in path.iter().enumerate() {
            assert_eq!(hilbert_key(*p, bits), key_from_index(k as u64));
        }
    }
}

#[test]
fn cell_order_follows_the_curve() {
    // 4^3 level-0 cells: doubled centers are the odd points of an 8^3 cube
    let t = Topology::new([4, 4, 4], 0, [false; 3]).unwrap();
    let bits = hilbert_bits(&t);
    assert_eq!(bits, 3);
    let cells: Vec<CellId> = (1..=64).map(CellId).collect();
    let mut want = Vec::new();
    for k in 0..512 {
        let p = hilbert_point(key_from_index(k), bits);
        if p.iter().all(|v| v % 2 == 1) {
            want.push(t.id_from(0, Indices(p.map(|v| v / 2))).unwrap());
        }
    }
    let got = hilbert_order(&t, &cells);
    assert_eq!(got, want);
    for w in got.windows(2) {
        let a = t.indices_of(w[0]).unwrap().0;
        let b = t.indices_of(w[1]).unwrap().0;
        assert_eq!((0..3).map(|d| a[d].abs_diff(b[d])).sum::<u64>(), 1);
    }
}

proptest! {
    #[test]
    fn partition_is_total(
        size in [1u64..=6, 1u64..=6, 1u64..=6],
        ranks in 1usize..=9,
        weights in proptest::collection::vec(0.5f64..4.0, 216),
        m in 0usize..4,
    ) {
        let t = Topology::new(size, 0, [false; 3]).unwrap();
        let cells: Vec<CellId> = (1..=t.level0_count()).map(CellId).collect();
        let w = &weights[..cells.len()];
        let owners = partition(METHODS[m], &t, &cells, w, ranks).unwrap();
        prop_assert_eq!(owners.len(), cells.len());
        prop_assert!(owners.iter().all(|&r| r < ranks));
        prop_assert_eq!(partition(METHODS[m], &t, &cells, w, ranks).unwrap(), owners.clone());
        if METHODS[m] != (PartitionMethod::Random { seed: 17 }) {
            // contiguous-chunk methods never give a rank more than its share plus one cell
            let total: f64 = w.iter().sum();
            let mut load = vec![0.0; ranks];
            for (i, &r) in owners.iter().enumerate() {
                load[r] += w[i];
            }
            let max_w = w.iter().copied().fold(0.0, f64::max);
            for l in load {
                prop_assert!(l <= total / ranks as f64 + 2.0 * max_w + 1e-9);
            }
        }
    }
}

#[test]
fn empty_cell_set_is_valid() {
    let t = Topology::new([2, 2, 2], 0, [false; 3]).unwrap();
    for m in METHODS {
        assert_eq!(partition(m, &t, &[], &[], 3), Some(vec![]));
    }
    assert_eq!(partition(PartitionMethod::None, &t, &[], &[], 3), None);
}

fn surface_to_volume(t: &Topology, owners: &[usize], ranks: usize) -> f64 {
    let e = t.size();
    let mut faces = vec![0u64; ranks];
    let mut cells = vec![0u64; ranks];
    for id in 1..=t.level0_count() {
        let r = owners[id as usize - 1];
        cells[r] += 1;
        let ix = t.indices_of(CellId(id)).unwrap().0;
        for d in 0..3 {
            for dir in [-1i64, 1] {
                let mut n = ix.map(|v| v as i64);
                n[d] += dir;
                if n[d] < 0 || n[d] >= e[d] as i64 {
                    continue;
                }
                let other = t.id_from(0, Indices(n.map(|v| v as u64))).unwrap();
                if owners[other.0 as usize - 1] != r {
                    faces[r] += 1;
                }
            }
        }
    }
    (0..ranks).map(|r| faces[r] as f64 / cells[r] as f64).sum::<f64>() / ranks as f64
}

#[test]
fn hilbert_parts_are_more_compact_than_random() {
    let t = Topology::new([8, 8, 8], 0, [false; 3]).unwrap();
    let cells: Vec<CellId> = (1..=512).map(CellId).collect();
    let w = vec![1.0; 512];
    let ranks = 8;
    let hilbert = surface_to_volume(&t, &partition(PartitionMethod::HilbertSfc, &t, &cells, &w, ranks).unwrap(), ranks);
    let random: f64 = (0..10)
        .map(|seed| surface_to_volume(&t, &partition(PartitionMethod::Random { seed }, &t, &cells, &w, ranks).unwrap(), ranks))
        .sum::<f64>()
        / 10.0;
    assert!(hilbert < random, "hilbert {hilbert} random {random}");
}

fn values(grid: &Grid<f64>) -> Result<Option<BTreeMap<CellId, u64>>, GridError> {
    Ok(gather_values(grid)?.map(|v| v.into_iter().map(|(c, x)| (c, x[0].to_bits())).collect()))
}

#[test]
fn block_from_rank_zero_equals_fresh_block() {
    let fresh = run_ranks(2, |comm| {
        let g: Grid<f64> = GridBuilder::new([5, 3, 2]).partition(PartitionMethod::Block).build(comm)?;
        Ok::<_, GridError>(g.mesh().sorted_cells())
    })
    .unwrap();
    let migrated = run_ranks(2, |comm| {
        let mut grid: Grid<f64> = GridBuilder::new([5, 3, 2]).build(comm)?;
        assert_eq!(grid.local_cell_fraction()?, f64::INFINITY);
        let report = grid.balance_load_with(PartitionMethod::Block)?;
        assert_eq!(report.moved, 15);
        assert_eq!(grid.local_cell_fraction()?, 1.0);
        Ok::<_, GridError>(grid.mesh().sorted_cells())
    })
    .unwrap();
    assert_eq!(fresh, migrated);
}

#[test]
fn none_and_single_rank_move_nothing() {
    let moved = run_ranks(3, |comm| {
        let mut grid: Grid<f64> = GridBuilder::new([4, 4, 4]).partition(PartitionMethod::Rcb).build(comm)?;
        Ok::<_, GridError>(grid.balance_load_with(PartitionMethod::None)?.moved)
    })
    .unwrap();
    assert_eq!(moved, vec![0; 3]);
    for m in METHODS {
        let moved = run_ranks(1, |comm| {
            let mut grid: Grid<f64> = GridBuilder::new([4, 4, 4]).build(comm)?;
            Ok::<_, GridError>(grid.balance_load_with(m)?.moved)
        })
        .unwrap();
        assert_eq!(moved, vec![0]);
    }
}

#[test]
fn migration_keeps_every_cell_and_its_data() {
    let out = run_ranks(4, |comm| {
        let mut grid: Grid<f64> = GridBuilder::new([6, 5, 4])
            .max_level(1)
            .periodic([true, false, false])
            .partition(PartitionMethod::Block)
            .build(comm)?;
        for c in grid.local_cells().to_vec() {
            *grid.data_mut(c)? = c.0 as f64 * 0.5 + 0.125;
            if c.0 % 13 == 0 {
                grid.refine_completely(c)?;
            }
        }
        grid.stop_refining()?;
        for c in grid.local_cells().to_vec() {
            *grid.data_mut(c)? += (c.0 % 7) as f64;
        }
        let before = values(&grid)?;
        let mut seen = vec![before.clone()];
        for m in [PartitionMethod::HilbertSfc, PartitionMethod::Random { seed: 4 }, PartitionMethod::Rcb, PartitionMethod::Block] {
            let report = grid.balance_load_with(m)?;
            assert!(report.moved > 0 || m == PartitionMethod::Block);
            let local: usize = grid.local_cells().len();
            assert_eq!(grid.local_data().count(), local);
            seen.push(values(&grid)?);
        }
        Ok::<_, GridError>(seen)
    })
    .unwrap();
    let root = &out[0];
    assert!(root[0].as_ref().unwrap().len() > 120);
    for snapshot in root {
        assert_eq!(snapshot, &root[0]);
    }
}

#[test]
fn pins_override_the_partitioner_until_unpinned() {
    run_ranks(3, |comm| {
        let mut grid: Grid<f64> = GridBuilder::new([6, 6, 1]).partition(PartitionMethod::Block).build(comm)?;
        let pinned = [(CellId(1), 2), (CellId(36), 0), (CellId(20), 1)];
        for &(c, r) in &pinned {
            if grid.is_local(c)? {
                grid.pin(c, r)?;
            }
        }
        for m in [PartitionMethod::Block, PartitionMethod::HilbertSfc, PartitionMethod::Random { seed: 3 }] {
            grid.balance_load_with(m)?;
            for &(c, r) in &pinned {
                assert_eq!(grid.owner_of(c)?, r, "{m:?}");
            }
        }
        for &(c, _) in &pinned {
            if grid.is_local(c)? {
                grid.unpin(c)?;
            }
        }
        grid.balance_load_with(PartitionMethod::Block)?;
        assert_eq!(grid.owner_of(CellId(1))?, 0);
        assert_eq!(grid.owner_of(CellId(36))?, 2);
        assert!(matches!(grid.pin(grid.local_cells()[0], 3), Err(GridError::InvalidRank { rank: 3, ranks: 3 })));
        Ok::<_, GridError>(())
    })
    .unwrap();
}

#[test]
fn weights_shift_the_block_boundary() {
    let owners = run_ranks(2, |comm| {
        let mut grid: Grid<f64> = GridBuilder::new([8, 1, 1]).partition(PartitionMethod::Block).build(comm)?;
        if grid.is_local(CellId(1))? {
            grid.set_weight(CellId(1), 5.0)?;
        }
        grid.balance_load()?;
        Ok::<_, GridError>((1..=8).map(|i| grid.owner_of(CellId(i)).unwrap()).collect::<Vec<_>>())
    })
    .unwrap();
    // total weight 12: cell 1 alone carries 5 of rank 0's 6
    assert_eq!(owners[0], vec![0, 0, 1, 1, 1, 1, 1, 1]);
    assert_eq!(owners[0], owners[1]);
}
