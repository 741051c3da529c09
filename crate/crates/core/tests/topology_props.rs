use gridforge_core::{CellId, Indices, Topology};
use proptest::prelude::*;

fn topology() -> impl Strategy<Value = Topology> {
    ([1u64..=5, 1u64..=5, 1u64..=5], 0u32..=4, any::<[bool; 3]>())
        .prop_map(|(size, level, periodic)| Topology::new(size, level, periodic).unwrap())
}

proptest! {
    #[test]
    fn id_round_trip(t in topology(), pick in any::<u64>()) {
        let id = CellId(1 + pick % t.max_id().0);
        let (level, ix) = t.locate(id).unwrap();
        prop_assert_eq!(t.id_from(level, ix).unwrap(), id);
        prop_assert!(level <= t.max_level());
        let s = t.cell_size(level);
        for d in 0..3 {
            prop_assert_eq!(ix.0[d] % s, 0);
            prop_assert!(ix.0[d] < t.extent()[d]);
        }
    }

    #[test]
    fn family(t in topology(), pick in any::<u64>()) {
        let id = CellId(1 + pick % t.max_id().0);
        let level = t.level_of(id).unwrap();
        if level < t.max_level() {
            let children = t.children_of(id).unwrap();
            prop_assert_eq!(children.len(), 8);
            for c in &children {
                prop_assert_eq!(t.parent_of(*c).unwrap(), Some(id));
                prop_assert_eq!(t.siblings_of(*c).unwrap(), children.clone());
            }
            prop_assert_eq!(t.indices_of(children[0]).unwrap(), t.indices_of(id).unwrap());
        } else {
            prop_assert!(t.children_of(id).unwrap().is_empty());
        }
        if level == 0 {
            prop_assert_eq!(t.parent_of(id).unwrap(), None);
        }
    }

    #[test]
    fn containing_cell_holds_point(t in topology(), pt in any::<[u64; 3]>(), level in 0u32..=4) {
        let level = level.min(t.max_level());
        let e = t.extent();
        let p = Indices([pt[0] % e[0], pt[1] % e[1], pt[2] % e[2]]);
        let id = t.id_containing(level, p).unwrap();
        let lo = t.indices_of(id).unwrap().0;
        let s = t.cell_size(level);
        for d in 0..3 {
            prop_assert!(lo[d] <= p.0[d] && p.0[d] < lo[d] + s);
        }
    }

    #[test]
    fn wrapping_respects_periodicity(t in topology(), raw in any::<[i32; 3]>()) {
        let raw = raw.map(|v| v as i64);
        let e = t.extent().map(|v| v as i64);
        let wrapped = t.wrap_indices(raw);
        let inside = (0..3).all(|d| t.periodic()[d] || (0..e[d]).contains(&raw[d]));
        prop_assert_eq!(wrapped.is_some(), inside);
        if let Some(w) = wrapped {
            for d in 0..3 {
                prop_assert_eq!(w.0[d] as i64, raw[d].rem_euclid(e[d]));
            }
        }
    }
}

#[test]
fn invalid_ids_are_rejected() {
    let t = Topology::new([2, 1, 1], 1, [false; 3]).unwrap();
    assert_eq!(t.max_id(), CellId(18));
    assert!(t.level_of(CellId(0)).is_err());
    assert!(t.level_of(CellId(19)).is_err());
    assert!(t.id_from(2, Indices::new(0, 0, 0)).is_err());
    assert!(t.id_from(0, Indices::new(1, 0, 0)).is_err());
    assert!(t.id_from(0, Indices::new(4, 0, 0)).is_err());
}

#[test]
fn degenerate_topologies_are_rejected() {
    assert!(Topology::new([0, 1, 1], 0, [false; 3]).is_err());
    assert!(Topology::new([1 << 40, 1 << 40, 1], 10, [false; 3]).is_err());
}

#[test]
fn every_id_round_trips_on_small_topologies() {
    for size in [[1, 1, 1], [3, 2, 1], [4, 4, 4]] {
        for level in 0..=3 {
            let t = Topology::new(size, level, [false; 3]).unwrap();
            for id in 1..=t.max_id().0 {
                let (l, ix) = t.locate(CellId(id)).unwrap();
                assert_eq!(t.id_from(l, ix).unwrap(), CellId(id));
            }
        }
    }
}
