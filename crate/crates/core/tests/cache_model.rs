//! The L1 cache unit against an independent LRU model, on the functional
//! path and on the timed miss/fill path.

use cgrasim::memory::{AccessOutcome, CacheUnit, L1Geometry, OpType};
use cgrasim::oracle::RefLru;
use proptest::prelude::*;

const PHYS: u32 = 16;

fn geometry() -> impl Strategy<Value = (usize, usize, u32)> {
    (prop::sample::select(vec![1usize, 4, 16]), prop::sample::select(vec![1usize, 2, 4, 8]), 0u32..=2)
        .prop_filter("virtual line spans more than the sets", |&(sets, _, m)| (1 << m) <= sets)
}

fn trace(sets: usize, ways: usize) -> impl Strategy<Value = Vec<(u32, bool)>> {
    // About four times the capacity, so both hits and evictions are common.
    let words = (sets * ways * PHYS as usize) as u32;
    prop::collection::vec((0..words, any::<bool>()), 1000)
}

fn timed_hit(c: &mut CacheUnit, addr: u32, write: bool, id: u64) -> bool {
    let op = if write { OpType::Sw } else { OpType::Lw };
    match c.access(0, op, addr, 7, id) {
        AccessOutcome::Hit(_) => true,
        AccessOutcome::MissAllocated(mi) => {
            let words = c.line_bytes(0) as usize / 4;
            c.mark_issued(0, mi, 0, vec![0; words]);
            c.fill(0, mi);
            false
        }
        other => panic!("unexpected outcome {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hit_streams_match_reference(
        (sets, ways, m, t) in geometry().prop_flat_map(|(s, w, m)| (Just(s), Just(w), Just(m), trace(s, w)))
    ) {
        let geom = L1Geometry { sets, ways, phys_line: PHYS };
        let mut functional = CacheUnit::new(geom, 1, m, 4, 4);
        let mut timed = CacheUnit::new(geom, 1, m, 4, 4);
        let mut reference = RefLru::virtual_lines(sets, ways, PHYS, m);
        for (i, &(w, write)) in t.iter().enumerate() {
            let addr = w * 4;
            let expect = reference.access(addr);
            prop_assert_eq!(functional.functional_access(0, addr, write), expect, "functional access {}", i);
            prop_assert_eq!(timed_hit(&mut timed, addr, write, i as u64), expect, "timed access {}", i);
        }
        prop_assert_eq!(functional.partial_observations, 0);
        prop_assert_eq!(timed.partial_observations, 0);
    }

    #[test]
    fn partitions_do_not_disturb_each_other(
        a in prop::collection::vec(0u32..512, 1..300),
        b in prop::collection::vec(0u32..512, 1..300),
    ) {
        // Partition 0 replayed alone and interleaved with partition 1 traffic
        // sees the same hits.
        let geom = L1Geometry { sets: 4, ways: 4, phys_line: PHYS };
        let mut alone = CacheUnit::new(geom, 2, 0, 4, 4);
        let mut shared = CacheUnit::new(geom, 2, 0, 4, 4);
        for (i, &w) in a.iter().enumerate() {
            let x = alone.functional_access(0, w * 4, false);
            if let Some(&o) = b.get(i) {
                shared.functional_access(1, 0x10_0000 + o * 4, false);
            }
            prop_assert_eq!(shared.functional_access(0, w * 4, false), x);
        }
        let perms = shared.way_permissions();
        prop_assert_eq!(perms.iter().filter(|p| **p == Some(0)).count(), 2);
        prop_assert_eq!(perms.iter().filter(|p| **p == Some(1)).count(), 2);
    }
}
