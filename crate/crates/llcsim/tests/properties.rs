//! Property-based invariants: LRU against a naive reference model, trace
//! round-trips, bound monotonicity, and whole-world structural checks on
//! randomized configurations and workloads.

use std::sync::Arc;

use proptest::prelude::*;

use llcsim::analysis::{wcl_1stdm, BoundInputs};
use llcsim::config::SharingMode;
use llcsim::engine::{TraceAccess, TraceSource, World, WorldOptions};
use llcsim::replacement::make_policy;
use llcsim::workload::{emit_trace, generate_trace, parse_trace};
use llcsim::presets;

#[derive(Debug, Clone)]
enum LruOp {
    Access { set: usize, way: usize },
    Invalidate { set: usize, way: usize },
}

fn lru_ops(num_sets: usize, num_ways: usize) -> impl Strategy<Value = Vec<LruOp>> {
    let op = (0..num_sets, 0..num_ways, any::<bool>()).prop_map(|(set, way, acc)| {
        if acc {
            LruOp::Access { set, way }
        } else {
            LruOp::Invalidate { set, way }
        }
    });
    proptest::collection::vec(op, 0..200)
}

/// Straightforward reference: one recency list per set, most recent first.
#[derive(Clone)]
struct RefLru {
    stacks: Vec<Vec<usize>>,
}

impl RefLru {
    fn new(num_sets: usize) -> Self {
        RefLru {
            stacks: vec![Vec::new(); num_sets],
        }
    }
    fn access(&mut self, set: usize, way: usize) {
        self.stacks[set].retain(|&w| w != way);
        self.stacks[set].insert(0, way);
    }
    fn invalidate(&mut self, set: usize, way: usize) {
        self.stacks[set].retain(|&w| w != way);
    }
    /// Least recently used among `candidates` (all previously accessed).
    fn victim(&self, set: usize, candidates: &[usize]) -> usize {
        *self.stacks[set]
            .iter()
            .rev()
            .find(|w| candidates.contains(w))
            .unwrap()
    }
    fn most_recent(&self, set: usize, candidates: &[usize]) -> Option<usize> {
        self.stacks[set]
            .iter()
            .copied()
            .find(|w| candidates.contains(w))
    }
}

proptest! {
    /// The registered `lru` policy agrees with the reference model on
    /// victim choice and MRU shielding after any op sequence.
    #[test]
    fn lru_matches_reference(
        ops in lru_ops(4, 4),
        candidates in proptest::collection::btree_set(0usize..4, 1..=4),
    ) {
        let mut policy = make_policy("lru", 4).unwrap();
        let mut reference = RefLru::new(4);
        // Candidates handed to a policy are always valid lines, which were
        // filled (= accessed) at some point; establish that precondition.
        for set in 0..4 {
            for way in (0..4).rev() {
                policy.on_access(set, way);
                reference.access(set, way);
            }
        }
        for op in &ops {
            match *op {
                LruOp::Access { set, way } => {
                    policy.on_access(set, way);
                    reference.access(set, way);
                }
                LruOp::Invalidate { set, way } => {
                    policy.on_invalidate(set, way);
                    reference.invalidate(set, way);
                }
            }
        }
        // Invalidated ways are free; they get refilled (re-accessed)
        // before they can appear among victim candidates again.
        for set in 0..4 {
            for way in 0..4 {
                if !reference.stacks[set].contains(&way) {
                    policy.on_access(set, way);
                    reference.access(set, way);
                }
            }
        }
        let candidates: Vec<usize> = candidates.into_iter().collect();
        for set in 0..4 {
            prop_assert_eq!(
                policy.select_victim(set, &candidates),
                reference.victim(set, &candidates)
            );
            prop_assert_eq!(
                policy.most_recent(set, &candidates),
                reference.most_recent(set, &candidates)
            );
        }
    }

    /// Emitting and re-parsing a generated trace is the identity.
    #[test]
    fn trace_roundtrip(seed in any::<u64>(), count in 0usize..300) {
        let trace = generate_trace(seed, 0, 4096, count, 0.5, 64).unwrap();
        let parsed = parse_trace(&emit_trace(&trace)).unwrap();
        prop_assert_eq!(parsed, trace);
    }

    /// The best-effort bound is monotone non-decreasing in every
    /// parameter (more ways, capacity, cores or sharers never shrink the
    /// worst case).
    #[test]
    fn bound_is_monotone(
        big_n in 2u64..8,
        n in 2u64..8,
        w in 1u64..32,
        big_m in 1u64..128,
        m_cua in 0u64..128,
        sw in 1u64..100,
        bump in 0usize..6,
    ) {
        let n = n.min(big_n);
        let base = BoundInputs { big_n, n, w, big_m, m_cua, slot_width: sw };
        let mut up = base.clone();
        match bump {
            0 => up.big_n += 1,
            1 => { up.big_n += 1; up.n += 1 }
            2 => up.w += 1,
            3 => up.big_m += 1,
            4 => up.m_cua += 1,
            _ => up.slot_width += 1,
        }
        prop_assert!(wcl_1stdm(&up) >= wcl_1stdm(&base));
    }

    /// Any schedule-respecting run on a randomized small system completes
    /// with no structural violations (inclusion, isolation, bounds,
    /// distance monitors), with the checker at every slot.
    #[test]
    fn world_invariants_hold(
        mode_ix in 0usize..3,
        cores in 2usize..=4,
        sets_per_core in 1usize..=2,
        seed in any::<u64>(),
        count in 1usize..=80,
        lines in 4u64..=64,
        write_pm in 0u32..=1000,
    ) {
        let mode = [SharingMode::Private, SharingMode::BestEffort, SharingMode::Sequenced][mode_ix];
        let cfg = Arc::new(presets::fixed_capacity(mode, cores, sets_per_core));
        let traces: Vec<TraceSource> = (0..cores)
            .map(|core| {
                let t = generate_trace(
                    seed.wrapping_add(core as u64),
                    (core as u64) << 20,
                    lines * 64,
                    count,
                    f64::from(write_pm) / 1000.0,
                    64,
                )
                .unwrap();
                TraceSource::Fixed(Arc::new(t))
            })
            .collect();
        let opts = WorldOptions {
            log_events: false,
            check_interval: 1,
            ..WorldOptions::default()
        };
        let mut world = World::new(cfg, traces, opts).unwrap();
        let report = world.run(500_000).unwrap();
        prop_assert!(report.all_complete);
        prop_assert!(report.violations.is_empty(), "{:?}", report.violations);
    }
}

// Deterministic replay: the same configuration and traces produce
// byte-identical reports and event logs.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let cfg = Arc::new(presets::fixed_capacity(SharingMode::Sequenced, 2, 1));
        let mk = || -> Vec<Vec<TraceAccess>> {
            (0..2)
                .map(|c| generate_trace(seed ^ c, c << 16, 2048, 300, 0.5, 64).unwrap())
                .collect()
        };
        let run = |traces: Vec<Vec<TraceAccess>>| {
            let mut w = World::from_fixed(Arc::clone(&cfg), traces, WorldOptions::default()).unwrap();
            let r = w.run(1_000_000).unwrap();
            (r.to_csv(), w.log.render())
        };
        prop_assert_eq!(run(mk()), run(mk()));
    }
}
