//! Brute-force adversarial search: exhaustively explores every interferer
//! decision (which conflicting line to request each slot, which victim the
//! replacement picks) on micro-configurations small enough to enumerate,
//! and reports the worst latency of the observed core's single request.

use std::collections::HashSet;
use std::sync::Arc;

use crate::analysis::{self, BoundInputs};
use crate::cache::AccessOp;
use crate::choice::Chooser;
use crate::config::{
    load_config_str, CoreId, SharingMode, SystemConfig,
};
use crate::engine::{TraceAccess, TraceSource, World, WorldOptions};

/// One searchable cell: core 0 is observed, all other cores are
/// search-controlled interferers. One LLC set per partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroConfig {
    pub mode: SharingMode,
    pub num_cores: usize,
    pub ways: usize,
    /// Private capacity of the observed core in lines (0 = uncached).
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub max_latency_slots: u64,
    /// False when some branch was still incomplete at the horizon, so the
    /// bound is only checked up to the horizon.
    pub certified: bool,
    pub branches: u64,
    /// Decision script reaching the worst observed latency.
    pub witness: Vec<usize>,
    /// Index into `roots()` of the world the witness starts from.
    pub witness_root: usize,
}

impl MicroConfig {
    /// Every cell in the desk-scale grid.
    pub fn grid() -> Vec<MicroConfig> {
        let mut cells = Vec::new();
        for mode in [
            SharingMode::Private,
            SharingMode::BestEffort,
            SharingMode::Sequenced,
        ] {
            for num_cores in [2usize, 3] {
                for ways in [1usize, 2] {
                    for m in [0usize, 1, 2] {
                        cells.push(MicroConfig {
                            mode,
                            num_cores,
                            ways,
                            m,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn system(&self) -> SystemConfig {
        let n = self.num_cores;
        let schedule: Vec<String> = (0..n).map(|c| c.to_string()).collect();
        let l2_ways = self.m.max(1);
        let way_mask = (1u64 << self.ways) - 1;
        // Every pending write-back is for a distinct line still carrying
        // the core's sharer bit in its single-set partition, so the PWB
        // never needs more than `ways` entries.
        let mut text = format!(
            "cores = {n}\nslot_width = 1\nline_size = 64\nschedule = [{}]\n\
             pwb_capacity = {}\n\
             l1i = {{ sets = 1, ways = 1 }}\nl1d = {{ sets = 1, ways = 1 }}\n\
             l2 = {{ sets = 1, ways = {l2_ways} }}\nllc = {{ sets = {n}, ways = {} }}\n",
            schedule.join(", "),
            self.ways.max(1),
            self.ways
        );
        match self.mode {
            SharingMode::Private => {
                for c in 0..n {
                    text.push_str(&format!(
                        "\n[[partitions]]\nsets = \"{c}..{}\"\nways = {way_mask}\nsharers = [{c}]\nmode = \"private\"\n",
                        c + 1
                    ));
                }
            }
            mode => {
                let sharers: Vec<String> = (0..n).map(|c| c.to_string()).collect();
                text.push_str(&format!(
                    "\n[[partitions]]\nsets = \"0..1\"\nways = {way_mask}\nsharers = [{}]\nmode = \"{mode}\"\n",
                    sharers.join(", ")
                ));
            }
        }
        load_config_str(&text).expect("micro config is valid")
    }

    /// Closed-form bound for the observed core, in slots.
    pub fn bound_slots(&self) -> u64 {
        let n_sharers = match self.mode {
            SharingMode::Private => 1,
            _ => self.num_cores as u64,
        };
        let inputs = BoundInputs {
            big_n: self.num_cores as u64,
            n: n_sharers,
            w: self.ways as u64,
            big_m: self.ways as u64,
            m_cua: self.m as u64,
            slot_width: 1,
        };
        analysis::wcl_for_mode(self.mode, &inputs)
    }

    fn pool_for(&self, core: CoreId) -> Vec<u64> {
        (0..self.ways as u64).map(|i| core as u64 * 16 + i + 1).collect()
    }
}

/// Re-run the recorded worst branch from its root and return the observed
/// core's latency in slots; panics if the script diverges.
pub fn replay_witness(micro: &MicroConfig, out: &OracleOutcome, horizon: u64) -> u64 {
    let mut world = roots(micro).remove(out.witness_root);
    world.chooser = Chooser::new(out.witness.clone());
    while !world.agents[0].done && world.slot < horizon {
        world.step_slot().expect("protocol error during replay");
    }
    assert!(world.agents[0].done, "witness did not complete within horizon");
    world.agents[0].stats.max_latency_cycles
}

/// All permutations of `0..n` (the schedule roots to search from).
fn permutations(n: usize) -> Vec<Vec<CoreId>> {
    let mut out = Vec::new();
    let mut cur: Vec<CoreId> = (0..n).collect();
    fn heap(k: usize, cur: &mut Vec<CoreId>, out: &mut Vec<Vec<CoreId>>) {
        if k <= 1 {
            out.push(cur.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, cur, out);
            if k.is_multiple_of(2) {
                cur.swap(i, k - 1);
            } else {
                cur.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut cur, &mut out);
    out
}

/// Build the search roots: every schedule permutation crossed with every
/// initial occupancy of the observed core's conflict set (each way free or
/// preloaded with a dirty line privately held by one of the sharers).
fn roots(micro: &MicroConfig) -> Vec<World> {
    let base = micro.system();
    let opts = WorldOptions {
        log_events: false,
        monitors: false,
        bound_monitors: false,
        check_interval: 0,
        adversarial_victims: true,
        uncached: if micro.m == 0 { vec![0] } else { vec![] },
        record_distances: false,
    };
    // Holder options per way: none, or any sharer of core 0's partition
    // (core 0 itself only when it has private capacity).
    let part = base.partition_of(0).clone();
    let holders: Vec<CoreId> = part
        .sharers
        .iter()
        .copied()
        .filter(|&c| c != 0 || micro.m > 0)
        .collect();
    let options = holders.len() + 1;
    let ways = part.num_ways();
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..ways {
        assignments = assignments
            .into_iter()
            .flat_map(|a| {
                (0..options).map(move |i| {
                    let mut b = a.clone();
                    b.push(i);
                    b
                })
            })
            .collect();
    }
    // Drop assignments preloading more lines into a holder than its
    // private hierarchy can retain.
    let capacity = |c: CoreId| if c == 0 { micro.m } else { micro.m.max(1) };
    assignments.retain(|idx| {
        holders.iter().all(|&h| {
            idx.iter().filter(|&&i| i > 0 && holders[i - 1] == h).count() <= capacity(h)
        })
    });

    let mut worlds = Vec::new();
    for order in permutations(micro.num_cores) {
        let mut cfg = base.clone();
        cfg.schedule = crate::config::TdmSchedule::new(order);
        let cfg = Arc::new(cfg);
        for idx in &assignments {
            let traces: Vec<TraceSource> = (0..micro.num_cores)
                .map(|c| {
                    if c == 0 {
                        TraceSource::Fixed(Arc::new(vec![TraceAccess {
                            op: AccessOp::Read,
                            addr: 999 * 64,
                        }]))
                    } else {
                        TraceSource::Adversarial {
                            pool: micro.pool_for(c),
                        }
                    }
                })
                .collect();
            let mut world = World::new(cfg.clone(), traces, opts.clone()).unwrap();
            let pidx = world.llc.partition_index_of(0).unwrap();
            for (way, &i) in idx.iter().enumerate() {
                if i > 0 {
                    let holder = holders[i - 1];
                    let line = if holder == 0 {
                        way as u64 + 1
                    } else {
                        micro.pool_for(holder)[way]
                    };
                    world.preload(pidx, line, &[holder], true);
                }
            }
            worlds.push(world);
        }
    }
    worlds
}

pub fn brute_force_wcl(micro: &MicroConfig, horizon: u64) -> OracleOutcome {
    let mut best = OracleOutcome {
        max_latency_slots: 0,
        certified: true,
        branches: 0,
        witness: Vec::new(),
        witness_root: 0,
    };
    let mut memo: HashSet<(Vec<u64>, u64)> = HashSet::new();
    let mut stack: Vec<(World, usize, Vec<usize>)> = roots(micro)
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, i, Vec::new()))
        .collect();
    while let Some((world, root, witness)) = stack.pop() {
        if world.agents[0].done {
            best.branches += 1;
            let latency = world.agents[0].stats.max_latency_cycles;
            if latency > best.max_latency_slots {
                best.max_latency_slots = latency;
                best.witness = witness;
                best.witness_root = root;
            }
            continue;
        }
        if world.slot >= horizon {
            best.branches += 1;
            best.certified = false;
            continue;
        }
        if !memo.insert((world.encode_state(), world.slot)) {
            continue;
        }
        // Enumerate every decision combination within the next slot.
        let mut pending: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(script) = pending.pop() {
            let mut next = world.clone();
            next.chooser = Chooser::new(script.clone());
            next.step_slot().expect("protocol error during search");
            match next.chooser.demand {
                Some(k) => {
                    for choice in 0..k {
                        let mut s = script.clone();
                        s.push(choice);
                        pending.push(s);
                    }
                }
                None => {
                    let mut w = witness.clone();
                    w.extend(&script);
                    stack.push((next, root, w));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_complete() {
        assert_eq!(permutations(1).len(), 1);
        assert_eq!(permutations(2).len(), 2);
        let mut p3 = permutations(3);
        p3.sort();
        p3.dedup();
        assert_eq!(p3.len(), 6);
    }

    #[test]
    fn two_core_nss_no_private_state() {
        // Observed core caches nothing: no write-backs of its own, bound
        // collapses to 5 slots.
        let micro = MicroConfig {
            mode: SharingMode::BestEffort,
            num_cores: 2,
            ways: 1,
            m: 0,
        };
        assert_eq!(micro.bound_slots(), 5);
        let out = brute_force_wcl(&micro, 40);
        assert!(out.certified);
        assert!(out.max_latency_slots <= 5, "observed {}", out.max_latency_slots);
        assert!(out.max_latency_slots >= 2, "search found no contention");
    }

    #[test]
    fn two_core_sequenced() {
        let micro = MicroConfig {
            mode: SharingMode::Sequenced,
            num_cores: 2,
            ways: 1,
            m: 0,
        };
        assert_eq!(micro.bound_slots(), 10);
        let out = brute_force_wcl(&micro, 40);
        assert!(out.certified);
        assert!(out.max_latency_slots <= 10, "observed {}", out.max_latency_slots);
    }

    #[test]
    fn private_partition_ignores_interferers() {
        let micro = MicroConfig {
            mode: SharingMode::Private,
            num_cores: 2,
            ways: 1,
            m: 1,
        };
        assert_eq!(micro.bound_slots(), 5);
        let out = brute_force_wcl(&micro, 40);
        assert!(out.certified);
        assert!(out.max_latency_slots <= 5, "observed {}", out.max_latency_slots);
    }

    #[test]
    fn witness_replays_to_the_same_latency() {
        let micro = MicroConfig {
            mode: SharingMode::BestEffort,
            num_cores: 2,
            ways: 2,
            m: 1,
        };
        let out = brute_force_wcl(&micro, 40);
        assert!(
            out.max_latency_slots <= micro.bound_slots(),
            "observed {} > bound {} (certified={}, witness={:?})",
            out.max_latency_slots,
            micro.bound_slots(),
            out.certified,
            out.witness
        );
        assert!(!out.witness.is_empty() || out.max_latency_slots <= 2);
        let replayed = replay_witness(&micro, &out, 40);
        assert_eq!(replayed, out.max_latency_slots);
    }
}
