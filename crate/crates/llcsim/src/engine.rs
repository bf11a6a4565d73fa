//! Slot-granular closed-loop simulation: per-core trace agents drive their
//! private hierarchies, the TDM bus, and the shared LLC one slot at a time.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::analysis;
use crate::bus::{ArbClass, PendingBuffers, PendingRequest, PendingWriteBack, PwbOverflow};
use crate::cache::{line_of, AccessOp, InvalidateResult, LineAddr, PrivateHierarchy};
use crate::choice::Chooser;
use crate::config::{validate_one_slot, CoreId, SharingMode, SystemConfig};
use crate::llc::{EvictionInit, LlcState, ProtocolError, RequestOutcome, SettleAction};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("slot {slot}: write-back buffer overflow: {source}")]
    Pwb { slot: u64, source: PwbOverflow },
    #[error("slot {slot}: {source}")]
    Protocol { slot: u64, source: ProtocolError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Hit,
    Fill,
    Evict,
    BackInv,
    Wb,
    Queue,
    Grant,
    Block,
    Idle,
    L2Evict,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Hit => "HIT",
            EventKind::Fill => "FILL",
            EventKind::Evict => "EVICT",
            EventKind::BackInv => "BACKINV",
            EventKind::Wb => "WB",
            EventKind::Queue => "QUEUE",
            EventKind::Grant => "GRANT",
            EventKind::Block => "BLOCK",
            EventKind::Idle => "IDLE",
            EventKind::L2Evict => "L2EVICT",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub slot: u64,
    pub core: CoreId,
    pub kind: EventKind,
    /// Byte address of the line involved (0 for IDLE).
    pub addr: u64,
    pub set: u32,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slot={} core={} ev={} addr={:#x} set={}",
            self.slot, self.core, self.kind, self.addr, self.set
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
    pub enabled: bool,
}

impl EventLog {
    fn push(&mut self, rec: EventRecord) {
        if self.enabled {
            self.records.push(rec);
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceAccess {
    pub op: AccessOp,
    pub addr: u64,
}

#[derive(Debug, Clone)]
pub enum TraceSource {
    Fixed(Arc<Vec<TraceAccess>>),
    /// A search-controlled interferer: at each of its slots it picks (via
    /// the chooser) one of its pool lines it does not privately hold, or
    /// stays idle.
    Adversarial { pool: Vec<LineAddr> },
}

#[derive(Debug, Clone, Default)]
pub struct CoreStats {
    pub requests: u64,
    pub sum_latency_cycles: u64,
    pub max_latency_cycles: u64,
    pub max_latency_slot: u64,
    pub max_latency_addr: u64,
    pub last_completion_slot: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct CoreAgent {
    pub core: CoreId,
    pub hierarchy: PrivateHierarchy,
    trace: TraceSource,
    cursor: usize,
    pub bufs: PendingBuffers,
    pub done: bool,
    queued_since: Option<u64>,
    pub stats: CoreStats,
}

/// Distance of a way's occupant from the observing core, sampled at the
/// observer's slot starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistSample {
    Free,
    Dist(usize),
}

/// Per-request observation state for the lemma/corollary monitors,
/// attached to a core while its request is outstanding.
#[derive(Debug, Clone)]
struct CuaMonitor {
    part: usize,
    set_local: usize,
    /// Last non-free distance seen per way (carried across free gaps).
    last_dist: Vec<Option<usize>>,
    /// Cleared once the core performs a write-back: the premise of the
    /// distance lemma no longer holds for this request.
    lemma_active: bool,
    /// (way, victim line, starting distance, deadline slot): the victim's
    /// distance must have strictly decreased (or the way moved on) by the
    /// deadline.
    cor2: Vec<(usize, LineAddr, usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct WorldOptions {
    pub log_events: bool,
    /// Lemma/corollary distance monitors (1S-TDM only).
    pub monitors: bool,
    /// Check completed latencies against the closed-form bounds.
    pub bound_monitors: bool,
    /// Inclusion/isolation sweep every this many slots (0 = only at end).
    pub check_interval: u64,
    /// Route LLC victim selection through the chooser.
    pub adversarial_victims: bool,
    /// Cores simulated without private caches.
    pub uncached: Vec<CoreId>,
    /// Keep per-slot distance samples (memory-heavy; scenarios only).
    pub record_distances: bool,
}

impl Default for WorldOptions {
    fn default() -> Self {
        Self {
            log_events: true,
            monitors: true,
            bound_monitors: true,
            check_interval: 64,
            adversarial_victims: false,
            uncached: Vec::new(),
            record_distances: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoreReport {
    pub core: CoreId,
    pub completed: bool,
    pub requests: u64,
    pub avg_latency_cycles: f64,
    pub max_latency_cycles: u64,
    pub max_latency_slot: u64,
    pub max_latency_addr: u64,
    pub exec_time_cycles: u64,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub cores: Vec<CoreReport>,
    pub total_slots: u64,
    pub all_complete: bool,
    pub violations: Vec<String>,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("core,requests,avg_latency_cycles,max_latency_cycles,exec_time_cycles\n");
        for c in &self.cores {
            s.push_str(&format!(
                "{},{},{:.2},{},{}\n",
                c.core, c.requests, c.avg_latency_cycles, c.max_latency_cycles, c.exec_time_cycles
            ));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub cfg: Arc<SystemConfig>,
    pub slot: u64,
    pub llc: LlcState,
    pub agents: Vec<CoreAgent>,
    pub log: EventLog,
    pub chooser: Chooser,
    pub violations: Vec<String>,
    opts: WorldOptions,
    monitors: Vec<Option<CuaMonitor>>,
    /// Per-core latency bound in cycles, when checkable.
    bounds: Vec<Option<u64>>,
    /// Schedule position per core when the schedule is 1S-TDM.
    positions: Option<Vec<usize>>,
    /// Per-core recorded distance series (slot, per-way sample).
    series: Vec<Vec<(u64, Vec<DistSample>)>>,
}

impl World {
    pub fn new(
        cfg: Arc<SystemConfig>,
        traces: Vec<TraceSource>,
        opts: WorldOptions,
    ) -> Result<Self, crate::config::ConfigError> {
        cfg.validate()?;
        assert_eq!(traces.len(), cfg.num_cores, "one trace per core");
        let one_slot = validate_one_slot(&cfg.schedule, cfg.num_cores)?;
        let positions = one_slot.then(|| {
            let mut pos = vec![0usize; cfg.num_cores];
            for (i, &c) in cfg.schedule.slot_order().iter().enumerate() {
                pos[c] = i;
            }
            pos
        });
        let agents: Vec<CoreAgent> = traces
            .into_iter()
            .enumerate()
            .map(|(core, trace)| CoreAgent {
                core,
                hierarchy: if opts.uncached.contains(&core) {
                    PrivateHierarchy::uncached(core)
                } else {
                    PrivateHierarchy::new(core, cfg.l1i_geom, cfg.l1d_geom, cfg.l2_geom)
                },
                trace,
                cursor: 0,
                bufs: PendingBuffers::new(cfg.pwb_capacity),
                done: false,
                queued_since: None,
                stats: CoreStats::default(),
            })
            .collect();
        let bounds = (0..cfg.num_cores)
            .map(|c| {
                (one_slot && opts.bound_monitors).then(|| {
                    let (mode, inputs) = analysis::bound_inputs_for_core(&cfg, c);
                    analysis::wcl_for_mode(mode, &inputs)
                })
            })
            .collect();
        let log = EventLog {
            records: Vec::new(),
            enabled: opts.log_events,
        };
        let mut world = World {
            slot: 0,
            llc: LlcState::new(&cfg),
            monitors: vec![None; cfg.num_cores],
            series: vec![Vec::new(); cfg.num_cores],
            bounds,
            positions,
            agents,
            log,
            chooser: Chooser::default(),
            violations: Vec::new(),
            opts,
            cfg,
        };
        for core in 0..world.cfg.num_cores {
            world.advance_trace(core, 0);
        }
        Ok(world)
    }

    pub fn from_fixed(
        cfg: Arc<SystemConfig>,
        traces: Vec<Vec<TraceAccess>>,
        opts: WorldOptions,
    ) -> Result<Self, crate::config::ConfigError> {
        let sources = traces
            .into_iter()
            .map(|t| TraceSource::Fixed(Arc::new(t)))
            .collect();
        World::new(cfg, sources, opts)
    }

    pub fn distance_series(&self, core: CoreId) -> &[(u64, Vec<DistSample>)] {
        &self.series[core]
    }

    /// Place a line directly into the LLC (and the sharers' private
    /// hierarchies) before the run starts. LRU age follows call order.
    pub fn preload(&mut self, part: usize, line: LineAddr, sharers: &[CoreId], dirty: bool) {
        let spec = &self.llc.partitions[part].spec;
        let set_local = spec.set_of_line(line) - spec.set_start;
        let way = self.llc.partitions[part].sets[set_local]
            .ways
            .iter()
            .position(|w| w.is_free())
            .expect("preload into a full set");
        let w = &mut self.llc.partitions[part].sets[set_local].ways[way];
        w.line = Some(line);
        w.dirty = dirty;
        w.sharers = sharers.iter().fold(0, |m, c| m | 1 << c);
        self.llc.partitions[part].policy.on_access(set_local, way);
        let op = if dirty { AccessOp::Write } else { AccessOp::Read };
        for &c in sharers {
            let evicted = self.agents[c].hierarchy.install(op, line);
            debug_assert!(evicted.is_none(), "preload overflowed a private cache");
        }
    }

    fn caches(&self, core: CoreId) -> bool {
        self.agents[core].hierarchy.capacity_lines() > 0
    }

    /// Pull the next accesses off the core's trace; private hits complete
    /// instantly, the first private miss lands in the PRB at `entry_slot`.
    fn advance_trace(&mut self, core: CoreId, entry_slot: u64) {
        let line_size = self.cfg.line_size;
        loop {
            let acc = match &self.agents[core].trace {
                TraceSource::Fixed(t) => match t.get(self.agents[core].cursor) {
                    Some(a) => *a,
                    None => {
                        self.agents[core].done = true;
                        return;
                    }
                },
                TraceSource::Adversarial { .. } => return,
            };
            self.agents[core].cursor += 1;
            let line = line_of(acc.addr, line_size);
            if self.agents[core].hierarchy.access(acc.op, line) {
                continue;
            }
            self.agents[core].bufs.prb = Some(PendingRequest {
                op: acc.op,
                line,
                entry_slot,
            });
            self.install_monitor(core, line);
            return;
        }
    }

    fn install_monitor(&mut self, core: CoreId, line: LineAddr) {
        if !self.opts.monitors || self.positions.is_none() {
            return;
        }
        let part = self.llc.partition_index_of(core).unwrap();
        let spec = &self.llc.partitions[part].spec;
        if spec.mode == SharingMode::Sequenced {
            return;
        }
        let set_local = spec.set_of_line(line) - spec.set_start;
        let ways = spec.num_ways();
        self.monitors[core] = Some(CuaMonitor {
            part,
            set_local,
            last_dist: vec![None; ways],
            lemma_active: true,
            cor2: Vec::new(),
        });
    }

    /// Sample the observed set at the observer's slot start and check the
    /// distance lemma and the victim-decrease corollary.
    fn sample_monitor(&mut self, core: CoreId, slot: u64) {
        let Some(mut mon) = self.monitors[core].take() else {
            return;
        };
        let mut found: Vec<String> = Vec::new();
        let pos = self.positions.as_ref().expect("1S-TDM schedule");
        let n = pos.len();
        let num_cores = self.cfg.num_cores;
        let dist_to = |w: &crate::llc::LlcWay| {
            (0..num_cores)
                .filter(|c| w.sharers >> c & 1 == 1)
                .map(|c| (pos[core] + n - pos[c] - 1) % n + 1)
                .max()
                .unwrap()
        };
        let set = &self.llc.partitions[mon.part].sets[mon.set_local];
        let mut samples = Vec::with_capacity(set.ways.len());
        for (way, w) in set.ways.iter().enumerate() {
            let cur = if w.line.is_none() || w.sharers == 0 {
                DistSample::Free
            } else {
                DistSample::Dist(dist_to(w))
            };
            samples.push(cur);
            if let DistSample::Dist(d) = cur {
                if mon.lemma_active {
                    if let Some(prev) = mon.last_dist[way] {
                        if d > prev {
                            found.push(format!(
                                "lemma1: slot {slot} core {core} way {way} distance rose {prev} -> {d}"
                            ));
                        }
                    }
                }
                mon.last_dist[way] = Some(d);
            }
        }
        mon.cor2.retain(|&(way, victim, d0, deadline)| {
            if slot < deadline {
                return true;
            }
            let w = &set.ways[way];
            if w.line == Some(victim) && w.sharers != 0 {
                let d = dist_to(w);
                if d >= d0 {
                    found.push(format!(
                        "cor2: slot {slot} core {core} victim {victim:#x} distance {d} not below {d0}"
                    ));
                }
            }
            false
        });
        self.violations.append(&mut found);
        if self.opts.record_distances {
            self.series[core].push((slot, samples));
        }
        self.monitors[core] = Some(mon);
    }

    /// Dispatch the back-invalidations of a freshly initiated eviction and
    /// free the way outright when no bus write-back is owed (no sharers,
    /// or the requester itself was the sole sharer).
    fn process_eviction(&mut self, init: &EvictionInit, slot: u64) -> Result<(), SimError> {
        let victim_addr = init.victim * self.cfg.line_size;
        for s in 0..self.cfg.num_cores {
            if init.sharers >> s & 1 == 0 {
                continue;
            }
            let res = self.agents[s].hierarchy.back_invalidate(init.victim);
            let dirty = res == InvalidateResult::WasDirty;
            self.log.push(EventRecord {
                slot,
                core: s,
                kind: EventKind::BackInv,
                addr: victim_addr,
                set: init.set as u32,
            });
            if s == init.requester {
                // The requester's own copy needs no bus slot: it is flushed
                // within the evicting slot.
                self.agents[s].bufs.cancel_writeback(init.victim);
                self.llc.clear_sharer(s, init.victim, dirty);
            } else if !self.agents[s].bufs.pwb_contains(init.victim) {
                // A voluntary eviction may already have queued this
                // write-back; the pending one covers the back-invalidation.
                self.agents[s]
                    .bufs
                    .enqueue_writeback(s, slot, PendingWriteBack { line: init.victim, dirty })
                    .map_err(|source| SimError::Pwb { slot, source })?;
            }
        }
        let w = &self.llc.partitions[init.part].sets[init.set_local].ways[init.way];
        if w.sharers == 0 {
            self.llc.free_way(init.part, init.set_local, init.way);
        } else if self.opts.monitors && self.positions.is_some() {
            // Arm the victim-decrease deadline for the requester's monitor.
            // The victim's distance is the farthest remaining sharer's; it
            // drops below its starting value once that sharer drains the
            // victim's write-back, which takes at most two periods per
            // pending entry ahead of it (request/write-back alternation).
            let remaining = w.sharers;
            let period = self.cfg.schedule.period_slots() as u64;
            let pos = self.positions.as_ref().unwrap();
            let n = pos.len();
            let (d_start, farthest) = (0..self.cfg.num_cores)
                .filter(|c| remaining >> c & 1 == 1)
                .map(|c| ((pos[init.requester] + n - pos[c] - 1) % n + 1, c))
                .max()
                .unwrap();
            let depth = self.agents[farthest]
                .bufs
                .pwb_position(init.victim)
                .map_or(1, |i| i + 1) as u64;
            if let Some(mon) = self.monitors[init.requester].as_mut() {
                if mon.lemma_active {
                    let deadline = slot + 2 * depth * period;
                    mon.cor2.push((init.way, init.victim, d_start, deadline));
                }
            }
        }
        Ok(())
    }

    fn complete_request(&mut self, core: CoreId, slot: u64) -> Result<(), SimError> {
        let req = self.agents[core].bufs.prb.take().expect("outstanding request");
        // Re-requesting a line whose voluntary write-back is still queued
        // squashes the write-back; its dirtiness folds into the LLC copy.
        if let Some(wb) = self.agents[core].bufs.cancel_writeback(req.line) {
            if wb.dirty {
                if let Some((p, s, w)) = self.llc.find(core, req.line) {
                    self.llc.partitions[p].sets[s].ways[w].dirty = true;
                }
            }
        }
        let latency_slots = slot + 1 - req.entry_slot;
        let cycles = latency_slots * self.cfg.slot_width;
        let st = &mut self.agents[core].stats;
        st.requests += 1;
        st.sum_latency_cycles += cycles;
        if cycles > st.max_latency_cycles {
            st.max_latency_cycles = cycles;
            st.max_latency_slot = slot;
            st.max_latency_addr = req.line * self.cfg.line_size;
        }
        st.last_completion_slot = Some(slot);
        if let Some(bound) = self.bounds[core] {
            if cycles > bound {
                self.violations.push(format!(
                    "bound: slot {slot} core {core} addr {:#x} latency {cycles} > {bound}",
                    req.line * self.cfg.line_size
                ));
            }
        }
        if let Some(q0) = self.agents[core].queued_since.take() {
            let part = self.cfg.partition_of(core);
            let n = part.sharers.len() as u64;
            let period = self.cfg.schedule.period_slots() as u64;
            let pendency = (2 * (n - 1) * n + 1) * period;
            if slot + 1 - q0 > pendency {
                self.violations.push(format!(
                    "ss-pendency: core {core} queued at {q0} completed at {slot}, over {pendency} slots"
                ));
            }
        }
        self.monitors[core] = None;
        if let Some(evicted) = self.agents[core].hierarchy.install(req.op, req.line) {
            // Voluntary eviction from the private L2. In a shared partition
            // the displaced line is written back over the bus like any other
            // eviction, so the LLC keeps the sharer bit until the write-back
            // is served. A private partition has no other holders to race
            // with, so the LLC copy absorbs the line without a bus slot.
            let part = self.cfg.partition_of(core);
            if part.mode == SharingMode::Private {
                self.llc.clear_sharer(core, evicted.line, evicted.dirty);
            } else {
                self.agents[core]
                    .bufs
                    .enqueue_writeback(
                        core,
                        slot,
                        PendingWriteBack { line: evicted.line, dirty: evicted.dirty },
                    )
                    .map_err(|source| SimError::Pwb { slot, source })?;
            }
            self.log.push(EventRecord {
                slot,
                core,
                kind: EventKind::L2Evict,
                addr: evicted.line * self.cfg.line_size,
                set: part.set_of_line(evicted.line) as u32,
            });
        }
        self.advance_trace(core, slot + 1);
        Ok(())
    }

    pub fn step_slot(&mut self) -> Result<(), SimError> {
        let slot = self.slot;
        let owner = self.cfg.schedule.owner(slot);
        if self.positions.is_some()
            && self.opts.monitors
            && self.agents[owner].bufs.prb.is_some()
        {
            self.sample_monitor(owner, slot);
        }

        // An adversarial owner may inject a request for any pool line it
        // does not privately hold, or stay idle.
        if self.agents[owner].bufs.prb.is_none() {
            if let TraceSource::Adversarial { pool } = &self.agents[owner].trace {
                let candidates: Vec<LineAddr> = pool
                    .iter()
                    .copied()
                    .filter(|&l| {
                        !self.agents[owner].hierarchy.holds(l)
                            && !self.agents[owner].bufs.pwb_contains(l)
                    })
                    .collect();
                if !candidates.is_empty() {
                    let pick = self.chooser.choose(candidates.len() + 1);
                    if pick > 0 {
                        self.agents[owner].bufs.prb = Some(PendingRequest {
                            op: AccessOp::Read,
                            line: candidates[pick - 1],
                            entry_slot: slot,
                        });
                    }
                }
            }
        }

        let eligible = match &self.agents[owner].bufs.prb {
            Some(r) => self.llc.request_ready(owner, r.line),
            None => false,
        };
        match self.agents[owner].bufs.arbitrate_with(eligible) {
            None => self.log.push(EventRecord {
                slot,
                core: owner,
                kind: EventKind::Idle,
                addr: 0,
                set: 0,
            }),
            Some(ArbClass::WriteBack) => {
                let wb = self.agents[owner].bufs.pop_writeback().expect("arbitrated");
                let out = self
                    .llc
                    .handle_writeback(owner, wb.line, wb.dirty)
                    .map_err(|source| SimError::Protocol { slot, source })?;
                let set = match out {
                    crate::llc::WritebackOutcome::Freed { set, .. } => set,
                    crate::llc::WritebackOutcome::Merged { set } => set,
                };
                self.log.push(EventRecord {
                    slot,
                    core: owner,
                    kind: EventKind::Wb,
                    addr: wb.line * self.cfg.line_size,
                    set: set as u32,
                });
                // A write-back by the observer breaks the premise of the
                // distance lemma for its outstanding request.
                if let Some(mon) = self.monitors[owner].as_mut() {
                    mon.lemma_active = false;
                    mon.cor2.clear();
                }
            }
            Some(ArbClass::Request) => {
                let req = self.agents[owner].bufs.prb.expect("arbitrated");
                let op_is_write = req.op == AccessOp::Write;
                let caches = self.caches(owner);
                let adv = self.opts.adversarial_victims;
                let out = {
                    let Self { llc, chooser, .. } = self;
                    llc.handle_request(
                        owner,
                        req.line,
                        op_is_write,
                        caches,
                        adv.then_some(chooser),
                    )
                    .map_err(|source| SimError::Protocol { slot, source })?
                };
                let addr = req.line * self.cfg.line_size;
                match out {
                    RequestOutcome::HitRespond { set } => {
                        self.log.push(EventRecord {
                            slot,
                            core: owner,
                            kind: EventKind::Hit,
                            addr,
                            set: set as u32,
                        });
                        self.complete_request(owner, slot)?;
                    }
                    RequestOutcome::FillRespond { set, .. } => {
                        self.log.push(EventRecord {
                            slot,
                            core: owner,
                            kind: EventKind::Fill,
                            addr,
                            set: set as u32,
                        });
                        self.complete_request(owner, slot)?;
                    }
                    RequestOutcome::EvictInitiated(init) => {
                        self.log.push(EventRecord {
                            slot,
                            core: owner,
                            kind: EventKind::Evict,
                            addr: init.victim * self.cfg.line_size,
                            set: init.set as u32,
                        });
                        self.process_eviction(&init, slot)?;
                    }
                    RequestOutcome::Queued { set } => {
                        self.log.push(EventRecord {
                            slot,
                            core: owner,
                            kind: EventKind::Queue,
                            addr,
                            set: set as u32,
                        });
                        self.agents[owner].queued_since.get_or_insert(slot);
                    }
                    RequestOutcome::Blocked { set } => {
                        self.log.push(EventRecord {
                            slot,
                            core: owner,
                            kind: EventKind::Block,
                            addr,
                            set: set as u32,
                        });
                    }
                }
            }
        }

        // End of slot: settle sequenced partitions until quiescent.
        loop {
            let adv = self.opts.adversarial_victims;
            let actions = {
                let Self { llc, chooser, .. } = self;
                llc.settle_pass(adv.then_some(chooser))
            };
            if actions.is_empty() {
                break;
            }
            for act in actions {
                match act {
                    SettleAction::Granted { set, core, line } => self.log.push(EventRecord {
                        slot,
                        core,
                        kind: EventKind::Grant,
                        addr: line * self.cfg.line_size,
                        set: set as u32,
                    }),
                    SettleAction::Evict(init) => {
                        self.log.push(EventRecord {
                            slot,
                            core: init.requester,
                            kind: EventKind::Evict,
                            addr: init.victim * self.cfg.line_size,
                            set: init.set as u32,
                        });
                        self.process_eviction(&init, slot)?;
                    }
                }
            }
        }

        self.slot += 1;
        if self.opts.check_interval > 0 && self.slot.is_multiple_of(self.opts.check_interval) {
            self.check_invariants();
        }
        Ok(())
    }

    /// Inclusion / isolation sweep at a slot boundary. Violations are
    /// recorded, and fatal under debug assertions.
    pub fn check_invariants(&mut self) {
        for agent in &self.agents {
            if !agent.hierarchy.check_local_inclusion() {
                self.violations
                    .push(format!("inclusion: core {} L1 not in L2", agent.core));
            }
            for line in agent.hierarchy.l2_lines() {
                match self.llc.find(agent.core, line) {
                    Some((p, s, w))
                        if self.llc.partitions[p].sets[s].ways[w].sharers >> agent.core & 1
                            == 1 => {}
                    _ => self.violations.push(format!(
                        "inclusion: core {} line {line:#x} missing from LLC sharers",
                        agent.core
                    )),
                }
            }
        }
        for p in &self.llc.partitions {
            let allowed = p.spec.sharers.iter().fold(0u64, |m, c| m | 1 << c);
            for s in &p.sets {
                for w in &s.ways {
                    if w.sharers & !allowed != 0 {
                        self.violations.push(format!(
                            "isolation: partition {} holds sharers outside its set",
                            p.spec.id
                        ));
                    }
                }
            }
        }
        debug_assert!(
            self.violations.is_empty(),
            "invariant violations: {:?}",
            self.violations
        );
    }

    fn fixed_agents_done(&self) -> bool {
        self.agents.iter().all(|a| match a.trace {
            TraceSource::Fixed(_) => a.done,
            TraceSource::Adversarial { .. } => true,
        })
    }

    pub fn run(&mut self, max_slots: u64) -> Result<SimReport, SimError> {
        while self.slot < max_slots && !self.fixed_agents_done() {
            self.step_slot()?;
        }
        self.check_invariants();
        Ok(self.report())
    }

    pub fn report(&self) -> SimReport {
        let cores = self
            .agents
            .iter()
            .map(|a| CoreReport {
                core: a.core,
                completed: a.done,
                requests: a.stats.requests,
                avg_latency_cycles: if a.stats.requests == 0 {
                    0.0
                } else {
                    a.stats.sum_latency_cycles as f64 / a.stats.requests as f64
                },
                max_latency_cycles: a.stats.max_latency_cycles,
                max_latency_slot: a.stats.max_latency_slot,
                max_latency_addr: a.stats.max_latency_addr,
                exec_time_cycles: a
                    .stats
                    .last_completion_slot
                    .map_or(0, |s| (s + 1) * self.cfg.slot_width),
            })
            .collect();
        SimReport {
            cores,
            total_slots: self.slot,
            all_complete: self.fixed_agents_done(),
            violations: self.violations.clone(),
        }
    }

    /// Canonical state encoding for search memoization. Excludes the
    /// absolute slot number and latency bookkeeping.
    pub fn encode_state(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(64);
        self.llc.encode_state(&mut out);
        for a in &self.agents {
            a.bufs.encode_state(&mut out);
            a.hierarchy.encode_state(&mut out);
            out.push(a.cursor as u64 | (a.done as u64) << 63);
        }
        out
    }
}
