//! Shared LLC controller: partitioned, inclusive, with pending-eviction
//! tracking and (for sequenced partitions) a per-set request sequencer.

use thiserror::Error;

use crate::cache::LineAddr;
use crate::choice::Chooser;
use crate::config::{CoreId, PartitionSpec, SharingMode, SystemConfig};
use crate::replacement::{make_policy, PolicyBox};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("core {core} wrote back line {line:#x} it does not share")]
    WritebackNotShared { core: CoreId, line: LineAddr },
    #[error("core {core} enqueued while already queued")]
    DoubleEnqueue { core: CoreId },
    #[error("sequencer queue pool exhausted")]
    QueuePoolExhausted,
    #[error("sequencer operation on empty queue for set {set}")]
    EmptyQueue { set: usize },
    #[error("core {core} accessed a partition it does not share")]
    IsolationViolation { core: CoreId },
}

/// One LLC way. `sharers` is a bitmask over core ids; `pending_evict`
/// records the core whose miss triggered the eviction while the way waits
/// for the remaining sharer write-backs.
#[derive(Debug, Clone, Default)]
pub struct LlcWay {
    pub line: Option<LineAddr>,
    pub dirty: bool,
    pub sharers: u64,
    pub pending_evict: Option<CoreId>,
}

impl LlcWay {
    pub fn is_free(&self) -> bool {
        self.line.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct LlcSet {
    pub ways: Vec<LlcWay>,
    /// Sequenced mode: free ways in this set are held for this core.
    pub reserved_for: Option<CoreId>,
}

/// Queue lookup table plus a fixed pool of per-set FIFO queues. A queue is
/// bound to a set only while non-empty.
#[derive(Debug, Clone)]
pub struct SetSequencer {
    qlt: Vec<Option<usize>>,
    queues: Vec<std::collections::VecDeque<(CoreId, LineAddr)>>,
    free_queues: Vec<usize>,
}

impl SetSequencer {
    pub fn new(num_sets: usize, num_sharers: usize) -> Self {
        let pool = num_sets.min(num_sharers).max(1);
        Self {
            qlt: vec![None; num_sets],
            queues: vec![std::collections::VecDeque::new(); pool],
            free_queues: (0..pool).rev().collect(),
        }
    }

    pub fn contains(&self, core: CoreId) -> Option<usize> {
        for (set, qid) in self.qlt.iter().enumerate() {
            if let Some(q) = qid {
                if self.queues[*q].iter().any(|&(c, _)| c == core) {
                    return Some(set);
                }
            }
        }
        None
    }

    pub fn enqueue(
        &mut self,
        set: usize,
        core: CoreId,
        line: LineAddr,
    ) -> Result<(), ProtocolError> {
        if self.contains(core).is_some() {
            return Err(ProtocolError::DoubleEnqueue { core });
        }
        let qid = match self.qlt[set] {
            Some(q) => q,
            None => {
                let q = self
                    .free_queues
                    .pop()
                    .ok_or(ProtocolError::QueuePoolExhausted)?;
                self.qlt[set] = Some(q);
                q
            }
        };
        self.queues[qid].push_back((core, line));
        Ok(())
    }

    pub fn head(&self, set: usize) -> Option<(CoreId, LineAddr)> {
        self.qlt[set].and_then(|q| self.queues[q].front().copied())
    }

    pub fn dequeue(&mut self, set: usize) -> Result<(CoreId, LineAddr), ProtocolError> {
        let qid = self.qlt[set].ok_or(ProtocolError::EmptyQueue { set })?;
        let entry = self.queues[qid]
            .pop_front()
            .ok_or(ProtocolError::EmptyQueue { set })?;
        if self.queues[qid].is_empty() {
            self.qlt[set] = None;
            self.free_queues.push(qid);
        }
        Ok(entry)
    }

    /// Remove a core from the queue for `set` regardless of position.
    pub fn remove(&mut self, set: usize, core: CoreId) {
        if let Some(qid) = self.qlt[set] {
            self.queues[qid].retain(|&(c, _)| c != core);
            if self.queues[qid].is_empty() {
                self.qlt[set] = None;
                self.free_queues.push(qid);
            }
        }
    }

    pub fn queue_len(&self, set: usize) -> usize {
        self.qlt[set].map_or(0, |q| self.queues[q].len())
    }

    pub fn position(&self, set: usize, core: CoreId) -> Option<usize> {
        self.qlt[set]
            .and_then(|q| self.queues[q].iter().position(|&(c, _)| c == core))
    }

    fn encode_state(&self, out: &mut Vec<u64>) {
        for (set, qid) in self.qlt.iter().enumerate() {
            if let Some(q) = qid {
                out.push(set as u64 | 1 << 32);
                for &(c, l) in &self.queues[*q] {
                    out.push(c as u64);
                    out.push(l);
                }
                out.push(u64::MAX);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartitionState {
    pub spec: PartitionSpec,
    pub sets: Vec<LlcSet>,
    pub policy: PolicyBox,
    pub sequencer: Option<SetSequencer>,
}

impl PartitionState {
    /// Lowest-index free way usable by `core` given the reservation.
    fn free_way_for(&self, set: usize, core: CoreId) -> Option<usize> {
        let s = &self.sets[set];
        if let Some(r) = s.reserved_for {
            if r != core {
                return None;
            }
        }
        s.ways.iter().position(LlcWay::is_free)
    }

    /// Partition-local set index of a line.
    fn local_set_of(&self, line: LineAddr) -> usize {
        self.spec.set_of_line(line) - self.spec.set_start
    }

    fn has_free_way(&self, set: usize) -> bool {
        self.sets[set].ways.iter().any(LlcWay::is_free)
    }

    fn find_line(&self, set: usize, line: LineAddr) -> Option<usize> {
        self.sets[set]
            .ways
            .iter()
            .position(|w| w.line == Some(line))
    }

    fn has_pending_for(&self, set: usize, core: CoreId) -> bool {
        self.sets[set]
            .ways
            .iter()
            .any(|w| w.pending_evict == Some(core))
    }
}

/// Outcome of presenting a request transaction to the controller.
/// `set` is the global LLC set index (for event logging).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestOutcome {
    HitRespond { set: usize },
    FillRespond { set: usize, way: usize },
    /// An eviction was initiated on behalf of the requester; the slot is
    /// consumed by the back-invalidation broadcast, no response is sent.
    EvictInitiated(EvictionInit),
    /// Sequenced mode: request registered at the tail of the set queue.
    Queued { set: usize },
    /// No progress possible this slot (e.g. waiting on a pending eviction).
    Blocked { set: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvictionInit {
    pub part: usize,
    pub set: usize,
    pub set_local: usize,
    pub way: usize,
    pub victim: LineAddr,
    pub sharers: u64,
    pub requester: CoreId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WritebackOutcome {
    /// Last sharer of a pending-eviction line: the way is now free.
    Freed { part: usize, set: usize, set_local: usize },
    /// Sharer removed, line stays resident (or other sharers remain).
    Merged { set: usize },
}

/// Bookkeeping produced at end-of-slot settling of sequenced partitions.
#[derive(Debug, Clone)]
pub enum SettleAction {
    Granted { set: usize, core: CoreId, line: LineAddr },
    Evict(EvictionInit),
}

#[derive(Debug, Clone)]
pub struct LlcState {
    pub partitions: Vec<PartitionState>,
}

impl LlcState {
    pub fn new(cfg: &SystemConfig) -> Self {
        let partitions = cfg
            .partitions
            .iter()
            .map(|spec| {
                let ways = spec.num_ways();
                let sets = (0..spec.num_sets)
                    .map(|_| LlcSet {
                        ways: vec![LlcWay::default(); ways],
                        reserved_for: None,
                    })
                    .collect();
                let sequencer = (spec.mode == SharingMode::Sequenced)
                    .then(|| SetSequencer::new(spec.num_sets, spec.sharers.len()));
                PartitionState {
                    spec: spec.clone(),
                    sets,
                    policy: make_policy(&cfg.replacement, spec.num_sets)
                        .expect("validated policy name"),
                    sequencer,
                }
            })
            .collect();
        Self { partitions }
    }

    pub fn partition_index_of(&self, core: CoreId) -> Option<usize> {
        self.partitions
            .iter()
            .position(|p| p.spec.sharers.contains(&core))
    }

    fn global_set(&self, part: usize, set_local: usize) -> usize {
        self.partitions[part].spec.set_start + set_local
    }

    /// Locate a resident line in `core`'s partition.
    pub fn find(&self, core: CoreId, line: LineAddr) -> Option<(usize, usize, usize)> {
        let part = self.partition_index_of(core)?;
        let set = self.partitions[part].local_set_of(line);
        let way = self.partitions[part].find_line(set, line)?;
        Some((part, set, way))
    }

    /// Would a request transaction from `core` for `line` make progress if
    /// granted the bus this slot? Used by the per-core arbiter to avoid
    /// burning slots on requests the sequencer would refuse anyway.
    pub fn request_ready(&self, core: CoreId, line: LineAddr) -> bool {
        let Some(part) = self.partition_index_of(core) else {
            return false;
        };
        let p = &self.partitions[part];
        let set = p.local_set_of(line);
        if let Some(way) = p.find_line(set, line) {
            if p.sets[set].ways[way].pending_evict.is_none() {
                return true;
            }
        }
        match p.spec.mode {
            SharingMode::Private | SharingMode::BestEffort => true,
            SharingMode::Sequenced => {
                let seq = p.sequencer.as_ref().unwrap();
                match seq.position(set, core) {
                    None => seq.contains(core).is_none(),
                    Some(0) => p.free_way_for(set, core).is_some(),
                    Some(_) => false,
                }
            }
        }
    }

    pub fn handle_request(
        &mut self,
        core: CoreId,
        line: LineAddr,
        op_is_write: bool,
        core_caches: bool,
        adversary: Option<&mut Chooser>,
    ) -> Result<RequestOutcome, ProtocolError> {
        let part = self
            .partition_index_of(core)
            .ok_or(ProtocolError::IsolationViolation { core })?;
        let set_local = self.partitions[part].local_set_of(line);
        let set = self.global_set(part, set_local);
        let p = &mut self.partitions[part];

        // Hit path: a line mid-eviction is no longer readable.
        if let Some(way) = p.find_line(set_local, line) {
            if p.sets[set_local].ways[way].pending_evict.is_none() {
                let w = &mut p.sets[set_local].ways[way];
                if core_caches {
                    w.sharers |= 1 << core;
                } else if op_is_write {
                    w.dirty = true;
                }
                p.policy.on_access(set_local, way);
                if let Some(seq) = p.sequencer.as_mut() {
                    seq.remove(set_local, core);
                    if seq.queue_len(set_local) == 0 {
                        p.sets[set_local].reserved_for = None;
                    }
                }
                return Ok(RequestOutcome::HitRespond { set });
            }
        }

        match p.spec.mode {
            SharingMode::Private | SharingMode::BestEffort => {
                if let Some(way) = p.free_way_for(set_local, core) {
                    self.fill(part, set_local, way, core, line, op_is_write, core_caches);
                    Ok(RequestOutcome::FillRespond { set, way })
                } else if p.has_pending_for(set_local, core) {
                    Ok(RequestOutcome::Blocked { set })
                } else {
                    match self.initiate_eviction(part, set_local, core, adversary) {
                        Some(init) => Ok(RequestOutcome::EvictInitiated(init)),
                        None => Ok(RequestOutcome::Blocked { set }),
                    }
                }
            }
            SharingMode::Sequenced => {
                let seq = p.sequencer.as_mut().unwrap();
                match seq.position(set_local, core) {
                    None => {
                        if seq.contains(core).is_some() {
                            return Err(ProtocolError::DoubleEnqueue { core });
                        }
                        if seq.queue_len(set_local) == 0 {
                            if let Some(way) = p.free_way_for(set_local, core) {
                                self.fill(
                                    part, set_local, way, core, line, op_is_write, core_caches,
                                );
                                return Ok(RequestOutcome::FillRespond { set, way });
                            }
                            // Initial broadcast: join the (empty) queue and,
                            // as head, start the eviction in the same slot.
                            p.sequencer
                                .as_mut()
                                .unwrap()
                                .enqueue(set_local, core, line)?;
                            if !p.has_pending_for(set_local, core) {
                                if let Some(init) =
                                    self.initiate_eviction(part, set_local, core, adversary)
                                {
                                    return Ok(RequestOutcome::EvictInitiated(init));
                                }
                            }
                            Ok(RequestOutcome::Queued { set })
                        } else {
                            seq.enqueue(set_local, core, line)?;
                            Ok(RequestOutcome::Queued { set })
                        }
                    }
                    Some(0) => {
                        if let Some(way) = p.free_way_for(set_local, core) {
                            p.sequencer.as_mut().unwrap().dequeue(set_local)?;
                            p.sets[set_local].reserved_for = None;
                            self.fill(part, set_local, way, core, line, op_is_write, core_caches);
                            Ok(RequestOutcome::FillRespond { set, way })
                        } else {
                            Ok(RequestOutcome::Blocked { set })
                        }
                    }
                    Some(_) => Ok(RequestOutcome::Blocked { set }),
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn fill(
        &mut self,
        part: usize,
        set_local: usize,
        way: usize,
        core: CoreId,
        line: LineAddr,
        op_is_write: bool,
        core_caches: bool,
    ) {
        let p = &mut self.partitions[part];
        let w = &mut p.sets[set_local].ways[way];
        debug_assert!(w.is_free());
        w.line = Some(line);
        w.dirty = op_is_write && !core_caches;
        w.sharers = if core_caches { 1 << core } else { 0 };
        w.pending_evict = None;
        if p.sets[set_local].reserved_for == Some(core) {
            p.sets[set_local].reserved_for = None;
        }
        p.policy.on_access(set_local, way);
    }

    /// Pick a victim among ways not already mid-eviction and mark it
    /// pending on behalf of `requester`. Returns `None` when every valid
    /// way is already draining.
    fn initiate_eviction(
        &mut self,
        part: usize,
        set_local: usize,
        requester: CoreId,
        adversary: Option<&mut Chooser>,
    ) -> Option<EvictionInit> {
        let p = &mut self.partitions[part];
        let candidates: Vec<usize> = p.sets[set_local]
            .ways
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_free() && w.pending_evict.is_none())
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let way = match adversary {
            Some(ch) if candidates.len() > 1 => candidates[ch.choose(candidates.len())],
            _ => Self::preferred_victim(p, set_local, requester, &candidates),
        };
        let w = &mut p.sets[set_local].ways[way];
        w.pending_evict = Some(requester);
        Some(EvictionInit {
            part,
            set: p.spec.set_start + set_local,
            set_local,
            way,
            victim: w.line.unwrap(),
            sharers: w.sharers,
            requester,
        })
    }

    /// Victim choice for demand evictions. Ways nobody caches go first
    /// (they free without any write-back). Otherwise the victim is taken
    /// from the holder occupying the most ways in the set, so occupancy
    /// stays balanced between sharers; the requester wins ties, which lets
    /// a core recycle its own entries in place of cross-core write-backs.
    /// The most recently touched way is shielded while alternatives exist.
    fn preferred_victim(
        p: &mut PartitionState,
        set_local: usize,
        requester: CoreId,
        candidates: &[usize],
    ) -> usize {
        if candidates.len() == 1 {
            return candidates[0];
        }
        let mru = p.policy.most_recent(set_local, candidates);
        let open: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&w| Some(w) != mru)
            .collect();
        let sharers_of = |w: usize| p.sets[set_local].ways[w].sharers;

        let unowned: Vec<usize> = open.iter().copied().filter(|&w| sharers_of(w) == 0).collect();
        if !unowned.is_empty() {
            return p.policy.select_victim(set_local, &unowned);
        }

        // Occupancy per holder across all valid ways of the set.
        let mut count = [0usize; 64];
        for w in &p.sets[set_local].ways {
            if !w.is_free() {
                for (c, n) in count.iter_mut().enumerate() {
                    if w.sharers >> c & 1 == 1 {
                        *n += 1;
                    }
                }
            }
        }
        let mut holders: Vec<CoreId> = (0..64).filter(|&c| count[c] > 0).collect();
        holders.sort_by_key(|&c| (std::cmp::Reverse(count[c]), c != requester, c));
        for holder in holders {
            let owned: Vec<usize> = open
                .iter()
                .copied()
                .filter(|&w| sharers_of(w) >> holder & 1 == 1)
                .collect();
            if !owned.is_empty() {
                return p.policy.select_victim(set_local, &owned);
            }
        }
        p.policy.select_victim(set_local, candidates)
    }

    /// Drop `core` from the sharer set of `line` without a bus transaction
    /// (back-invalidation acknowledgement for the evicting core itself, or
    /// a silent private-L2 capacity eviction).
    pub fn clear_sharer(&mut self, core: CoreId, line: LineAddr, dirty: bool) {
        if let Some((part, set, way)) = self.find(core, line) {
            let w = &mut self.partitions[part].sets[set].ways[way];
            w.sharers &= !(1 << core);
            w.dirty |= dirty;
        }
    }

    /// A write-back transaction from `core` for `line` completed on the bus.
    pub fn handle_writeback(
        &mut self,
        core: CoreId,
        line: LineAddr,
        dirty: bool,
    ) -> Result<WritebackOutcome, ProtocolError> {
        let (part, set_local, way) = self
            .find(core, line)
            .filter(|&(p, s, w)| self.partitions[p].sets[s].ways[w].sharers & (1 << core) != 0)
            .ok_or(ProtocolError::WritebackNotShared { core, line })?;
        let set = self.global_set(part, set_local);
        let w = &mut self.partitions[part].sets[set_local].ways[way];
        w.sharers &= !(1 << core);
        w.dirty |= dirty;
        if w.pending_evict.is_some() && w.sharers == 0 {
            self.free_way(part, set_local, way);
            Ok(WritebackOutcome::Freed {
                part,
                set,
                set_local,
            })
        } else {
            Ok(WritebackOutcome::Merged { set })
        }
    }

    pub fn free_way(&mut self, part: usize, set_local: usize, way: usize) {
        let p = &mut self.partitions[part];
        p.sets[set_local].ways[way] = LlcWay::default();
        p.policy.on_invalidate(set_local, way);
    }

    /// One settling pass over sequenced partitions at end of slot: hand the
    /// reservation to a queue head that has a free way, or start an
    /// autonomous eviction for a head that has none. The caller loops until
    /// no action is produced, processing back-invalidations in between.
    pub fn settle_pass(&mut self, mut adversary: Option<&mut Chooser>) -> Vec<SettleAction> {
        let mut actions = Vec::new();
        for part in 0..self.partitions.len() {
            if self.partitions[part].spec.mode != SharingMode::Sequenced {
                continue;
            }
            for set_local in 0..self.partitions[part].spec.num_sets {
                let p = &self.partitions[part];
                let Some((head, hline)) = p.sequencer.as_ref().unwrap().head(set_local) else {
                    continue;
                };
                if p.has_free_way(set_local) {
                    if p.sets[set_local].reserved_for != Some(head) {
                        self.partitions[part].sets[set_local].reserved_for = Some(head);
                        actions.push(SettleAction::Granted {
                            set: self.global_set(part, set_local),
                            core: head,
                            line: hline,
                        });
                    }
                } else if !p.has_pending_for(set_local, head) {
                    if let Some(init) =
                        self.initiate_eviction(part, set_local, head, adversary.as_deref_mut())
                    {
                        actions.push(SettleAction::Evict(init));
                    }
                }
            }
        }
        actions
    }

    /// All lines resident in the LLC (for inclusion checks).
    pub fn resident_lines(&self) -> Vec<(LineAddr, u64)> {
        let mut out = Vec::new();
        for p in &self.partitions {
            for s in &p.sets {
                for w in &s.ways {
                    if let Some(l) = w.line {
                        out.push((l, w.sharers));
                    }
                }
            }
        }
        out
    }

    pub fn encode_state(&self, out: &mut Vec<u64>) {
        for p in &self.partitions {
            for s in &p.sets {
                for w in &s.ways {
                    out.push(w.line.map_or(u64::MAX, |l| l));
                    out.push(
                        w.sharers
                            | (w.dirty as u64) << 48
                            | w.pending_evict.map_or(0, |c| (c as u64 + 1) << 49),
                    );
                }
                out.push(s.reserved_for.map_or(u64::MAX, |c| c as u64));
            }
            if let Some(seq) = &p.sequencer {
                seq.encode_state(out);
            }
            p.policy.encode_state(out);
        }
    }
}
