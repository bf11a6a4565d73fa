//! Set-associative cache arrays and the per-core private hierarchy
//! (L1I/L1D/L2). The L2 is inclusive of both L1s so a single
//! back-invalidation path clears every private copy.

use crate::config::{CacheGeometry, CoreId, PartitionSpec};
use crate::replacement::{LruPolicy, PolicyBox};

/// Line-granular address: byte address / line size.
pub type LineAddr = u64;

pub fn line_of(addr: u64, line_size: u64) -> LineAddr {
    addr / line_size
}

/// Set index for a byte address. With a partition, the index is computed
/// modulo the partition's set range and offset into it.
pub fn set_index(addr: u64, geom: &CacheGeometry, partition: Option<&PartitionSpec>) -> usize {
    let line = line_of(addr, geom.line_size);
    match partition {
        Some(p) => p.set_of_line(line),
        None => (line % geom.num_sets as u64) as usize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheLineState {
    pub line: Option<LineAddr>,
    pub dirty: bool,
}

impl CacheLineState {
    const INVALID: Self = Self {
        line: None,
        dirty: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupResult {
    Hit(usize),
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertResult {
    Placed(usize),
    /// The set is full; the policy's victim is returned without mutating
    /// state. Evictions are a protocol step owned by the controllers.
    NeedsEviction {
        victim: LineAddr,
        way: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidateResult {
    WasDirty,
    WasClean,
    NotPresent,
}

#[derive(Debug, Clone)]
pub struct CacheArray {
    geom: CacheGeometry,
    sets: Vec<Vec<CacheLineState>>,
    policy: PolicyBox,
}

impl CacheArray {
    pub fn new(geom: CacheGeometry) -> Self {
        Self {
            geom,
            sets: vec![vec![CacheLineState::INVALID; geom.num_ways]; geom.num_sets],
            policy: PolicyBox(Box::new(LruPolicy::new(geom.num_sets))),
        }
    }

    pub fn geom(&self) -> &CacheGeometry {
        &self.geom
    }

    fn set_of(&self, line: LineAddr) -> usize {
        (line % self.geom.num_sets as u64) as usize
    }

    pub fn peek(&self, line: LineAddr) -> LookupResult {
        let set = self.set_of(line);
        match self.sets[set].iter().position(|l| l.line == Some(line)) {
            Some(way) => LookupResult::Hit(way),
            None => LookupResult::Miss,
        }
    }

    /// Lookup that updates replacement metadata on a hit.
    pub fn lookup(&mut self, line: LineAddr) -> LookupResult {
        let set = self.set_of(line);
        let res = self.peek(line);
        if let LookupResult::Hit(way) = res {
            self.policy.on_access(set, way);
        }
        res
    }

    /// Place `line` in a free way, or return the victim the policy picks.
    pub fn insert(&mut self, line: LineAddr, dirty: bool) -> InsertResult {
        debug_assert_eq!(self.peek(line), LookupResult::Miss);
        let set = self.set_of(line);
        if let Some(way) = self.sets[set].iter().position(|l| l.line.is_none()) {
            self.sets[set][way] = CacheLineState { line: Some(line), dirty };
            self.policy.on_access(set, way);
            return InsertResult::Placed(way);
        }
        let candidates: Vec<usize> = (0..self.geom.num_ways).collect();
        let way = self.policy.select_victim(set, &candidates);
        InsertResult::NeedsEviction {
            victim: self.sets[set][way].line.unwrap(),
            way,
        }
    }

    pub fn evict_way(&mut self, set: usize, way: usize) -> CacheLineState {
        let old = self.sets[set][way];
        self.sets[set][way] = CacheLineState::INVALID;
        self.policy.on_invalidate(set, way);
        old
    }

    pub fn invalidate(&mut self, line: LineAddr) -> InvalidateResult {
        let set = self.set_of(line);
        match self.sets[set].iter().position(|l| l.line == Some(line)) {
            Some(way) => {
                let dirty = self.sets[set][way].dirty;
                self.sets[set][way] = CacheLineState::INVALID;
                self.policy.on_invalidate(set, way);
                if dirty {
                    InvalidateResult::WasDirty
                } else {
                    InvalidateResult::WasClean
                }
            }
            None => InvalidateResult::NotPresent,
        }
    }

    pub fn mark_dirty(&mut self, line: LineAddr) {
        let set = self.set_of(line);
        if let Some(way) = self.sets[set].iter().position(|l| l.line == Some(line)) {
            self.sets[set][way].dirty = true;
        }
    }

    pub fn is_dirty(&self, line: LineAddr) -> bool {
        let set = self.set_of(line);
        self.sets[set]
            .iter()
            .any(|l| l.line == Some(line) && l.dirty)
    }

    pub fn valid_lines(&self) -> impl Iterator<Item = LineAddr> + '_ {
        self.sets.iter().flatten().filter_map(|l| l.line)
    }

    pub fn encode_state(&self, out: &mut Vec<u64>) {
        for set in &self.sets {
            for l in set {
                out.push(match l.line {
                    Some(a) => a << 1 | l.dirty as u64,
                    None => u64::MAX,
                });
            }
        }
        self.policy.encode_state(out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOp {
    Read,
    Write,
    IFetch,
}

/// A line evicted from L2 by capacity pressure (not by back-invalidation).
/// The LLC copy stays valid; only the sharer bookkeeping changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoluntaryEvict {
    pub line: LineAddr,
    pub dirty: bool,
}

#[derive(Debug, Clone)]
struct PrivateArrays {
    l1i: CacheArray,
    l1d: CacheArray,
    l2: CacheArray,
}

/// The private side of one core: L1I + L1D backed by an inclusive L2.
/// `None` arrays model an uncached core (used by micro-configurations
/// where the core under analysis must not retain lines).
#[derive(Debug, Clone)]
pub struct PrivateHierarchy {
    pub owner: CoreId,
    arrays: Option<PrivateArrays>,
}

impl PrivateHierarchy {
    pub fn new(owner: CoreId, l1i: CacheGeometry, l1d: CacheGeometry, l2: CacheGeometry) -> Self {
        Self {
            owner,
            arrays: Some(PrivateArrays {
                l1i: CacheArray::new(l1i),
                l1d: CacheArray::new(l1d),
                l2: CacheArray::new(l2),
            }),
        }
    }

    pub fn uncached(owner: CoreId) -> Self {
        Self {
            owner,
            arrays: None,
        }
    }

    pub fn capacity_lines(&self) -> usize {
        self.arrays
            .as_ref()
            .map_or(0, |a| a.l2.geom().capacity_lines())
    }

    pub fn holds(&self, line: LineAddr) -> bool {
        self.arrays
            .as_ref()
            .is_some_and(|a| a.l2.peek(line) != LookupResult::Miss)
    }

    /// Zero-latency private access. Returns true on a private hit, false
    /// when the request must go to the bus.
    pub fn access(&mut self, op: AccessOp, line: LineAddr) -> bool {
        let Some(arrays) = &mut self.arrays else {
            return false;
        };
        let l1 = match op {
            AccessOp::IFetch => &mut arrays.l1i,
            _ => &mut arrays.l1d,
        };
        if let LookupResult::Hit(_) = l1.lookup(line) {
            if op == AccessOp::Write {
                l1.mark_dirty(line);
            }
            return true;
        }
        if let LookupResult::Hit(_) = arrays.l2.lookup(line) {
            Self::fill_l1(arrays, op, line);
            return true;
        }
        false
    }

    /// Install a line delivered by the LLC. Returns any capacity eviction
    /// from L2 so the caller can update the LLC sharer bookkeeping.
    pub fn install(&mut self, op: AccessOp, line: LineAddr) -> Option<VoluntaryEvict> {
        let arrays = self.arrays.as_mut()?;
        let mut evicted = None;
        loop {
            match arrays.l2.insert(line, false) {
                InsertResult::Placed(_) => break,
                InsertResult::NeedsEviction { victim, way } => {
                    debug_assert!(evicted.is_none(), "one insert evicts at most one L2 line");
                    // Local inclusion: pull the victim out of both L1s first.
                    let l1_dirty = matches!(arrays.l1d.invalidate(victim), InvalidateResult::WasDirty);
                    arrays.l1i.invalidate(victim);
                    let set = (victim % arrays.l2.geom().num_sets as u64) as usize;
                    let state = arrays.l2.evict_way(set, way);
                    evicted = Some(VoluntaryEvict {
                        line: victim,
                        dirty: state.dirty || l1_dirty,
                    });
                }
            }
        }
        Self::fill_l1(arrays, op, line);
        evicted
    }

    fn fill_l1(arrays: &mut PrivateArrays, op: AccessOp, line: LineAddr) {
        let l1 = match op {
            AccessOp::IFetch => &mut arrays.l1i,
            _ => &mut arrays.l1d,
        };
        loop {
            match l1.insert(line, op == AccessOp::Write) {
                InsertResult::Placed(_) => break,
                InsertResult::NeedsEviction { victim, way } => {
                    let set = (victim % l1.geom().num_sets as u64) as usize;
                    let state = l1.evict_way(set, way);
                    if state.dirty {
                        arrays.l2.mark_dirty(victim);
                    }
                }
            }
        }
    }

    /// Forced eviction of every private copy of `line` (inclusive LLC
    /// evicted it).
    pub fn back_invalidate(&mut self, line: LineAddr) -> InvalidateResult {
        let Some(arrays) = &mut self.arrays else {
            return InvalidateResult::NotPresent;
        };
        let mut dirty = false;
        let mut present = false;
        for arr in [&mut arrays.l1i, &mut arrays.l1d, &mut arrays.l2] {
            match arr.invalidate(line) {
                InvalidateResult::WasDirty => {
                    dirty = true;
                    present = true;
                }
                InvalidateResult::WasClean => present = true,
                InvalidateResult::NotPresent => {}
            }
        }
        match (present, dirty) {
            (false, _) => InvalidateResult::NotPresent,
            (true, true) => InvalidateResult::WasDirty,
            (true, false) => InvalidateResult::WasClean,
        }
    }

    /// Valid L2 lines (the superset of every private copy).
    pub fn l2_lines(&self) -> Vec<LineAddr> {
        self.arrays
            .as_ref()
            .map_or_else(Vec::new, |a| a.l2.valid_lines().collect())
    }

    /// Local inclusion check: every valid L1 line is also valid in L2.
    pub fn check_local_inclusion(&self) -> bool {
        let Some(arrays) = &self.arrays else {
            return true;
        };
        arrays
            .l1i
            .valid_lines()
            .chain(arrays.l1d.valid_lines())
            .all(|l| arrays.l2.peek(l) != LookupResult::Miss)
    }

    pub fn encode_state(&self, out: &mut Vec<u64>) {
        if let Some(arrays) = &self.arrays {
            arrays.l1i.encode_state(out);
            arrays.l1d.encode_state(out);
            arrays.l2.encode_state(out);
        }
    }
}
