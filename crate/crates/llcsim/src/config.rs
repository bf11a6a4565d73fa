//! Static system description: cores, cache geometries, the TDM schedule and
//! the LLC partition map, plus the schedule-derived `distance` metric.

use serde::Deserialize;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub type CoreId = usize;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error("schedule references unknown core {0}")]
    UnknownCore(CoreId),
    #[error("distance is only defined for one-slot TDM schedules")]
    NotOneSlot,
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config file: {0}")]
    Parse(String),
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        msg: msg.into(),
    }
}

/// Geometry of one set-associative cache array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheGeometry {
    pub num_sets: usize,
    pub num_ways: usize,
    pub line_size: u64,
}

impl CacheGeometry {
    pub fn new(num_sets: usize, num_ways: usize, line_size: u64) -> Self {
        Self {
            num_sets,
            num_ways,
            line_size,
        }
    }

    pub fn capacity_lines(&self) -> usize {
        self.num_sets * self.num_ways
    }

    fn validate(&self, field: &'static str) -> Result<(), ConfigError> {
        if self.num_sets < 1 {
            return Err(invalid(field, "num_sets must be >= 1"));
        }
        if self.num_ways < 1 {
            return Err(invalid(field, "num_ways must be >= 1"));
        }
        Ok(())
    }
}

/// A TDM schedule: one period of slot owners, repeated forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TdmSchedule {
    slot_order: Vec<CoreId>,
}

impl TdmSchedule {
    pub fn new(slot_order: Vec<CoreId>) -> Self {
        Self { slot_order }
    }

    pub fn period_slots(&self) -> usize {
        self.slot_order.len()
    }

    pub fn slot_order(&self) -> &[CoreId] {
        &self.slot_order
    }

    /// Owner of a global slot number. Slot ownership is periodic.
    pub fn owner(&self, slot: u64) -> CoreId {
        self.slot_order[(slot % self.slot_order.len() as u64) as usize]
    }
}

/// True iff every core in `[0, num_cores)` appears exactly once in the
/// period. Core ids outside that range are rejected outright.
pub fn validate_one_slot(schedule: &TdmSchedule, num_cores: usize) -> Result<bool, ConfigError> {
    let mut seen = vec![0usize; num_cores];
    for &c in schedule.slot_order() {
        if c >= num_cores {
            return Err(ConfigError::UnknownCore(c));
        }
        seen[c] += 1;
    }
    Ok(seen.iter().all(|&n| n == 1))
}

/// Number of slots from the start of `ci`'s slot to the start of `cj`'s
/// next slot. Only defined for one-slot TDM schedules; always in `[1, N]`.
pub fn distance(schedule: &TdmSchedule, ci: CoreId, cj: CoreId) -> Result<usize, ConfigError> {
    let n = schedule.period_slots();
    let pos = |c: CoreId| schedule.slot_order().iter().position(|&x| x == c);
    let (pi, pj) = match (pos(ci), pos(cj)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(ConfigError::UnknownCore(if pos(ci).is_none() { ci } else { cj })),
    };
    if !validate_one_slot(schedule, n)? {
        return Err(ConfigError::NotOneSlot);
    }
    Ok((pj + n - pi - 1) % n + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SharingMode {
    /// One owner core; nobody else may touch the partition.
    Private,
    /// Shared, contending requests serviced best-effort (NSS).
    BestEffort,
    /// Shared, per-set FIFO order enforced by the set sequencer (SS).
    Sequenced,
}

impl fmt::Display for SharingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SharingMode::Private => "p",
            SharingMode::BestEffort => "nss",
            SharingMode::Sequenced => "ss",
        };
        f.write_str(s)
    }
}

/// A region of the LLC (contiguous sets x a way subset) together with the
/// cores allowed to use it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub id: usize,
    pub set_start: usize,
    pub num_sets: usize,
    pub way_mask: u64,
    pub sharers: Vec<CoreId>,
    pub mode: SharingMode,
}

impl PartitionSpec {
    pub fn capacity_lines(&self) -> usize {
        self.num_sets * self.way_mask.count_ones() as usize
    }

    pub fn ways(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(|w| self.way_mask >> w & 1 == 1)
    }

    pub fn num_ways(&self) -> usize {
        self.way_mask.count_ones() as usize
    }

    /// LLC set index for a line address, mapped modulo the partition's
    /// set range.
    pub fn set_of_line(&self, line: u64) -> usize {
        self.set_start + (line % self.num_sets as u64) as usize
    }
}

/// The full static system description. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub num_cores: usize,
    pub slot_width: u64,
    pub line_size: u64,
    pub l1i_geom: CacheGeometry,
    pub l1d_geom: CacheGeometry,
    pub l2_geom: CacheGeometry,
    pub llc_geom: CacheGeometry,
    pub pwb_capacity: usize,
    pub schedule: TdmSchedule,
    pub partitions: Vec<PartitionSpec>,
    pub replacement: String,
}

impl SystemConfig {
    /// Index of the partition `core` belongs to. Valid configs guarantee
    /// exactly one.
    pub fn partition_of(&self, core: CoreId) -> &PartitionSpec {
        self.partitions
            .iter()
            .find(|p| p.sharers.contains(&core))
            .expect("validated config: every core has a partition")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_cores < 1 {
            return Err(invalid("cores", "must be >= 1"));
        }
        if self.slot_width < 1 {
            return Err(invalid("slot_width", "must be >= 1"));
        }
        if !self.line_size.is_power_of_two() {
            return Err(invalid("line_size", "must be a power of two"));
        }
        self.l1i_geom.validate("l1i")?;
        self.l1d_geom.validate("l1d")?;
        self.l2_geom.validate("l2")?;
        self.llc_geom.validate("llc")?;
        if self.schedule.period_slots() == 0 {
            return Err(invalid("schedule", "must not be empty"));
        }
        for &c in self.schedule.slot_order() {
            if c >= self.num_cores {
                return Err(ConfigError::UnknownCore(c));
            }
        }
        // Partition geometry and pairwise disjointness in (set, way) space.
        let llc_way_mask = if self.llc_geom.num_ways >= 64 {
            u64::MAX
        } else {
            (1u64 << self.llc_geom.num_ways) - 1
        };
        for p in &self.partitions {
            if p.way_mask == 0 {
                return Err(invalid("partitions", format!("partition {} has empty way mask", p.id)));
            }
            if p.way_mask & !llc_way_mask != 0 {
                return Err(invalid(
                    "partitions",
                    format!("partition {} uses ways outside the LLC", p.id),
                ));
            }
            if p.num_sets == 0 || p.set_start + p.num_sets > self.llc_geom.num_sets {
                return Err(invalid(
                    "partitions",
                    format!("partition {} set range out of bounds", p.id),
                ));
            }
            if p.sharers.is_empty() {
                return Err(invalid("partitions", format!("partition {} has no sharers", p.id)));
            }
            if p.mode == SharingMode::Private && p.sharers.len() != 1 {
                return Err(invalid(
                    "partitions",
                    format!("private partition {} must have exactly one sharer", p.id),
                ));
            }
            for &c in &p.sharers {
                if c >= self.num_cores {
                    return Err(ConfigError::UnknownCore(c));
                }
            }
        }
        for (i, a) in self.partitions.iter().enumerate() {
            for b in &self.partitions[i + 1..] {
                let sets_overlap =
                    a.set_start < b.set_start + b.num_sets && b.set_start < a.set_start + a.num_sets;
                if sets_overlap && a.way_mask & b.way_mask != 0 {
                    return Err(invalid(
                        "partitions",
                        format!("partitions {} and {} overlap", a.id, b.id),
                    ));
                }
            }
        }
        // Every core belongs to exactly one sharer set.
        for c in 0..self.num_cores {
            let n = self.partitions.iter().filter(|p| p.sharers.contains(&c)).count();
            if n != 1 {
                return Err(invalid(
                    "partitions",
                    format!("core {c} belongs to {n} partitions, expected 1"),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// TOML front-end

#[derive(Deserialize)]
struct GeomDoc {
    sets: usize,
    ways: usize,
}

#[derive(Deserialize)]
struct PartitionDoc {
    sets: String,
    ways: toml::Value,
    sharers: Vec<CoreId>,
    mode: String,
}

#[derive(Deserialize)]
struct ConfigDoc {
    cores: usize,
    slot_width: u64,
    line_size: u64,
    l1i: GeomDoc,
    l1d: GeomDoc,
    l2: GeomDoc,
    llc: GeomDoc,
    pwb_capacity: Option<usize>,
    schedule: Vec<CoreId>,
    partitions: Vec<PartitionDoc>,
    replacement: Option<String>,
}

fn parse_range(s: &str, field: &'static str) -> Result<(usize, usize), ConfigError> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| invalid(field, format!("expected `start..end`, got `{s}`")))?;
    let lo: usize = a.trim().parse().map_err(|_| invalid(field, format!("bad range `{s}`")))?;
    let hi: usize = b.trim().parse().map_err(|_| invalid(field, format!("bad range `{s}`")))?;
    if hi <= lo {
        return Err(invalid(field, format!("empty range `{s}`")));
    }
    Ok((lo, hi))
}

fn parse_way_mask(v: &toml::Value) -> Result<u64, ConfigError> {
    match v {
        toml::Value::Integer(mask) if *mask > 0 => Ok(*mask as u64),
        toml::Value::String(s) => {
            let (lo, hi) = parse_range(s, "partitions.ways")?;
            if hi > 64 {
                return Err(invalid("partitions.ways", "way index must be < 64"));
            }
            let mut mask = 0u64;
            for w in lo..hi {
                mask |= 1 << w;
            }
            Ok(mask)
        }
        _ => Err(invalid("partitions.ways", "expected bitmask integer or `a..b` range")),
    }
}

/// Parse and validate a configuration document.
pub fn load_config_str(text: &str) -> Result<SystemConfig, ConfigError> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let geom = |g: &GeomDoc| CacheGeometry::new(g.sets, g.ways, doc.line_size);
    let mut partitions = Vec::new();
    for (id, p) in doc.partitions.iter().enumerate() {
        let (lo, hi) = parse_range(&p.sets, "partitions.sets")?;
        let mode = match p.mode.as_str() {
            "private" | "p" => SharingMode::Private,
            "nss" => SharingMode::BestEffort,
            "ss" => SharingMode::Sequenced,
            other => {
                return Err(invalid(
                    "partitions.mode",
                    format!("unknown mode `{other}` (expected private|nss|ss)"),
                ))
            }
        };
        partitions.push(PartitionSpec {
            id,
            set_start: lo,
            num_sets: hi - lo,
            way_mask: parse_way_mask(&p.ways)?,
            sharers: p.sharers.clone(),
            mode,
        });
    }
    let cfg = SystemConfig {
        num_cores: doc.cores,
        slot_width: doc.slot_width,
        line_size: doc.line_size,
        l1i_geom: geom(&doc.l1i),
        l1d_geom: geom(&doc.l1d),
        l2_geom: geom(&doc.l2),
        llc_geom: geom(&doc.llc),
        pwb_capacity: doc.pwb_capacity.unwrap_or(doc.cores.saturating_sub(1).max(1)),
        schedule: TdmSchedule::new(doc.schedule),
        partitions,
        replacement: doc.replacement.unwrap_or_else(|| "lru".to_string()),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SystemConfig, ConfigError> {
    load_config_str(&std::fs::read_to_string(path)?)
}
