//! Parameter sweeps: run the same seeded random workloads through several
//! partition configurations and compare observed worst-case latencies and
//! execution times, including a speedup column against the private
//! baseline on identical traces.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Deserialize;

use crate::analysis;
use crate::config::{SharingMode, SystemConfig};
use crate::engine::{TraceSource, World, WorldOptions};
use crate::presets;
use crate::workload;

fn default_count() -> usize {
    10_000
}
fn default_write_ratio() -> f64 {
    0.5
}
fn default_max_slots() -> u64 {
    1_000_000
}
fn default_sets_per_core() -> usize {
    1
}
fn default_modes() -> Vec<String> {
    vec!["ss".into(), "nss".into(), "p".into()]
}
fn default_preset() -> String {
    "fixed_capacity".into()
}

/// TOML sweep description: configurations x address ranges x seeds.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// "fixed_capacity" (total LLC capacity split or pooled) or
    /// "reference_eval" (the 4-core one-set-partition reference system).
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default = "default_two")]
    pub cores: usize,
    #[serde(default = "default_sets_per_core")]
    pub sets_per_core: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<String>,
    pub ranges: Vec<u64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_write_ratio")]
    pub write_ratio: f64,
    #[serde(default = "default_max_slots")]
    pub max_slots: u64,
}

fn default_two() -> usize {
    2
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mode: SharingMode,
    pub range_bytes: u64,
    pub seed: u64,
    /// Worst observed request latency across cores, in cycles.
    pub observed_wcl_cycles: u64,
    /// Slowest core's completion time, in cycles.
    pub exec_time_cycles: u64,
    /// Analytical bound for the configuration, in cycles.
    pub bound_cycles: u64,
    /// exec time of the private baseline on the same traces / this cell's
    /// exec time; None when no private cell exists for the (range, seed).
    pub speedup_vs_p: Option<f64>,
    /// "ok", "incomplete", or an error description.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "mode,range_bytes,seed,observed_wcl_cycles,exec_time_cycles,bound_cycles,speedup_vs_p,status\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.mode,
                r.range_bytes,
                r.seed,
                r.observed_wcl_cycles,
                r.exec_time_cycles,
                r.bound_cycles,
                r.speedup_vs_p
                    .map_or_else(|| "-".to_string(), |v| format!("{v:.4}")),
                r.status
            ));
        }
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("unknown mode `{0}` (expected ss, nss, p)")]
    UnknownMode(String),
    #[error("unknown preset `{0}` (expected fixed_capacity, reference_eval)")]
    UnknownPreset(String),
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Workload(#[from] workload::WorkloadError),
}

fn parse_mode(s: &str) -> Result<SharingMode, SweepError> {
    match s {
        "ss" => Ok(SharingMode::Sequenced),
        "nss" => Ok(SharingMode::BestEffort),
        "p" | "private" => Ok(SharingMode::Private),
        other => Err(SweepError::UnknownMode(other.to_string())),
    }
}

fn build_config(spec: &SweepSpec, mode: SharingMode) -> Result<SystemConfig, SweepError> {
    match spec.preset.as_str() {
        "fixed_capacity" => Ok(presets::fixed_capacity(mode, spec.cores, spec.sets_per_core)),
        "reference_eval" => {
            if spec.cores != 4 {
                return Err(SweepError::Spec("reference_eval preset is 4-core".into()));
            }
            Ok(presets::reference_eval(mode))
        }
        other => Err(SweepError::UnknownPreset(other.to_string())),
    }
}

/// Per-core trace seed: distinct streams per core, identical across modes.
fn core_seed(seed: u64, core: usize) -> u64 {
    seed.wrapping_add(1_000_003u64.wrapping_mul(core as u64 + 1))
}

fn run_cell(
    spec: &SweepSpec,
    mode: SharingMode,
    range: u64,
    seed: u64,
) -> Result<SweepRow, SweepError> {
    let cfg = Arc::new(build_config(spec, mode)?);
    let bases = workload::disjoint_ranges(spec.cores, range, range)?;
    let traces: Vec<TraceSource> = bases
        .iter()
        .enumerate()
        .map(|(core, &base)| {
            workload::generate_trace(
                core_seed(seed, core),
                base,
                range,
                spec.count,
                spec.write_ratio,
                cfg.line_size,
            )
            .map(|t| TraceSource::Fixed(Arc::new(t)))
        })
        .collect::<Result<_, _>>()?;
    let opts = WorldOptions {
        log_events: false,
        monitors: false,
        bound_monitors: true,
        check_interval: 4096,
        record_distances: false,
        ..WorldOptions::default()
    };
    let (_, inputs) = analysis::bound_inputs_for_core(&cfg, 0);
    let bound_cycles = analysis::wcl_for_mode(mode, &inputs);
    let mut row = SweepRow {
        mode,
        range_bytes: range,
        seed,
        observed_wcl_cycles: 0,
        exec_time_cycles: 0,
        bound_cycles,
        speedup_vs_p: None,
        status: "ok".into(),
    };
    let mut world = match World::new(cfg, traces, opts) {
        Ok(w) => w,
        Err(e) => {
            row.status = format!("error: {e}");
            return Ok(row);
        }
    };
    match world.run(spec.max_slots) {
        Ok(report) => {
            row.observed_wcl_cycles = report
                .cores
                .iter()
                .map(|c| c.max_latency_cycles)
                .max()
                .unwrap_or(0);
            row.exec_time_cycles = report
                .cores
                .iter()
                .map(|c| c.exec_time_cycles)
                .max()
                .unwrap_or(0);
            if !report.all_complete {
                row.status = "incomplete".into();
            } else if let Some(v) = report.violations.first() {
                row.status = format!("violation: {v}");
            }
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    Ok(row)
}

/// Run every (mode, range, seed) cell, attach speedups against the
/// private baseline on identical traces, and sort rows by cell key.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let modes: Vec<SharingMode> = spec
        .modes
        .iter()
        .map(|m| parse_mode(m))
        .collect::<Result<_, _>>()?;
    let cells: Vec<(SharingMode, u64, u64)> = modes
        .iter()
        .flat_map(|&m| {
            spec.ranges
                .iter()
                .flat_map(move |&r| spec.seeds.iter().map(move |&s| (m, r, s)))
        })
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(m, r, s)| run_cell(spec, m, r, s))
        .collect::<Result<Vec<_>, _>>()?;
    // Speedup vs the private cell of the same (range, seed).
    let baseline: Vec<(u64, u64, u64)> = rows
        .iter()
        .filter(|r| r.mode == SharingMode::Private && r.status == "ok")
        .map(|r| (r.range_bytes, r.seed, r.exec_time_cycles))
        .collect();
    for row in &mut rows {
        if let Some(&(_, _, base)) = baseline
            .iter()
            .find(|&&(rb, sd, _)| rb == row.range_bytes && sd == row.seed)
        {
            if row.exec_time_cycles > 0 {
                row.speedup_vs_p = Some(base as f64 / row.exec_time_cycles as f64);
            }
        }
    }
    rows.sort_by_key(|r| (format!("{}", r.mode), r.range_bytes, r.seed));
    Ok(SweepResult { rows })
}

pub fn parse_spec(text: &str) -> Result<SweepSpec, SweepError> {
    toml::from_str(text).map_err(|e| SweepError::Spec(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        parse_spec(
            "ranges = [1024, 4096]\nseeds = [1]\ncount = 500\n",
        )
        .unwrap()
    }

    #[test]
    fn spec_defaults_parse() {
        let spec = small_spec();
        assert_eq!(spec.cores, 2);
        assert_eq!(spec.modes, vec!["ss", "nss", "p"]);
        assert_eq!(spec.count, 500);
    }

    #[test]
    fn empty_spec_yields_empty_csv_with_header() {
        let spec = parse_spec("ranges = []\nseeds = []\n").unwrap();
        let out = run_sweep(&spec).unwrap();
        assert_eq!(
            out.to_csv(),
            "mode,range_bytes,seed,observed_wcl_cycles,exec_time_cycles,bound_cycles,speedup_vs_p,status\n"
        );
    }

    #[test]
    fn sweep_runs_and_is_sorted_and_bounded() {
        let spec = small_spec();
        let out = run_sweep(&spec).unwrap();
        assert_eq!(out.rows.len(), 6);
        let keys: Vec<_> = out
            .rows
            .iter()
            .map(|r| (format!("{}", r.mode), r.range_bytes, r.seed))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &out.rows {
            assert_eq!(r.status, "ok", "{r:?}");
            assert!(r.observed_wcl_cycles <= r.bound_cycles, "{r:?}");
            assert!(r.speedup_vs_p.is_some());
        }
    }

    #[test]
    fn identical_traces_across_modes() {
        // The private baseline and the shared cells must consume the same
        // per-core accesses: equal request counts per core.
        let spec = small_spec();
        let out = run_sweep(&spec).unwrap();
        let p: Vec<_> = out
            .rows
            .iter()
            .filter(|r| r.mode == SharingMode::Private)
            .collect();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn unknown_mode_rejected() {
        let spec = parse_spec("ranges = [1024]\nseeds = [1]\nmodes = [\"weird\"]\n").unwrap();
        assert!(matches!(run_sweep(&spec), Err(SweepError::UnknownMode(_))));
    }
}
