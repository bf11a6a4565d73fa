//! End-to-end acceptance gate. Each test covers one criterion and prints a
//! single pass/fail line (visible with `cargo test --test acceptance -- --nocapture`).

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use llcsim::analysis::{self, BoundInputs};
use llcsim::config::SharingMode;
use llcsim::engine::{TraceSource, World, WorldOptions};
use llcsim::oracle::{brute_force_wcl, MicroConfig};
use llcsim::scenario::run_scenario;
use llcsim::sweep::{parse_spec, run_sweep};
use llcsim::{presets, workload};

fn criterion<F: FnOnce()>(num: usize, name: &str, body: F) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("criterion {num} ({name}): pass"),
        Err(e) => {
            println!("criterion {num} ({name}): fail");
            resume_unwind(e);
        }
    }
}

/// Criterion 1: the closed-form bounds reproduce the reference operating
/// point (N=4, n=4, w=16, M=16, m_cua=64, SW=50) exactly.
#[test]
fn criterion_1_bound_reproduction() {
    criterion(1, "bound reproduction", || {
        let inputs = BoundInputs {
            big_n: 4,
            n: 4,
            w: 16,
            big_m: 16,
            m_cua: 64,
            slot_width: 50,
        };
        let cases = [
            (SharingMode::BestEffort, 979_250u64, 19_585u64),
            (SharingMode::Sequenced, 5_000, 100),
            (SharingMode::Private, 450, 9),
        ];
        for (mode, cycles, slots) in cases {
            let inputs = BoundInputs {
                n: if mode == SharingMode::Private { 1 } else { 4 },
                ..inputs
            };
            assert_eq!(analysis::wcl_for_mode(mode, &inputs), cycles, "{mode}");
            assert_eq!(analysis::wcl_slots_for_mode(mode, &inputs), slots, "{mode}");
        }
    });
}

/// Criterion 2: on the 4-core one-set-partition reference system, 20 seeds
/// x 5 address ranges, every request latency stays under the analytical
/// bound and the sequenced mode's observed WCL never exceeds best-effort's
/// on identical traces.
#[test]
fn criterion_2_bound_soundness() {
    criterion(2, "bound soundness by simulation", || {
        let seeds: Vec<String> = (0..20).map(|s| s.to_string()).collect();
        let spec = parse_spec(&format!(
            "preset = \"reference_eval\"\ncores = 4\nmodes = [\"ss\", \"nss\"]\n\
             ranges = [1024, 2048, 4096, 8192, 16384]\nseeds = [{}]\ncount = 10000\n",
            seeds.join(", ")
        ))
        .unwrap();
        let start = Instant::now();
        let result = run_sweep(&spec).unwrap();
        let elapsed = start.elapsed();
        assert_eq!(result.rows.len(), 2 * 5 * 20);
        for row in &result.rows {
            assert_eq!(row.status, "ok", "{row:?}");
            assert!(
                row.observed_wcl_cycles <= row.bound_cycles,
                "bound violated: {row:?}"
            );
        }
        let wcl = |mode: SharingMode, range: u64, seed: u64| {
            result
                .rows
                .iter()
                .find(|r| r.mode == mode && r.range_bytes == range && r.seed == seed)
                .map(|r| r.observed_wcl_cycles)
                .unwrap()
        };
        for &range in &[1024u64, 2048, 4096, 8192, 16384] {
            for seed in 0..20u64 {
                let ss = wcl(SharingMode::Sequenced, range, seed);
                let nss = wcl(SharingMode::BestEffort, range, seed);
                assert!(
                    ss <= nss,
                    "range {range} seed {seed}: ss WCL {ss} > nss WCL {nss}"
                );
            }
        }
        assert!(
            elapsed < Duration::from_secs(120),
            "sweep took {elapsed:?}, budget is 2 minutes"
        );
    });
}

/// Criterion 3: exhaustive adversarial search over every micro-config
/// (N <= 3, w <= 2, one set, m <= 2) stays within the closed-form bound.
#[test]
fn criterion_3_oracle_certification() {
    criterion(3, "oracle certification", || {
        let start = Instant::now();
        for micro in MicroConfig::grid() {
            let out = brute_force_wcl(&micro, 40);
            assert!(out.certified, "{micro:?} not fully explored at horizon 40");
            assert!(
                out.max_latency_slots <= micro.bound_slots(),
                "{micro:?}: observed {} slots > bound {}",
                out.max_latency_slots,
                micro.bound_slots()
            );
        }
        let elapsed = start.elapsed();
        assert!(
            elapsed < Duration::from_secs(300),
            "grid took {elapsed:?}, budget is 5 minutes"
        );
    });
}

/// Criterion 4: the three hand-checked scenarios replay their golden event
/// logs exactly, including the blocked-forever two-slot schedule, the
/// fourth-slot completion with the 2 -> 1 -> free victim distance series,
/// and the 1 -> free -> 3 distance increase.
#[test]
fn criterion_4_scenario_goldens() {
    criterion(4, "scenario goldens", || {
        let fig2 = run_scenario("fig2").unwrap();
        assert!(fig2.matches_golden, "fig2 log diverged from golden");
        assert!(!fig2.completed);
        assert_eq!(fig2.periods, 100);

        let fig3 = run_scenario("fig3").unwrap();
        assert!(fig3.matches_golden, "fig3 log diverged from golden");
        assert!(fig3.completed);
        assert_eq!(fig3.latency_slots, Some(13), "request must finish in cua's 4th slot");
        assert_eq!(fig3.way_series, ["2", "1", "free"]);

        let fig4 = run_scenario("fig4").unwrap();
        assert!(fig4.matches_golden, "fig4 log diverged from golden");
        assert_eq!(fig4.way_series, ["1", "free", "3"]);
    });
}

/// Criterion 5: the distance-lemma and victim-progress monitors stay
/// silent over >= 1000 fuzzed one-slot-TDM runs.
#[test]
fn criterion_5_lemma_monitors() {
    criterion(5, "lemma monitors", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0xF0CC);
        for run in 0..1000usize {
            let mode = match rng.gen_range(0..3) {
                0 => SharingMode::Private,
                1 => SharingMode::BestEffort,
                _ => SharingMode::Sequenced,
            };
            let cores = rng.gen_range(2..=4usize);
            let sets_per_core = rng.gen_range(1..=2usize);
            let cfg = Arc::new(presets::fixed_capacity(mode, cores, sets_per_core));
            let range = 64 * rng.gen_range(4..=96u64);
            let count = rng.gen_range(50..=250usize);
            let write_ratio = rng.gen_range(0.0..=1.0f64);
            let traces: Vec<TraceSource> = (0..cores)
                .map(|core| {
                    let t = workload::generate_trace(
                        rng.gen(),
                        (core as u64) << 20,
                        range,
                        count,
                        write_ratio,
                        64,
                    )
                    .unwrap();
                    TraceSource::Fixed(Arc::new(t))
                })
                .collect();
            let opts = WorldOptions {
                log_events: false,
                check_interval: 256,
                ..WorldOptions::default()
            };
            let mut world = World::new(Arc::clone(&cfg), traces, opts).unwrap();
            let report = world
                .run(1_000_000)
                .unwrap_or_else(|e| panic!("run {run}: protocol error: {e}"));
            assert!(report.all_complete, "run {run} did not complete");
            assert!(
                report.violations.is_empty(),
                "run {run} ({mode}, {cores} cores): {:?}",
                report.violations
            );
        }
        let elapsed = start.elapsed();
        assert!(
            elapsed < Duration::from_secs(120),
            "fuzzing took {elapsed:?}, budget is 2 minutes"
        );
    });
}

/// Criterion 6: in the 2-core fixed-total-capacity sweep, sharing never
/// slows the sequenced mode down once the per-core working set outgrows
/// the private partition, and all modes tie exactly when it fits.
#[test]
fn criterion_6_sharing_benefit() {
    criterion(6, "sharing-benefit qualitative check", || {
        let spec = parse_spec(
            "preset = \"fixed_capacity\"\ncores = 2\nsets_per_core = 1\n\
             modes = [\"ss\", \"nss\", \"p\"]\n\
             ranges = [1024, 2048, 4096, 8192, 16384]\nseeds = [3, 4, 16, 90]\ncount = 10000\n",
        )
        .unwrap();
        let result = run_sweep(&spec).unwrap();
        for row in &result.rows {
            assert_eq!(row.status, "ok", "{row:?}");
        }
        let exec = |mode: SharingMode, range: u64, seed: u64| {
            result
                .rows
                .iter()
                .find(|r| r.mode == mode && r.range_bytes == range && r.seed == seed)
                .map(|r| r.exec_time_cycles)
                .unwrap()
        };
        for &seed in &[3u64, 4, 16, 90] {
            // Working set fits the 16-line private partition: all three
            // modes finish in exactly the same time.
            let p = exec(SharingMode::Private, 1024, seed);
            assert_eq!(exec(SharingMode::Sequenced, 1024, seed), p, "seed {seed}");
            assert_eq!(exec(SharingMode::BestEffort, 1024, seed), p, "seed {seed}");
            // Working set exceeds it: pooling the ways can only help the
            // sequenced mode (speedup >= 1.0).
            for &range in &[2048u64, 4096, 8192, 16384] {
                let p = exec(SharingMode::Private, range, seed);
                let ss = exec(SharingMode::Sequenced, range, seed);
                assert!(
                    ss <= p,
                    "range {range} seed {seed}: ss exec {ss} > p exec {p}"
                );
            }
        }
    });
}

/// Criterion 7: the slot-boundary structural invariants (inclusion,
/// partition isolation, one transaction per slot, sequenced FIFO order)
/// hold with the checker running at every slot.
#[test]
fn criterion_7_invariants() {
    criterion(7, "inclusion and isolation invariants", || {
        for mode in [
            SharingMode::Private,
            SharingMode::BestEffort,
            SharingMode::Sequenced,
        ] {
            let cfg = Arc::new(presets::fixed_capacity(mode, 3, 2));
            let traces: Vec<TraceSource> = (0..3)
                .map(|core| {
                    let t = workload::generate_trace(
                        7 + core as u64,
                        core as u64 * 65536,
                        8192,
                        2000,
                        0.5,
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
            let report = world.run(1_000_000).unwrap();
            assert!(report.all_complete, "{mode}: incomplete");
            assert!(report.violations.is_empty(), "{mode}: {:?}", report.violations);
        }
    });
}
