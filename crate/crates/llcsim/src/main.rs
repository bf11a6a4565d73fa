//! Command-line front door: compute bounds, generate traces, run
//! simulations and scenario replays, and sweep configurations.
//!
//! Exit codes: 0 success/PASS, 1 usage error, 2 protocol error,
//! 3 bound violation, 4 incomplete at horizon.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use llcsim::analysis::{self, BoundInputs};
use llcsim::config::{load_config, load_config_str, SharingMode, SystemConfig};
use llcsim::engine::{SimError, World, WorldOptions};
use llcsim::scenario;
use llcsim::sweep;
use llcsim::workload;

const EXIT_USAGE: u8 = 1;
const EXIT_PROTOCOL: u8 = 2;
const EXIT_BOUND: u8 = 3;
const EXIT_INCOMPLETE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "llcsim",
    about = "Slot-accurate simulator and worst-case latency toolkit for shared LLC partitions on a TDM bus",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the analytical worst-case latency bound as a CSV row.
    Bound(BoundArgs),
    /// Generate a synthetic random trace file.
    Gen(GenArgs),
    /// Simulate a configured system over trace files.
    Simulate(SimulateArgs),
    /// Replay a named scenario and diff it against the embedded golden log.
    Scenario(ScenarioArgs),
    /// Run a sweep specification and print the aggregated CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct BoundArgs {
    /// Sharing mode: nss, ss or p.
    #[arg(long)]
    mode: String,
    /// Cores on the bus (one slot each per period).
    #[arg(long = "N", default_value_t = 4)]
    big_n: u64,
    /// Cores sharing the partition (default: N; 1 for mode p).
    #[arg(long = "n")]
    n: Option<u64>,
    /// Ways of the conflict set.
    #[arg(long, default_value_t = 16)]
    w: u64,
    /// Partition capacity in lines.
    #[arg(long = "M", default_value_t = 16)]
    big_m: u64,
    /// Private (L2) capacity of the core under analysis, in lines.
    #[arg(long)]
    mcua: Option<u64>,
    /// Slot width in cycles.
    #[arg(long, default_value_t = 50)]
    sw: u64,
}

#[derive(Args)]
struct GenArgs {
    /// RNG seed (default: $LLCSIM_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Base byte address of the range.
    #[arg(long, default_value_t = 0)]
    base: u64,
    /// Range size in bytes (multiple of the line size).
    #[arg(long)]
    range: u64,
    /// Number of accesses.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    /// Fraction of writes, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    write_ratio: f64,
    /// Cache line size in bytes.
    #[arg(long, default_value_t = 64)]
    line_size: u64,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// System configuration file (TOML).
    #[arg(long, conflicts_with_all = ["mode", "sets", "ways"])]
    config: Option<PathBuf>,
    /// Shorthand instead of --config: sharing mode nss, ss or p.
    #[arg(long, requires = "sets", requires = "ways", requires = "cores")]
    mode: Option<String>,
    /// Shorthand: partition sets (per core for mode p, total otherwise).
    #[arg(long)]
    sets: Option<usize>,
    /// Shorthand: partition ways.
    #[arg(long)]
    ways: Option<usize>,
    /// Shorthand: number of cores.
    #[arg(long)]
    cores: Option<usize>,
    /// Shorthand: slot width in cycles.
    #[arg(long, default_value_t = 50)]
    sw: u64,
    /// One trace file per core, in core order.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Directory for report.csv, verdict.txt and events.log.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the slot-by-slot event log.
    #[arg(long)]
    emit_events: bool,
    /// Horizon in slots.
    #[arg(long, default_value_t = 1_000_000)]
    max_slots: u64,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario name: fig2, fig3 or fig4.
    name: String,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<SharingMode, String> {
    match s {
        "nss" => Ok(SharingMode::BestEffort),
        "ss" => Ok(SharingMode::Sequenced),
        "p" | "private" => Ok(SharingMode::Private),
        other => Err(format!("unknown mode `{other}` (expected nss, ss or p)")),
    }
}

fn cmd_bound(args: &BoundArgs) -> Result<(), String> {
    let mode = parse_mode(&args.mode)?;
    let n = args.n.unwrap_or(match mode {
        SharingMode::Private => 1,
        _ => args.big_n,
    });
    if n == 0 || args.big_n == 0 || n > args.big_n {
        return Err(format!("need 1 <= n ({n}) <= N ({})", args.big_n));
    }
    let inputs = BoundInputs {
        big_n: args.big_n,
        n,
        w: args.w,
        big_m: args.big_m,
        m_cua: args.mcua.unwrap_or(64),
        slot_width: args.sw,
    };
    let cycles = analysis::wcl_for_mode(mode, &inputs);
    let slots = analysis::wcl_slots_for_mode(mode, &inputs);
    println!("mode,N,n,w,M,m_cua,SW,wcl_cycles,wcl_slots");
    println!(
        "{mode},{},{n},{},{},{},{},{cycles},{slots}",
        inputs.big_n, inputs.w, inputs.big_m, inputs.m_cua, inputs.slot_width
    );
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), String> {
    let seed = match args.seed {
        Some(s) => s,
        None => match std::env::var("LLCSIM_SEED") {
            Ok(v) => v
                .parse()
                .map_err(|_| format!("LLCSIM_SEED=`{v}` is not an unsigned integer"))?,
            Err(_) => 0,
        },
    };
    if !(0.0..=1.0).contains(&args.write_ratio) {
        return Err(format!("write ratio {} outside [0, 1]", args.write_ratio));
    }
    let trace = workload::generate_trace(
        seed,
        args.base,
        args.range,
        args.count,
        args.write_ratio,
        args.line_size,
    )
    .map_err(|e| e.to_string())?;
    let text = format!(
        "# llcsim gen seed={seed} base={:#x} range={} count={} write_ratio={} rng=ChaCha8\n{}",
        args.base,
        args.range,
        args.count,
        args.write_ratio,
        workload::emit_trace(&trace)
    );
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Build a config from the SS(s,w,n) / NSS(s,w,n) / P(s,w) shorthand.
fn shorthand_config(
    mode: SharingMode,
    sets: usize,
    ways: usize,
    cores: usize,
    sw: u64,
) -> Result<SystemConfig, String> {
    if ways == 0 || ways > 64 || sets == 0 || cores == 0 {
        return Err("shorthand needs cores >= 1, sets >= 1 and 1 <= ways <= 64".into());
    }
    let way_mask = if ways == 64 { u64::MAX } else { (1u64 << ways) - 1 };
    let schedule: Vec<String> = (0..cores).map(|c| c.to_string()).collect();
    let mut text = format!(
        "cores = {cores}\nslot_width = {sw}\nline_size = 64\npwb_capacity = {cores}\nschedule = [{}]\n\
         l1i = {{ sets = 2, ways = 2 }}\nl1d = {{ sets = 2, ways = 2 }}\n\
         l2 = {{ sets = 16, ways = 4 }}\nllc = {{ sets = {}, ways = {ways} }}\n",
        schedule.join(", "),
        if mode == SharingMode::Private { sets * cores } else { sets },
    );
    match mode {
        SharingMode::Private => {
            for c in 0..cores {
                text.push_str(&format!(
                    "\n[[partitions]]\nsets = \"{}..{}\"\nways = {way_mask}\nsharers = [{c}]\nmode = \"private\"\n",
                    c * sets,
                    (c + 1) * sets
                ));
            }
        }
        _ => {
            let sharers: Vec<String> = (0..cores).map(|c| c.to_string()).collect();
            text.push_str(&format!(
                "\n[[partitions]]\nsets = \"0..{sets}\"\nways = {way_mask}\nsharers = [{}]\nmode = \"{mode}\"\n",
                sharers.join(", ")
            ));
        }
    }
    load_config_str(&text).map_err(|e| e.to_string())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, String> {
    let cfg = match (&args.config, &args.mode) {
        (Some(path), None) => load_config(path).map_err(|e| e.to_string())?,
        (None, Some(mode)) => shorthand_config(
            parse_mode(mode)?,
            args.sets.unwrap(),
            args.ways.unwrap(),
            args.cores.unwrap(),
            args.sw,
        )?,
        _ => return Err("pass exactly one of --config or --mode/--sets/--ways/--cores".into()),
    };
    if args.traces.len() != cfg.num_cores {
        return Err(format!(
            "{} trace file(s) for {} cores",
            args.traces.len(),
            cfg.num_cores
        ));
    }
    let traces = args
        .traces
        .iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            workload::parse_trace(&text).map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let opts = WorldOptions {
        log_events: args.emit_events,
        ..WorldOptions::default()
    };
    let mut world =
        World::from_fixed(Arc::new(cfg.clone()), traces, opts).map_err(|e| e.to_string())?;
    let outcome = world.run(args.max_slots);

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| format!("{}: {e}", args.out_dir.display()))?;
    let write = |name: &str, body: &str| {
        let path = args.out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))
    };
    if args.emit_events {
        write("events.log", &world.log.render())?;
    }

    let report = match outcome {
        Err(err) => {
            let verdict = format!("PROTOCOL ERROR: {err}\n");
            write("report.csv", &world.report().to_csv())?;
            write("verdict.txt", &verdict)?;
            eprint!("{verdict}");
            let code = match err {
                SimError::Protocol { .. } | SimError::Pwb { .. } => EXIT_PROTOCOL,
            };
            return Ok(code);
        }
        Ok(report) => report,
    };
    write("report.csv", &report.to_csv())?;

    // The analytical bounds only hold for one-slot TDM schedules; under
    // any other schedule the verdict reduces to completion.
    let one_slot =
        llcsim::config::validate_one_slot(&cfg.schedule, cfg.num_cores).unwrap_or(false);
    let verdicts = if one_slot {
        analysis::check_bound(&report, &cfg)
    } else {
        Vec::new()
    };
    let bound_fail = verdicts.iter().any(|v| !v.pass) || !report.violations.is_empty();
    let mut verdict = String::new();
    if bound_fail {
        for v in verdicts.iter().filter(|v| !v.pass) {
            verdict.push_str(&format!(
                "FAIL core {} ({}): observed {} > bound {}\n",
                v.core, v.mode, v.max_latency_cycles, v.bound_cycles
            ));
        }
        for v in &report.violations {
            verdict.push_str(&format!("FAIL {v}\n"));
        }
    } else if !report.all_complete {
        let periods = report.total_slots / cfg.schedule.period_slots() as u64;
        verdict.push_str(&format!("INCOMPLETE after {periods} periods\n"));
    } else {
        verdict.push_str("PASS\n");
        for v in &verdicts {
            verdict.push_str(&format!(
                "core {} ({}): observed {} <= bound {}\n",
                v.core, v.mode, v.max_latency_cycles, v.bound_cycles
            ));
        }
    }
    write("verdict.txt", &verdict)?;
    print!("{verdict}");
    Ok(if bound_fail {
        EXIT_BOUND
    } else if !report.all_complete {
        EXIT_INCOMPLETE
    } else {
        0
    })
}

fn cmd_scenario(args: &ScenarioArgs) -> Result<u8, String> {
    let res = scenario::run_scenario(&args.name).map_err(|e| e.to_string())?;
    print!("{}", res.log);
    println!("way series: {}", res.way_series.join(","));
    match res.latency_slots {
        Some(l) => println!("completed: latency {l} slots"),
        None => println!("incomplete after {} periods", res.periods),
    }
    if res.matches_golden {
        println!("golden: match");
        Ok(0)
    } else {
        println!("golden: MISMATCH");
        for diff in res
            .log
            .lines()
            .zip(res.golden.lines())
            .filter(|(a, b)| a != b)
            .take(10)
        {
            println!("  got      {}", diff.0);
            println!("  expected {}", diff.1);
        }
        Ok(EXIT_PROTOCOL)
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| format!("{}: {e}", args.spec.display()))?;
    let spec = sweep::parse_spec(&text).map_err(|e| e.to_string())?;
    let out = sweep::run_sweep(&spec).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => std::fs::write(path, out.to_csv())
            .map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{}", out.to_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Bound(a) => cmd_bound(a).map(|()| 0),
        Cmd::Gen(a) => cmd_gen(a).map(|()| 0),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Scenario(a) => cmd_scenario(a),
        Cmd::Sweep(a) => cmd_sweep(a).map(|()| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
