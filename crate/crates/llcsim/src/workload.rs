//! Deterministic synthetic workloads: uniform random accesses over
//! per-core disjoint address ranges, plus the trace file format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cache::AccessOp;
use crate::engine::TraceAccess;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("range {range} bytes is not a multiple of the line size {line_size}")]
    MisalignedRange { range: u64, line_size: u64 },
    #[error("base address {base:#x} is not line-aligned")]
    MisalignedBase { base: u64 },
    #[error("stride {stride} smaller than range {range}: ranges would overlap")]
    Overlap { stride: u64, range: u64 },
    #[error("trace line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// `count` line-aligned accesses drawn uniformly from
/// `[base_addr, base_addr + range_bytes)`. The generator is ChaCha8 seeded
/// with `seed`, so output is identical across runs and hosts.
pub fn generate_trace(
    seed: u64,
    base_addr: u64,
    range_bytes: u64,
    count: usize,
    write_ratio: f64,
    line_size: u64,
) -> Result<Vec<TraceAccess>, WorkloadError> {
    if range_bytes == 0 || !range_bytes.is_multiple_of(line_size) {
        return Err(WorkloadError::MisalignedRange {
            range: range_bytes,
            line_size,
        });
    }
    if !base_addr.is_multiple_of(line_size) {
        return Err(WorkloadError::MisalignedBase { base: base_addr });
    }
    let lines = range_bytes / line_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let line = rng.gen_range(0..lines);
            let op = if rng.gen_bool(write_ratio) {
                AccessOp::Write
            } else {
                AccessOp::Read
            };
            TraceAccess {
                op,
                addr: base_addr + line * line_size,
            }
        })
        .collect())
}

/// Disjoint per-core base addresses at multiples of `stride`.
pub fn disjoint_ranges(
    num_cores: usize,
    range_bytes: u64,
    stride: u64,
) -> Result<Vec<u64>, WorkloadError> {
    if stride < range_bytes {
        return Err(WorkloadError::Overlap {
            stride,
            range: range_bytes,
        });
    }
    Ok((0..num_cores as u64).map(|k| k * stride).collect())
}

/// Render the `R|W|I <hex addr>` trace file format.
pub fn emit_trace(trace: &[TraceAccess]) -> String {
    let mut s = String::new();
    for a in trace {
        let op = match a.op {
            AccessOp::Read => 'R',
            AccessOp::Write => 'W',
            AccessOp::IFetch => 'I',
        };
        s.push_str(&format!("{op} {:#x}\n", a.addr));
    }
    s
}

/// Parse a trace file: one `R|W|I <hex addr>` per line, `#` comments.
pub fn parse_trace(text: &str) -> Result<Vec<TraceAccess>, WorkloadError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| WorkloadError::Parse { line: i + 1, msg };
        let (op, addr) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(format!("expected `R|W|I <hex addr>`, got `{line}`")))?;
        let op = match op {
            "R" => AccessOp::Read,
            "W" => AccessOp::Write,
            "I" => AccessOp::IFetch,
            other => return Err(err(format!("unknown op `{other}`"))),
        };
        let addr = addr.trim();
        let addr = addr.strip_prefix("0x").or_else(|| addr.strip_prefix("0X")).unwrap_or(addr);
        let addr =
            u64::from_str_radix(addr, 16).map_err(|e| err(format!("bad address: {e}")))?;
        out.push(TraceAccess { op, addr });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_trace(1, 0, 1024, 16, 0.0, 64).unwrap();
        let b = generate_trace(1, 0, 1024, 16, 0.0, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|x| x.op == AccessOp::Read));
    }

    #[test]
    fn addresses_stay_in_range_and_aligned() {
        let t = generate_trace(7, 4096, 1024, 500, 0.5, 64).unwrap();
        assert!(t.iter().all(|a| a.addr >= 4096 && a.addr < 4096 + 1024));
        assert!(t.iter().all(|a| a.addr % 64 == 0));
        // 1024B / 64B = 16 distinct lines at most.
        let mut lines: Vec<u64> = t.iter().map(|a| a.addr / 64).collect();
        lines.sort_unstable();
        lines.dedup();
        assert!(lines.len() <= 16);
    }

    #[test]
    fn write_ratio_extremes() {
        let w = generate_trace(3, 0, 1024, 64, 1.0, 64).unwrap();
        assert!(w.iter().all(|a| a.op == AccessOp::Write));
    }

    #[test]
    fn misalignment_rejected() {
        assert!(matches!(
            generate_trace(1, 0, 1000, 4, 0.5, 64),
            Err(WorkloadError::MisalignedRange { .. })
        ));
        assert!(matches!(
            generate_trace(1, 17, 1024, 4, 0.5, 64),
            Err(WorkloadError::MisalignedBase { .. })
        ));
    }

    #[test]
    fn disjoint_ranges_layout() {
        assert_eq!(disjoint_ranges(4, 2048, 4096).unwrap(), vec![0, 4096, 8192, 12288]);
        assert_eq!(disjoint_ranges(1, 2048, 4096).unwrap(), vec![0]);
        assert_eq!(disjoint_ranges(2, 2048, 2048).unwrap(), vec![0, 2048]);
        assert!(matches!(
            disjoint_ranges(2, 4096, 2048),
            Err(WorkloadError::Overlap { .. })
        ));
    }

    #[test]
    fn trace_round_trip() {
        let t = generate_trace(5, 0, 1024, 32, 0.5, 64).unwrap();
        let text = emit_trace(&t);
        assert_eq!(parse_trace(&text).unwrap(), t);
    }

    #[test]
    fn parse_handles_comments_and_errors() {
        let t = parse_trace("# header\nR 0x40 # inline\n\nW 80\nI 0XC0\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].addr, 0x40);
        assert_eq!(t[1].addr, 0x80);
        assert_eq!(t[2].op, AccessOp::IFetch);
        assert!(matches!(
            parse_trace("Q 0x40"),
            Err(WorkloadError::Parse { line: 1, .. })
        ));
    }
}
