//! Canned system configurations used by the CLI, tests and sweeps.

use crate::config::{load_config_str, SharingMode, SystemConfig};

/// 4-core reference system, one shared 1-set x 16-way best-effort
/// partition (the worst-case-latency experiment setup).
pub const REFERENCE_EVAL_NSS: &str = r#"
cores = 4
slot_width = 50
line_size = 64
pwb_capacity = 4
schedule = [0, 1, 2, 3]
l1i = { sets = 2, ways = 2 }
l1d = { sets = 2, ways = 2 }
l2 = { sets = 16, ways = 4 }
llc = { sets = 32, ways = 16 }

[[partitions]]
sets = "0..1"
ways = 65535
sharers = [0, 1, 2, 3]
mode = "nss"
"#;

/// Same geometry with the set sequencer enabled.
pub const REFERENCE_EVAL_SS: &str = r#"
cores = 4
slot_width = 50
line_size = 64
pwb_capacity = 4
schedule = [0, 1, 2, 3]
l1i = { sets = 2, ways = 2 }
l1d = { sets = 2, ways = 2 }
l2 = { sets = 16, ways = 4 }
llc = { sets = 32, ways = 16 }

[[partitions]]
sets = "0..1"
ways = 65535
sharers = [0, 1, 2, 3]
mode = "ss"
"#;

/// Same geometry with one private 1-set x 16-way partition per core.
pub const REFERENCE_EVAL_P: &str = r#"
cores = 4
slot_width = 50
line_size = 64
pwb_capacity = 4
schedule = [0, 1, 2, 3]
l1i = { sets = 2, ways = 2 }
l1d = { sets = 2, ways = 2 }
l2 = { sets = 16, ways = 4 }
llc = { sets = 32, ways = 16 }

[[partitions]]
sets = "0..1"
ways = 65535
sharers = [0]
mode = "private"

[[partitions]]
sets = "1..2"
ways = 65535
sharers = [1]
mode = "private"

[[partitions]]
sets = "2..3"
ways = 65535
sharers = [2]
mode = "private"

[[partitions]]
sets = "3..4"
ways = 65535
sharers = [3]
mode = "private"
"#;

/// The reference system in the requested sharing mode.
pub fn reference_eval(mode: SharingMode) -> SystemConfig {
    let text = match mode {
        SharingMode::BestEffort => REFERENCE_EVAL_NSS,
        SharingMode::Sequenced => REFERENCE_EVAL_SS,
        SharingMode::Private => REFERENCE_EVAL_P,
    };
    load_config_str(text).expect("preset config is valid")
}

/// Fixed-total-capacity comparison setup: `num_cores * sets_per_core`
/// LLC sets and 16 ways are either split evenly into private partitions
/// or pooled into one shared partition. The private L2 is sized so that
/// every line the LLC lets a core keep also fits in its L2 without set
/// conflicts; the comparison then isolates the effect of LLC partitioning
/// instead of mixing in L2 conflict noise.
pub fn fixed_capacity(mode: SharingMode, num_cores: usize, sets_per_core: usize) -> SystemConfig {
    let schedule: Vec<String> = (0..num_cores).map(|c| c.to_string()).collect();
    let mut text = format!(
        "cores = {num_cores}\nslot_width = 50\nline_size = 64\npwb_capacity = {num_cores}\nschedule = [{}]\n\
         l1i = {{ sets = 2, ways = 2 }}\nl1d = {{ sets = 2, ways = 2 }}\n\
         l2 = {{ sets = 16, ways = 16 }}\nllc = {{ sets = 32, ways = 16 }}\n",
        schedule.join(", ")
    );
    match mode {
        SharingMode::Private => {
            for c in 0..num_cores {
                text.push_str(&format!(
                    "\n[[partitions]]\nsets = \"{}..{}\"\nways = 65535\nsharers = [{c}]\nmode = \"private\"\n",
                    c * sets_per_core,
                    (c + 1) * sets_per_core
                ));
            }
        }
        SharingMode::BestEffort | SharingMode::Sequenced => {
            let sharers: Vec<String> = (0..num_cores).map(|c| c.to_string()).collect();
            text.push_str(&format!(
                "\n[[partitions]]\nsets = \"0..{}\"\nways = 65535\nsharers = [{}]\nmode = \"{mode}\"\n",
                num_cores * sets_per_core,
                sharers.join(", ")
            ));
        }
    }
    load_config_str(&text).expect("generated config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for mode in [
            SharingMode::Private,
            SharingMode::BestEffort,
            SharingMode::Sequenced,
        ] {
            let cfg = reference_eval(mode);
            assert_eq!(cfg.num_cores, 4);
            assert_eq!(cfg.partitions[0].mode, mode);
            assert_eq!(cfg.partitions[0].capacity_lines(), 16);
        }
    }

    #[test]
    fn fixed_capacity_split() {
        let p = fixed_capacity(SharingMode::Private, 2, 2);
        assert_eq!(p.partitions.len(), 2);
        assert_eq!(p.partitions[0].capacity_lines(), 32);
        let ss = fixed_capacity(SharingMode::Sequenced, 2, 2);
        assert_eq!(ss.partitions.len(), 1);
        assert_eq!(ss.partitions[0].capacity_lines(), 64);
        assert_eq!(ss.partitions[0].sharers, vec![0, 1]);
    }
}
