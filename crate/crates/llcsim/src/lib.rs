//! Slot-accurate simulator of a multicore memory hierarchy sharing LLC
//! partitions over a TDM bus, plus the closed-form worst-case-latency
//! bounds the simulator is checked against.

pub mod analysis;
pub mod bus;
pub mod cache;
pub mod choice;
pub mod config;
pub mod engine;
pub mod llc;
pub mod oracle;
pub mod presets;
pub mod replacement;
pub mod scenario;
pub mod sweep;
pub mod workload;
