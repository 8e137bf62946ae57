//! File formats, scenarios and the command line for `notchprobe`.

pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;
pub mod trace_io;
