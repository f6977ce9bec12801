//! File formats, the remote writer, concurrent runs and reporting on top of
//! `tfts-core`. The `tfts` binary wraps these.

pub mod io;
pub mod remote;
pub mod report;
pub mod runner;
pub mod sweep;
