//! File formats, checkpoints, reports and the command-line front end for
//! `dmtg-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod io;
pub mod report;
