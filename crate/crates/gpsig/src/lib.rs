//! File formats, verification suites, experiment drivers and the command-line
//! interface around `gpsig-core`.

pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod io;
pub mod report;
pub mod verify;
