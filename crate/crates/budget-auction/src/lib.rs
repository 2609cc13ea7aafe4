//! File formats, experiment drivers and the command line for the
//! `budget-auction-core` simulator.

pub mod cli;
pub mod format;
pub mod run;
pub mod sweep;
pub mod verify;
