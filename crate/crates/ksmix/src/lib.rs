//! Configuration, scenario orchestration and file formats for the `ksmix` simulator.
//!
//! * [`config`]: the `key = value` run configuration.
//! * [`scenarios`]: the seven experiment drivers and their PASS/FAIL verdicts.
//! * [`io`]: CSV series, `KSMX` snapshots and the hashed manifest.

pub mod config;
pub mod io;
pub mod scenarios;
