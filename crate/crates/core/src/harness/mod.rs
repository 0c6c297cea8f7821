//! Configuration, presets and the command implementations behind the CLI.

pub mod commands;
pub mod config;
pub mod presets;
pub mod selftest;

pub use commands::{fidelity_sweep, optimize, simulate, tomography};
pub use config::RunConfig;
pub use selftest::{selftest, SelftestReport};
