//! Configuration, manifests, output formatting and the `smallcap` command line.
//!
//! Every run writes under `--out DIR`:
//! `results/<id>.json` (one record), `tables/<id>.csv` for sweeps, and
//! `manifests/<id>.json` listing the command line, resolved configuration,
//! seeds, budgets, wall time and the SHA-256 of each output.
//!
//! Exit codes: 0 success, 1 check violation or FAIL verdict, 2 invalid input
//! or configuration, 3 work budget exceeded, 4 I/O failure.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod output;

pub use cli::{run, Cli};
pub use config::{SweepFile, SweepKind, SyntheticConfig};
pub use manifest::{RunManifest, RunState};
pub use output::{fmt_num, round_sig, write_csv};

use crate::error::LabError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Invalid(_) => EXIT_INVALID,
        LabError::Budget { .. } => EXIT_BUDGET,
        LabError::Io(_) => EXIT_IO,
    }
}
