//! Library half of the `joinopt` command-line tool.
//!
//! The binary in `main.rs` only parses flags and maps outcomes to exit
//! codes; everything with behavior worth testing lives here: benchmark CSV
//! rows and their normalized report ([`bench`]), the randomized oracle
//! suites behind the `verify` subcommand ([`verify`]), and the JSON plan
//! dump of `optimize` ([`dump`]).

pub mod bench;
pub mod dump;
pub mod verify;

/// Stable exit codes for scripts: success, usage error (owned by the flag
/// parser), optimizer timeout, verification failure.
pub mod exit_code {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const TIMEOUT: u8 = 3;
    pub const VERIFY_FAILED: u8 = 4;
}
