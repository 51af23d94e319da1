//! Library half of the `vt` tool: configuration loading, analysis-context
//! assembly from artifact files, report emission, and a small JSON schema
//! checker used to keep the report format honest.
//!
//! The binary in `main.rs` is a thin subcommand dispatcher over this crate
//! plus `vt-core` and `vt-net`.

pub mod config;
pub mod context;
pub mod report;
pub mod schema;
