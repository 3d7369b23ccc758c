//! Configuration, file formats and command implementations for the `qsise`
//! binary. The estimation code lives in `qsise-core`.

pub mod commands;
pub mod config;
pub mod exec;
pub mod output;
pub mod svg;
pub mod verify;
