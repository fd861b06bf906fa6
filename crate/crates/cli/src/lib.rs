//! Configuration, file formats and subcommands of the `tkwfp` command-line tool.

pub mod commands;
pub mod config;
pub mod io;
