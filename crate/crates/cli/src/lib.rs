//! Command-line driver for `gridnorm`: configuration, output writers and
//! the `normalize`, `bench`, `error`, `pipeline` and `figure` commands.

pub mod commands;
pub mod config;
pub mod output;
