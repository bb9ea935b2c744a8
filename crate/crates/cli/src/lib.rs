//! Command line and HTTP control surface for the permission broker.

pub mod commands;
pub mod config;
pub mod prompt;
pub mod serve;
