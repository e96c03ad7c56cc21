//! Command line and HTTP front ends for rulepatch sessions.

pub mod cli;
pub mod error;
pub mod server;
pub mod session;
