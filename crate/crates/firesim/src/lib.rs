//! Command line runner and HTTP control API for the fire-alert simulator.

pub mod server;
