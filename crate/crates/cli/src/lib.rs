//! Pipeline stages and the experiment harness behind the `screwdesign`
//! binary.

pub mod commands;
pub mod config;
pub mod harness;

pub use config::Config;
