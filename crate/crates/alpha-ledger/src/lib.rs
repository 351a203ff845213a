//! Simulation lab, file formats, session service and command-line interface
//! for cost-aware α-investing, built on [`alpha_ledger_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod history;
pub mod service;
pub mod simlab;

pub use error::{Error, Result};
