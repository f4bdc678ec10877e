//! Simulation, enhancement and scoring harness around the `gmmse` filters.

pub mod audio;
pub mod config;
pub mod experiments;
pub mod pipeline;
pub mod report;
pub mod speech;
