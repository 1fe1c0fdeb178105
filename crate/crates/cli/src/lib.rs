//! Experiment driver for the melody-grid disentanglement study: dataset
//! files, training checkpoints, the results table, and the plotting/report
//! surface behind the `gridtune` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_file;
pub mod error;
pub mod pianoroll;
pub mod svg;
pub mod table;
pub mod trainlog;
pub mod wire;
