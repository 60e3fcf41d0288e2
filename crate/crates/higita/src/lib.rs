//! File formats, the training driver, evaluation, and the command-line
//! interface around `higita-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod container;
pub mod dataset;
pub mod evaluate;
pub mod files;
pub mod gallery_file;
pub mod pgm;
pub mod trainer;

pub use higita_core;
