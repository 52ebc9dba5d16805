pub mod cli;
pub mod corpus;
pub mod edbsp;
pub mod error;
pub mod genmodel;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod seed;
pub mod sketch;
pub mod synth;
