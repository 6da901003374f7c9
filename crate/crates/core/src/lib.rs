pub mod baselines;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod selfcheck;
pub mod synth;
pub mod trainer;
