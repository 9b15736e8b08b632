//! Causal reinforcement learning benchmark.
//!
//! The crate bundles a small autodiff engine ([`numcore`]), benchmark
//! environments ([`envs`]), the learning algorithms built on them ([`rl`],
//! [`cae`], [`pace`], [`explain`]), exact tabular identification operators
//! ([`causal`]) and the experiment runner used by the `crlbench` CLI ([`exp`]).

pub mod cae;
pub mod causal;
pub mod envcore;
pub mod envs;
pub mod exp;
pub mod explain;
pub mod numcore;
pub mod pace;
pub mod rl;
