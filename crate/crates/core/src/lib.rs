//! Change-induced regret proxies for Markov decision processes.
//!
//! The crate measures how far apart two MDPs are (a 1-Wasserstein distance
//! between their transition outcome distributions) and checks that distance
//! against the normalized regret an optimal policy suffers when moved from
//! one MDP to the other. Everything runs on the `SimpleGrid` family in
//! [`gridworld`], where both quantities can be computed exactly.
//!
//! Module map:
//!
//! - [`gridworld`]: grid MDP variants, dynamics and state-action enumeration.
//! - [`policy`]: optimal/pessimal tabular policies and exact returns.
//! - [`sopr`]: scaled optimal policy regret between two MDPs.
//! - [`transport`]: exact W1 between equal-size point clouds.
//! - [`chirp`]: empirical transition sets, exact and sampled distances.
//! - [`analysis`]: correlation, binning and monotone spline calibration.
//! - [`clustering`]: PAM k-medoids over distance matrices.
//! - [`lifelong`]: interleaved-task policy reuse benchmark.
//! - [`io`]: file formats shared by the CLI and the FFI layer.
//! - [`cli`]: command definitions and runners behind the `chirp` binary.

pub mod analysis;
pub mod chirp;
pub mod cli;
pub mod clustering;
mod error;
pub mod gridworld;
pub mod io;
pub mod lifelong;
pub mod policy;
pub mod sopr;
pub mod transport;

pub use error::{Error, Result};
