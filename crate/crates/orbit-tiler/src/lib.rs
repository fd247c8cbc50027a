//! Desk-scale experiments with orbit tilings of measure-preserving
//! Z-actions.
//!
//! The library builds concrete systems (weighted finite permutations,
//! irrational circle rotations, Bernoulli coordinate shifts), cuts their
//! orbits into windows, drops sparse marker sections on them, tiles the
//! stretches between markers greedily by segments whose averages clear a
//! threshold, and verifies the resulting averaging identities and
//! inequality chains — exactly on finite systems, in binary64 on sampled
//! ones.
//!
//! The `orbit-tiler` binary drives the same machinery from plain-text
//! configs and writes CSV artifacts; see the crate README.

pub mod averages;
pub mod config;
pub mod fixed;
pub mod harness;
pub mod report;
pub mod rng;
pub mod runner;
pub mod sections;
pub mod systems;
pub mod tiling;
pub mod value;

pub use value::Scalar;
