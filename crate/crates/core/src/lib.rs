//! Active emergency vehicle detection over tracked 3D boxes.
//!
//! Tracks are projected into square image crops ([`geometry`]), classified
//! per frame ([`classifier`]), and voted over time ([`smoother`]). A scene
//! simulator ([`simulator`]) supplies labeled data, and the
//! [`augmentation`] and [`data_engine`] modules grow and rebalance it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmentation;
pub mod bench;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod data_engine;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod simulator;
pub mod smoother;
