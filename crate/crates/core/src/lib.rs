//! Latent role trajectories for online contributors.
//!
//! The pipeline turns per-user, per-quarter activity counts over a namespace
//! vocabulary into a time-sliced corpus, fits a dynamic topic model whose
//! topics act as behavioural roles, clusters per-user role trajectories with
//! NNDSVD-initialised NMF, and predicts departure from sliding-window
//! features of role change.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the command line
//! and plotting live in the `roletrack` crate.
#![no_std]

extern crate alloc;

pub mod churn;
pub mod classify;
pub mod corpus;
pub mod dtm;
mod error;
pub mod evaluate;
pub mod hungarian;
pub mod ingest;
pub mod math;
pub mod nmf;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
