//! Adaptive-threshold one-bit compressed sensing.
//!
//! One-bit measurements `y_i = sign(<a_i, x> - tau_i)` lose all magnitude
//! information when the thresholds are zero, and non-adaptive thresholds cap
//! the error decay at a polynomial rate in the oversampling factor
//! `lambda = m / (s log(n/s))`.  Choosing the thresholds adaptively, batch by
//! batch, drives the reconstruction error down exponentially in `lambda`.
//!
//! The crate provides:
//!
//! * [`rng`] — deterministic counter-based Gaussian sampling, so every
//!   experiment is a pure function of its seeds;
//! * [`sparse`] — hard-thresholding primitives and the scalar maps used by
//!   the recovery schemes;
//! * [`measure`] — Gaussian measurement ensembles, the thresholded-sign
//!   quantizer with pre-quantization error and sign flips, and the
//!   serialized record the decoder consumes;
//! * [`solver`] — a first-order primal-dual method for l1 minimization over
//!   sign-cone or equality constraints;
//! * [`socp`], [`ht`] — the two order-one recovery schemes (convex and
//!   hard-thresholding based);
//! * [`pipeline`] — the adaptive quantizer/decoder loop with its geometric
//!   radius schedule;
//! * [`diagnostics`] — Monte Carlo checks of the random-matrix properties
//!   the schemes rely on;
//! * [`experiment`] — seeded, reproducible experiment sweeps with CSV and
//!   binary fixture output.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod ht;
pub mod measure;
pub mod pipeline;
pub mod rng;
pub mod socp;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use rng::RngSeed;
pub use sparse::{Sign, SparseVector};
