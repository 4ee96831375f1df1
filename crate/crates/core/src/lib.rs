//! Scalar function extrapolation with transformers.
//!
//! Two decoder-style models over noisy scalar curves: a baseline that reads
//! `(x, y)` observation tokens and predicts the next value directly, and a
//! relational variant that reads only pairwise signed differences of values
//! and predicts the next row of the similarity matrix, recovering the value
//! (and an uncertainty) through an ensemble readout. Both support a learned
//! sigmoidal attention window that gates attention weights by positional
//! distance.
//!
//! The crate is self-contained: a minimal reverse-mode tensor engine,
//! curve generators for line/sine/RBF families, training and evaluation
//! loops, a named-tensor checkpoint format and an invariant-check suite.

pub mod checkpoint;
pub mod codec;
pub mod curve;
pub mod eval;
pub mod gating;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod train;
pub mod verify;

pub use scalar::Scalar;
