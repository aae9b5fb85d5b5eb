//! Effective master equations for a driven, weakly anharmonic qubit coupled to
//! a readout cavity.
//!
//! The pipeline runs normal modes → classical displacement → quartic
//! expansion and first-order generator → frequency-binned dressed collapse
//! operators → Lindblad propagation → rate extraction.

pub mod algebra;
pub mod analysis;
pub mod circuit;
pub mod config;
pub mod displacement;
pub mod eme;
pub mod lindblad;
pub mod sw;
