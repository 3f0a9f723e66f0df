//! Spectral flow of planar Dirac operators with local boundary conditions
//! under Aharonov-Bohm flux insertion.
//!
//! The family `D_t = D_0 - s(t) sigma . grad(phi)` on a disk with circular
//! holes is discretized either by an exact angular reduction on concentric
//! annuli ([`radial`]) or by a Wilson-regularized lattice with mass walls
//! ([`lattice`]). [`flow`] counts the net number of eigenvalues crossing zero
//! and [`torus`] counts the index of the clutched operator `d/dt + A(t)`.

pub mod domain;
pub mod error;
pub mod eigen;
pub mod flow;
pub mod gauge;
pub mod harness;
pub mod lattice;
pub mod radial;
pub mod torus;

pub use error::{Error, Result};
