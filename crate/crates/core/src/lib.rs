//! Kirkwood-Dirac (KD) quasi-probability toolkit for finite-dimensional
//! quantum systems.
//!
//! The KD distribution represents a quantum state as a complex-valued joint
//! quasi-probability over the eigenvalue tuples of (generally non-commuting)
//! observables. This crate constructs the distribution in its standard,
//! extended, and POVM-generalised forms, and builds on it:
//!
//! - [`hilbert`]: dense complex linear algebra, bases, POVMs, spectral tools;
//! - [`kd`]: KD distributions, symbols, Bayes-style conditioning, state
//!   reconstruction, and operator ordering (quantisation);
//! - [`nonclassicality`]: non-positivity measures, positivity tests,
//!   positivity-geometry and incompatibility witnesses;
//! - [`weak`]: weak values, Gaussian-meter simulation, weak-value
//!   amplification, and an ancilla circuit that measures KD entries;
//! - [`metrology`]: Fisher information with and without post-selection;
//! - [`thermo`]: work quasi-probability distributions, fluctuation theorems,
//!   and OTOC scrambling diagnostics on spin chains;
//! - [`foundations`]: Leggett-Garg correlators, consistent histories, and the
//!   KCBS contextuality scenario.
//!
//! ħ = 1 throughout.

pub mod error;
pub mod foundations;
pub mod hilbert;
pub mod kd;
pub mod metrology;
pub mod nonclassicality;
mod optim;
pub mod thermo;
pub mod weak;

pub use error::{KdError, Result};
