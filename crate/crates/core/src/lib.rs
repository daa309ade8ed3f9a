// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Desk-scale simulator and verifier for the single-spin-1 contextuality
//! test: the KCBS pentagram inequality on an NV-center qutrit.
//!
//! The crate covers the full chain of the argument:
//!
//! - [`qutrit`]: exact spin-1 algebra — operators, neutrally polarized
//!   states, projectors, expectations, basis changes.
//! - [`kcbs`]: the regular-pentagram measurement set; the ideal quantum
//!   value sqrt(5) of the five-term sum.
//! - [`hidden_variable`]: exhaustive enumeration showing every
//!   noncontextual assignment stays at or below 2.
//! - [`nv`]: the NV ground-manifold level structure and rotating-frame
//!   drive Hamiltonian.
//! - [`pulse`]: pulse programs, the preparation compiler and its
//!   phase-inverted reversal, and ensemble-averaged noisy evolution.
//! - [`readout`]: photon-count readout, chi sweeps, sinusoid fits, and the
//!   orthogonality/projector experiments.
//! - [`analysis`]: sums, errors, sigma violation, and the Cauchy-Schwarz
//!   robustness bound for imperfect orthogonality.
//! - [`experiment`]: configuration and the end-to-end pipeline.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod hidden_variable;
pub mod kcbs;
pub mod nv;
pub mod pulse;
pub mod qutrit;
pub mod readout;

pub use error::{Error, Result};
