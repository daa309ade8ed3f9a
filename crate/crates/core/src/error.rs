// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A direction vector failed the unit-norm check.
    #[error("axis is not unit length: |v| = {norm}")]
    NonUnitAxis { norm: f64 },

    /// A state vector failed the normalization check.
    #[error("state is not normalized: sum of |a_k|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },

    /// A matrix expected to be Hermitian is not.
    #[error("matrix is not Hermitian: max |M - M^dag| element = {deviation:e}")]
    NotHermitian { deviation: f64 },

    /// A matrix failed the density-matrix invariants.
    #[error("not a density matrix: {reason}")]
    InvalidDensityMatrix { reason: String },

    /// A hidden-variable distribution failed validation.
    #[error("invalid hidden-variable distribution: {reason}")]
    InvalidDistribution { reason: String },

    /// Pulse synthesis did not reach the required fidelity.
    #[error("pulse synthesis failed: best fidelity {best_fidelity}")]
    SynthesisFailed { best_fidelity: f64 },

    /// Least-squares fit could not be completed.
    #[error("fit failed: {reason}")]
    FitFailed { reason: String },

    /// A chi grid does not satisfy the sweep preconditions.
    #[error("sweep grid rejected: {0}")]
    GridTooSparse(String),

    /// Configuration file or parameter problem.
    #[error("configuration error: {0}")]
    Config(String),

    /// Generic invalid argument.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
