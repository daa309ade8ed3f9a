// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Aggregation of the measurement results into the inequality test: sums,
//! propagated errors, sigma violation, mean residual overlap, and the
//! Cauchy-Schwarz robustness bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kcbs::PentagramSet;
use crate::qutrit::{neutrally_polarized_state, projector, QuantumState};

/// Upper bound for noncontextual models.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// sqrt(5), the ideal quantum value of the five-term sum.
pub fn quantum_ideal() -> f64 {
    5.0_f64.sqrt()
}

/// Sum of the five estimates with quadrature-combined error.
pub fn kcbs_sum(estimates: &[(f64, f64); 5]) -> Result<(f64, f64)> {
    for &(v, e) in estimates {
        if !v.is_finite() || !e.is_finite() || e < 0.0 {
            return Err(Error::InvalidInput(
                "estimates must be finite with non-negative errors".into(),
            ));
        }
    }
    let sum = estimates.iter().map(|&(v, _)| v).sum();
    let err = estimates.iter().map(|&(_, e)| e * e).sum::<f64>().sqrt();
    Ok((sum, err))
}

/// Number of standard deviations by which the sum exceeds the classical
/// bound.
pub fn sigma_violation(sum: (f64, f64)) -> Result<f64> {
    let (value, error) = sum;
    if !value.is_finite() || error.is_nan() || error <= 0.0 {
        return Err(Error::InvalidInput(
            "sigma violation needs a positive error".into(),
        ));
    }
    Ok((value - CLASSICAL_BOUND) / error)
}

/// Mean residual squared overlap of the five nominally orthogonal neighbor
/// pairs.
pub fn epsilon(overlaps: &[f64; 5]) -> Result<f64> {
    if overlaps.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidInput(
            "overlaps must be finite and non-negative".into(),
        ));
    }
    Ok(overlaps.iter().sum::<f64>() / 5.0)
}

/// Lower bound on the inequality's left-hand side under imperfect
/// orthogonality: sum(L_i) - sqrt(5 eps sum(L_i L_(i+1))), cyclic.
pub fn robust_bound(li: &[f64; 5], eps: f64) -> f64 {
    let cross: f64 = (0..5).map(|i| li[i] * li[(i + 1) % 5]).sum();
    let sum: f64 = li.iter().sum();
    sum - (5.0 * eps * cross).sqrt()
}

/// Verify |<l_i| rho |l_(i+1)>| <= sqrt(<L_i><L_(i+1)>) for all five cyclic
/// pairs; a theorem for valid density matrices, so failures indicate bugs.
pub fn cauchy_schwarz_check<S: QuantumState>(state: &S, set: &PentagramSet) -> bool {
    let states: Vec<_> = set
        .directions()
        .iter()
        .map(|&d| neutrally_polarized_state(d))
        .collect();
    let li: Vec<f64> = set
        .directions()
        .iter()
        .map(|&d| state.expectation(&projector(d)))
        .collect();
    PentagramSet::cyclic_pairs().iter().all(|&(i, j)| {
        let lhs = state.matrix_element(&states[i], &states[j]).norm();
        let rhs = (li[i].max(0.0) * li[j].max(0.0)).sqrt();
        lhs <= rhs + 1e-10
    })
}

/// Full inequality report, serializable to the result JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub li: [f64; 5],
    pub li_err: [f64; 5],
    pub epsilon: f64,
    pub epsilon_err: f64,
    pub sum: f64,
    pub sum_err: f64,
    pub sigma: f64,
    pub robust_bound: f64,
    pub classical_bound: f64,
    pub quantum_ideal: f64,
}

impl ExperimentReport {
    /// Aggregate the raw per-observable estimates.
    ///
    /// The mean overlap keeps its sign (drift can push individual estimates
    /// below zero; they average out), while the robustness bound uses the
    /// clamped values its derivation assumes: eps at least 0 and projector
    /// expectations inside [0, 1].
    pub fn from_measurements(
        li_estimates: &[(f64, f64); 5],
        overlap_estimates: &[(f64, f64); 5],
    ) -> Result<Self> {
        let (sum, sum_err) = kcbs_sum(li_estimates)?;
        let sigma = sigma_violation((sum, sum_err))?;

        let overlaps: Vec<f64> = overlap_estimates.iter().map(|&(v, _)| v).collect();
        let eps = overlaps.iter().sum::<f64>() / 5.0;
        let eps_err = {
            let var = overlaps.iter().map(|v| (v - eps) * (v - eps)).sum::<f64>() / 4.0;
            var.sqrt()
        };

        let mut li = [0.0; 5];
        let mut li_err = [0.0; 5];
        let mut li_clamped = [0.0; 5];
        for (k, &(v, e)) in li_estimates.iter().enumerate() {
            li[k] = v;
            li_err[k] = e;
            li_clamped[k] = v.clamp(0.0, 1.0);
        }
        let robust = robust_bound(&li_clamped, eps.max(0.0));

        Ok(Self {
            li,
            li_err,
            epsilon: eps,
            epsilon_err: eps_err,
            sum,
            sum_err,
            sigma,
            robust_bound: robust,
            classical_bound: CLASSICAL_BOUND,
            quantum_ideal: quantum_ideal(),
        })
    }

    /// The headline result: does the lower bound still exceed the classical
    /// bound?
    pub fn violated(&self) -> bool {
        self.robust_bound > self.classical_bound
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("bad report JSON: {e}")))
    }
}
