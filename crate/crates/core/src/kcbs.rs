// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! The regular-pentagram measurement set and its ideal quantum predictions.
//!
//! Five directions l_1..l_5 at polar angle theta = arccos(5^(-1/4)) and
//! azimuths phi_n = 0.8 (n-1) pi are cyclically orthogonal: l_n . l_(n+1) = 0
//! with l_6 = l_1. The symmetry-axis state psi (here +z) sees each projector
//! with probability 1/sqrt(5), so the five-term sum reaches sqrt(5) > 2.

use nalgebra::Rotation3;

use crate::qutrit::{neutrally_polarized_state, projector, Direction, QuantumState, QutritState};

/// The five cyclically orthogonal directions plus the symmetry axis.
#[derive(Debug, Clone, Copy)]
pub struct PentagramSet {
    directions: [Direction; 5],
    psi_axis: Direction,
    theta: f64,
    phis: [f64; 5],
}

impl PentagramSet {
    /// Assemble a set from explicit directions, e.g. a deliberately perturbed
    /// pentagram. `theta`/`phis` are recomputed relative to `psi_axis` only
    /// when it is the +z axis; callers of [`build_pentagram`] get exact values.
    pub fn from_directions(directions: [Direction; 5], psi_axis: Direction) -> Self {
        let theta = directions[0].dot(&psi_axis).acos();
        let mut phis = [0.0; 5];
        for (phi, d) in phis.iter_mut().zip(directions.iter()) {
            *phi = d.y().atan2(d.x());
        }
        Self {
            directions,
            psi_axis,
            theta,
            phis,
        }
    }

    pub fn directions(&self) -> &[Direction; 5] {
        &self.directions
    }

    /// Direction l_i, 1-based as in the construction.
    pub fn direction(&self, i: usize) -> Direction {
        assert!((1..=5).contains(&i), "pentagram index must be 1..=5");
        self.directions[i - 1]
    }

    pub fn psi_axis(&self) -> Direction {
        self.psi_axis
    }

    pub fn psi_state(&self) -> QutritState {
        neutrally_polarized_state(self.psi_axis)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phis(&self) -> &[f64; 5] {
        &self.phis
    }

    /// Cyclic neighbor pairs as 0-based index pairs.
    pub fn cyclic_pairs() -> [(usize, usize); 5] {
        [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]
    }

    /// Largest |l_i . l_(i+1)| over the five cyclic pairs.
    pub fn max_cyclic_dot(&self) -> f64 {
        Self::cyclic_pairs()
            .iter()
            .map(|&(i, j)| self.directions[i].dot(&self.directions[j]).abs())
            .fold(0.0, f64::max)
    }

    /// Apply one common rotation to all five directions and the axis.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        let mut directions = self.directions;
        for d in &mut directions {
            *d = d.rotated(rotation);
        }
        Self {
            directions,
            psi_axis: self.psi_axis.rotated(rotation),
            theta: self.theta,
            phis: self.phis,
        }
    }

    /// Replace one direction (1-based index), e.g. to model a misaligned
    /// preparation.
    pub fn with_direction(&self, i: usize, dir: Direction) -> Self {
        assert!((1..=5).contains(&i), "pentagram index must be 1..=5");
        let mut out = *self;
        out.directions[i - 1] = dir;
        out
    }
}

/// Build the exact pentagram in the frame where psi is the +z axis.
pub fn build_pentagram() -> PentagramSet {
    let theta = (5.0_f64.powf(-0.25)).acos();
    let mut phis = [0.0; 5];
    let mut directions = [Direction::z_axis(); 5];
    for n in 0..5 {
        let phi = 0.8 * (n as f64) * std::f64::consts::PI;
        phis[n] = phi;
        directions[n] = Direction::from_spherical(theta, phi);
    }
    PentagramSet {
        directions,
        psi_axis: Direction::z_axis(),
        theta,
        phis,
    }
}

/// Ideal quantum prediction for the five-observable sum.
#[derive(Debug, Clone, Copy)]
pub struct KcbsPrediction {
    /// <L_i> for i = 1..5.
    pub single_expectations: [f64; 5],
    /// Symmetrized <L_i L_(i+1)> for the five cyclic pairs.
    pub pair_correlations: [f64; 5],
    /// Sum of singles minus sum of pair correlations.
    pub kcbs_value: f64,
}

/// Evaluate the inequality's left-hand side in `state`.
///
/// Pair correlations use Re(<l_i|rho|l_(i+1)> <l_(i+1)|l_i>), which reduces
/// to the pure-state expression and vanishes whenever the neighbors are
/// exactly orthogonal.
pub fn quantum_prediction<S: QuantumState>(set: &PentagramSet, state: &S) -> KcbsPrediction {
    let states: Vec<QutritState> = set
        .directions()
        .iter()
        .map(|&d| neutrally_polarized_state(d))
        .collect();

    let mut single_expectations = [0.0; 5];
    for (i, &d) in set.directions().iter().enumerate() {
        single_expectations[i] = state.expectation(&projector(d));
    }

    let mut pair_correlations = [0.0; 5];
    for (k, &(i, j)) in PentagramSet::cyclic_pairs().iter().enumerate() {
        let rho_elem = state.matrix_element(&states[i], &states[j]);
        let overlap = states[j].inner(&states[i]);
        pair_correlations[k] = (rho_elem * overlap).re;
    }

    let kcbs_value =
        single_expectations.iter().sum::<f64>() - pair_correlations.iter().sum::<f64>();
    KcbsPrediction {
        single_expectations,
        pair_correlations,
        kcbs_value,
    }
}
