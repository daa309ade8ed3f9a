// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Exhaustive verification of the noncontextual hidden-variable bounds.
//!
//! A deterministic model assigns each of the five observables a fixed value
//! in {0, 1}; convex mixtures over the 32 assignments cover every
//! noncontextual model. The search space is enumerated outright.

use crate::error::{Error, Result};

/// One deterministic value assignment a_1..a_5, each 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    values: [u8; 5],
}

impl Assignment {
    pub fn new(values: [u8; 5]) -> Result<Self> {
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput(
                "assignment values must be 0 or 1".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Assignment number `index` in the fixed enumeration order: bit k of the
    /// 5-bit integer is the value of a_(k+1).
    pub fn from_index(index: u8) -> Result<Self> {
        if index > 31 {
            return Err(Error::InvalidInput(format!(
                "assignment index {index} out of range 0..32"
            )));
        }
        let mut values = [0u8; 5];
        for (k, v) in values.iter_mut().enumerate() {
            *v = (index >> k) & 1;
        }
        Ok(Self { values })
    }

    pub fn index(&self) -> u8 {
        self.values.iter().enumerate().map(|(k, &v)| v << k).sum()
    }

    pub fn values(&self) -> [u8; 5] {
        self.values
    }

    /// True when no two cyclically adjacent observables are both 1.
    pub fn is_exclusive(&self) -> bool {
        (0..5).all(|i| self.values[i] * self.values[(i + 1) % 5] == 0)
    }

    /// Cyclic relabeling a_i -> a_(i+shift).
    pub fn rotated(&self, shift: usize) -> Self {
        let mut values = [0u8; 5];
        for (i, v) in values.iter_mut().enumerate() {
            *v = self.values[(i + shift) % 5];
        }
        Self { values }
    }
}

/// All 32 assignments in index order.
pub fn all_assignments() -> impl Iterator<Item = Assignment> {
    (0..32u8).map(|i| Assignment::from_index(i).expect("index < 32"))
}

/// Sum of values minus sum of cyclic products, the classical inequality
/// expression.
pub fn kcbs_classical_value(a: &Assignment) -> i32 {
    let v = a.values();
    let singles: i32 = v.iter().map(|&x| x as i32).sum();
    let pairs: i32 = (0..5).map(|i| (v[i] * v[(i + 1) % 5]) as i32).sum();
    singles - pairs
}

/// Exhaustive maximum of the classical expression; equals 2.
pub fn max_kcbs_over_assignments() -> i32 {
    all_assignments()
        .map(|a| kcbs_classical_value(&a))
        .max()
        .expect("non-empty enumeration")
}

/// Exhaustive minimum of the classical expression; equals 0.
pub fn min_kcbs_over_assignments() -> i32 {
    all_assignments()
        .map(|a| kcbs_classical_value(&a))
        .min()
        .expect("non-empty enumeration")
}

/// All assignments attaining the maximum, in index order.
pub fn kcbs_argmax() -> Vec<Assignment> {
    let max = max_kcbs_over_assignments();
    all_assignments()
        .filter(|a| kcbs_classical_value(a) == max)
        .collect()
}

/// Assignments satisfying the cyclic exclusivity constraint a_i a_(i+1) = 0.
pub fn exclusive_assignments() -> Vec<Assignment> {
    all_assignments().filter(Assignment::is_exclusive).collect()
}

/// Maximum of the plain sum under exclusivity: the independence number of
/// the 5-cycle, which is 2.
pub fn max_exclusive_sum() -> i32 {
    exclusive_assignments()
        .iter()
        .map(|a| a.values().iter().map(|&x| x as i32).sum())
        .max()
        .expect("the all-zero assignment is always exclusive")
}

/// A convex mixture over the 32 deterministic assignments.
#[derive(Debug, Clone)]
pub struct HvDistribution {
    weights: [f64; 32],
}

impl HvDistribution {
    pub fn new(weights: [f64; 32]) -> Result<Self> {
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidDistribution {
                reason: "weights must be finite and non-negative".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution {
                reason: format!("weights sum to {total}, expected 1"),
            });
        }
        Ok(Self { weights })
    }

    pub fn point_mass(a: &Assignment) -> Self {
        let mut weights = [0.0; 32];
        weights[a.index() as usize] = 1.0;
        Self { weights }
    }

    pub fn uniform() -> Self {
        Self {
            weights: [1.0 / 32.0; 32],
        }
    }

    pub fn weights(&self) -> &[f64; 32] {
        &self.weights
    }
}

/// Expectation of the classical expression under a mixture; never exceeds
/// the deterministic maximum.
pub fn mixture_value(d: &HvDistribution) -> f64 {
    all_assignments()
        .zip(d.weights().iter())
        .map(|(a, &w)| w * kcbs_classical_value(&a) as f64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent oracle: evaluate the expression straight from the bits of
    // the index, without going through Assignment.
    fn oracle_value(index: u8) -> i32 {
        let bit = |k: usize| ((index >> k) & 1) as i32;
        let mut total = 0;
        for k in 0..5 {
            total += bit(k) - bit(k) * bit((k + 1) % 5);
        }
        total
    }

    #[test]
    fn classical_value_examples() {
        let a = Assignment::new([1, 0, 1, 0, 0]).unwrap();
        assert_eq!(kcbs_classical_value(&a), 2);
        let b = Assignment::new([1, 1, 1, 1, 1]).unwrap();
        assert_eq!(kcbs_classical_value(&b), 0);
        let c = Assignment::new([0, 0, 0, 0, 0]).unwrap();
        assert_eq!(kcbs_classical_value(&c), 0);
    }

    #[test]
    fn classical_value_matches_bit_oracle_everywhere() {
        for i in 0..32u8 {
            let a = Assignment::from_index(i).unwrap();
            assert_eq!(kcbs_classical_value(&a), oracle_value(i), "index {i}");
        }
    }

    #[test]
    fn exhaustive_maximum_is_two_minimum_zero() {
        assert_eq!(max_kcbs_over_assignments(), 2);
        assert_eq!(min_kcbs_over_assignments(), 0);
    }

    #[test]
    fn argmax_set_from_enumeration_oracle() {
        // Oracle enumeration over raw indices.
        let oracle: Vec<u8> = (0..32u8).filter(|&i| oracle_value(i) == 2).collect();
        let got: Vec<u8> = kcbs_argmax().iter().map(Assignment::index).collect();
        assert_eq!(got, oracle);
        // The five two-one assignments with non-adjacent 1s are all present;
        // enumeration also finds the five three-one assignments with exactly
        // one adjacent pair, for ten maximizers total.
        for pair in [
            [1, 0, 1, 0, 0],
            [0, 1, 0, 1, 0],
            [0, 0, 1, 0, 1],
            [1, 0, 0, 1, 0],
            [0, 1, 0, 0, 1],
        ] {
            let a = Assignment::new(pair).unwrap();
            assert!(got.contains(&a.index()));
        }
        assert_eq!(got.len(), 10);
    }

    #[test]
    fn exclusivity_constraint() {
        assert_eq!(max_exclusive_sum(), 2);
        // empty set, 5 singletons, 5 non-adjacent pairs
        assert_eq!(exclusive_assignments().len(), 11);
        let infeasible = Assignment::new([1, 0, 1, 0, 1]).unwrap();
        assert!(!infeasible.is_exclusive(), "a_5 a_1 = 1 must be rejected");
    }

    #[test]
    fn mixture_point_mass_and_uniform() {
        let a = Assignment::new([1, 0, 1, 0, 0]).unwrap();
        assert_abs_diff_eq!(
            mixture_value(&HvDistribution::point_mass(&a)),
            2.0,
            epsilon = 1e-15
        );
        // brute-force average over the full enumeration
        let oracle_mean: f64 = (0..32u8).map(|i| oracle_value(i) as f64).sum::<f64>() / 32.0;
        assert_abs_diff_eq!(
            mixture_value(&HvDistribution::uniform()),
            oracle_mean,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(oracle_mean, 1.25, epsilon = 1e-15);
    }

    #[test]
    fn random_mixtures_respect_convexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let max = max_kcbs_over_assignments() as f64;
        for _ in 0..1000 {
            let mut w = [0.0f64; 32];
            let mut total = 0.0;
            for x in &mut w {
                *x = -rng.random_range(0.0f64..1.0).ln();
                total += *x;
            }
            for x in &mut w {
                *x /= total;
            }
            // renormalize exactly enough for the constructor
            let s: f64 = w.iter().sum();
            for x in &mut w {
                *x /= s;
            }
            let d = HvDistribution::new(w).unwrap();
            assert!(mixture_value(&d) <= max + 1e-12);
        }
    }

    #[test]
    fn cyclic_relabeling_preserves_value() {
        for i in 0..32u8 {
            let a = Assignment::from_index(i).unwrap();
            for shift in 0..5 {
                assert_eq!(
                    kcbs_classical_value(&a),
                    kcbs_classical_value(&a.rotated(shift))
                );
            }
        }
    }

    #[test]
    fn distribution_validation() {
        let mut w = [0.0; 32];
        w[0] = 0.5;
        assert!(HvDistribution::new(w).is_err());
        w[0] = -0.5;
        w[1] = 1.5;
        assert!(HvDistribution::new(w).is_err());
    }
}
