// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Exact complex linear algebra for the spin-1 ground manifold.
//!
//! Every state and operator carries a [`Basis`] tag. The Zeeman basis orders
//! the levels as (|+1>, |0>, |-1>); the Cartesian basis {|x>, |y>, |z>} is
//! reached through a fixed unitary. The zero-eigenvalue state of the spin
//! component along a unit vector l = (x, y, z) — the neutrally polarized
//! state |l> — has amplitudes (x, y, z) in the Cartesian basis, so real
//! three-vectors and these states can be identified.
//!
//! Mixed-basis operations convert automatically; nothing errors on a basis
//! mismatch.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Vector3};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance for algebraic identities (normalization, Hermiticity, traces).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance for eigensolver-backed checks.
pub const EIGEN_TOL: f64 = 1e-10;

#[inline]
fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Basis tag carried by states and operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Basis {
    /// {|x>, |y>, |z>}, the real representation of neutrally polarized states.
    Cartesian,
    /// {|+1>, |0>, |-1>}, eigenbasis of S_z, in that row/column order.
    Zeeman,
}

/// Unitary mapping Cartesian-basis amplitudes to Zeeman-basis amplitudes.
///
/// Columns are |x>, |y>, |z> expressed in the Zeeman basis:
/// |x> = (|-1> - |+1>)/sqrt(2), |y> = i(|-1> + |+1>)/sqrt(2), |z> = |0>.
fn cartesian_to_zeeman() -> Matrix3<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Matrix3::new(
        c(-s),
        C64::new(0.0, s),
        c(0.0),
        c(0.0),
        c(0.0),
        c(1.0),
        c(s),
        C64::new(0.0, s),
        c(0.0),
    )
}

fn convert_vector(v: &Vector3<C64>, from: Basis, to: Basis) -> Vector3<C64> {
    match (from, to) {
        (Basis::Cartesian, Basis::Zeeman) => cartesian_to_zeeman() * v,
        (Basis::Zeeman, Basis::Cartesian) => cartesian_to_zeeman().adjoint() * v,
        _ => *v,
    }
}

fn convert_matrix(m: &Matrix3<C64>, from: Basis, to: Basis) -> Matrix3<C64> {
    let u = cartesian_to_zeeman();
    match (from, to) {
        (Basis::Cartesian, Basis::Zeeman) => u * m * u.adjoint(),
        (Basis::Zeeman, Basis::Cartesian) => u.adjoint() * m * u,
        _ => *m,
    }
}

/// A unit vector in real three-space.
///
/// Unit norm is enforced at construction, so downstream operators can assume
/// it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    /// Build from components, rejecting non-unit vectors.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        let deviation = (norm - 1.0).abs();
        // NaN components must land in the error branch too
        if deviation.is_nan() || deviation > ALGEBRA_TOL {
            return Err(Error::NonUnitAxis { norm });
        }
        Ok(Self { x, y, z })
    }

    /// Build from components, normalizing; rejects near-zero vectors.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-14 {
            return Err(Error::InvalidInput(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        Self {
            x: theta.sin() * phi.cos(),
            y: theta.sin() * phi.sin(),
            z: theta.cos(),
        }
    }

    pub fn z_axis() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 1.0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Apply a common spatial rotation; renormalizes to absorb rounding.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Self {
        let v = rotation * Vector3::new(self.x, self.y, self.z);
        Self::normalized(v.x, v.y, v.z).expect("rotation of a unit vector stays unit")
    }
}

/// Pure state of the three-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QutritState {
    amplitudes: Vector3<C64>,
    basis: Basis,
}

impl QutritState {
    /// Build from amplitudes, rejecting non-normalized vectors.
    pub fn new(amplitudes: Vector3<C64>, basis: Basis) -> Result<Self> {
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let deviation = (norm_sq - 1.0).abs();
        if deviation.is_nan() || deviation > ALGEBRA_TOL {
            return Err(Error::NotNormalized { norm_sq });
        }
        Ok(Self { amplitudes, basis })
    }

    /// The |m_s = 0> Zeeman level, the experiment's initial and readout state.
    pub fn ket_zero() -> Self {
        Self {
            amplitudes: Vector3::new(c(0.0), c(1.0), c(0.0)),
            basis: Basis::Zeeman,
        }
    }

    pub fn amplitudes(&self) -> Vector3<C64> {
        self.amplitudes
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn in_basis(&self, target: Basis) -> Self {
        Self {
            amplitudes: convert_vector(&self.amplitudes, self.basis, target),
            basis: target,
        }
    }

    /// Inner product <self|other>; `other` is converted to this basis first.
    pub fn inner(&self, other: &QutritState) -> C64 {
        let other = other.in_basis(self.basis);
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Squared overlap |<self|other>|^2.
    pub fn overlap_sq(&self, other: &QutritState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn to_density(&self) -> DensityMatrix {
        let rho = self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix {
            entries: rho,
            basis: self.basis,
        }
    }
}

/// Mixed state of the three-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    entries: Matrix3<C64>,
    basis: Basis,
}

impl DensityMatrix {
    /// Build from entries, enforcing Hermiticity, unit trace, and positivity.
    pub fn new(entries: Matrix3<C64>, basis: Basis) -> Result<Self> {
        if !entries_finite(&entries) {
            return Err(Error::InvalidDensityMatrix {
                reason: "entries must be finite".into(),
            });
        }
        let deviation = hermiticity_deviation(&entries);
        if deviation > ALGEBRA_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > ALGEBRA_TOL || trace.im.abs() > ALGEBRA_TOL {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("trace = {} + {}i, expected 1", trace.re, trace.im),
            });
        }
        let min_eig = min_hermitian_eigenvalue(&entries);
        if min_eig < -1e-10 {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("minimum eigenvalue {min_eig:e} is negative"),
            });
        }
        Ok(Self { entries, basis })
    }

    pub fn from_pure(state: &QutritState) -> Self {
        state.to_density()
    }

    pub fn maximally_mixed() -> Self {
        Self {
            entries: Matrix3::identity() * c(1.0 / 3.0),
            basis: Basis::Zeeman,
        }
    }

    pub fn entries(&self) -> &Matrix3<C64> {
        &self.entries
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn in_basis(&self, target: Basis) -> Self {
        Self {
            entries: convert_matrix(&self.entries, self.basis, target),
            basis: target,
        }
    }

    /// Population of a Zeeman level, m in {-1, 0, +1}.
    pub fn population_zeeman(&self, m: i8) -> f64 {
        let rho = self.in_basis(Basis::Zeeman);
        let idx = zeeman_index(m);
        rho.entries[(idx, idx)].re
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_hermitian_eigenvalue(&self.entries)
    }
}

/// Index of the Zeeman level m in the (+1, 0, -1) ordering.
pub fn zeeman_index(m: i8) -> usize {
    match m {
        1 => 0,
        0 => 1,
        -1 => 2,
        _ => panic!("zeeman level must be -1, 0, or +1, got {m}"),
    }
}

/// A 3x3 Hermitian observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianOp {
    entries: Matrix3<C64>,
    basis: Basis,
}

impl HermitianOp {
    pub fn new(entries: Matrix3<C64>, basis: Basis) -> Result<Self> {
        if !entries_finite(&entries) {
            return Err(Error::InvalidInput(
                "operator entries must be finite".into(),
            ));
        }
        let deviation = hermiticity_deviation(&entries);
        if deviation > ALGEBRA_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { entries, basis })
    }

    pub fn identity() -> Self {
        Self {
            entries: Matrix3::identity(),
            basis: Basis::Zeeman,
        }
    }

    pub fn entries(&self) -> &Matrix3<C64> {
        &self.entries
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn in_basis(&self, target: Basis) -> Self {
        Self {
            entries: convert_matrix(&self.entries, self.basis, target),
            basis: target,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.entries);
        let mut vals = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    /// Frobenius norm of the commutator [self, other] (basis-converted).
    pub fn commutator_norm(&self, other: &HermitianOp) -> f64 {
        let a = &self.entries;
        let b = other.in_basis(self.basis);
        let b = &b.entries;
        (a * b - b * a).norm()
    }
}

/// State-like things an expectation value can be taken in.
pub trait QuantumState {
    /// Expectation value of `op`, converted to this state's basis as needed.
    fn expectation(&self, op: &HermitianOp) -> f64;
    /// Matrix element <bra| rho |ket> of this state's density operator.
    fn matrix_element(&self, bra: &QutritState, ket: &QutritState) -> C64;
}

impl QuantumState for QutritState {
    fn expectation(&self, op: &HermitianOp) -> f64 {
        let op = op.in_basis(self.basis);
        (self.amplitudes.adjoint() * op.entries * self.amplitudes)[(0, 0)].re
    }

    fn matrix_element(&self, bra: &QutritState, ket: &QutritState) -> C64 {
        bra.inner(self) * self.inner(ket)
    }
}

impl QuantumState for DensityMatrix {
    fn expectation(&self, op: &HermitianOp) -> f64 {
        let op = op.in_basis(self.basis);
        (self.entries * op.entries).trace().re
    }

    fn matrix_element(&self, bra: &QutritState, ket: &QutritState) -> C64 {
        let bra = bra.in_basis(self.basis);
        let ket = ket.in_basis(self.basis);
        (bra.amplitudes.adjoint() * self.entries * ket.amplitudes)[(0, 0)]
    }
}

/// Expectation value of `op` in `state`.
pub fn expectation<S: QuantumState>(op: &HermitianOp, state: &S) -> f64 {
    state.expectation(op)
}

/// Standard spin-1 matrices in the Zeeman basis (+1, 0, -1).
fn spin_matrices() -> [Matrix3<C64>; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sx = Matrix3::new(
        c(0.0),
        c(s),
        c(0.0),
        c(s),
        c(0.0),
        c(s),
        c(0.0),
        c(s),
        c(0.0),
    );
    let sy = Matrix3::new(
        c(0.0),
        C64::new(0.0, -s),
        c(0.0),
        C64::new(0.0, s),
        c(0.0),
        C64::new(0.0, -s),
        c(0.0),
        C64::new(0.0, s),
        c(0.0),
    );
    let sz = Matrix3::from_diagonal(&Vector3::new(c(1.0), c(0.0), c(-1.0)));
    [sx, sy, sz]
}

/// S_z in the Zeeman basis; also the generator of level shifts under a
/// magnetic-field offset.
pub fn spin_z() -> Matrix3<C64> {
    spin_matrices()[2]
}

/// Spin component l . (S_x, S_y, S_z) along `axis`, in the Zeeman basis.
///
/// Its eigenvalues are exactly {-1, 0, +1}.
pub fn spin_operator(axis: Direction) -> HermitianOp {
    let [sx, sy, sz] = spin_matrices();
    HermitianOp {
        entries: sx * c(axis.x()) + sy * c(axis.y()) + sz * c(axis.z()),
        basis: Basis::Zeeman,
    }
}

/// The eigenvalue-0 eigenstate of the spin component along `axis`.
///
/// Returned in the Cartesian basis, where its amplitudes are the axis
/// components themselves up to a global sign fixed so the
/// largest-magnitude amplitude is positive.
pub fn neutrally_polarized_state(axis: Direction) -> QutritState {
    let mut amps = [axis.x(), axis.y(), axis.z()];
    let mut imax = 0;
    for k in 1..3 {
        if amps[k].abs() > amps[imax].abs() {
            imax = k;
        }
    }
    if amps[imax] < 0.0 {
        for a in &mut amps {
            *a = -*a;
        }
    }
    QutritState {
        amplitudes: Vector3::new(c(amps[0]), c(amps[1]), c(amps[2])),
        basis: Basis::Cartesian,
    }
}

/// Projector L = 1 - S_axis^2 onto the neutrally polarized state, Zeeman basis.
pub fn projector(axis: Direction) -> HermitianOp {
    let s = spin_operator(axis);
    HermitianOp {
        entries: Matrix3::identity() - s.entries * s.entries,
        basis: Basis::Zeeman,
    }
}

fn entries_finite(m: &Matrix3<C64>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn hermiticity_deviation(m: &Matrix3<C64>) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn min_hermitian_eigenvalue(m: &Matrix3<C64>) -> f64 {
    let eig = SymmetricEigen::new(*m);
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Eigen-decomposition of a Hermitian 3x3 matrix: ascending eigenvalues with
/// matching eigenvector columns.
pub fn hermitian_eigen(m: &Matrix3<C64>) -> (Vector3<f64>, Matrix3<C64>) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let mut vecs = Matrix3::zeros();
    for (col, &src) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}
