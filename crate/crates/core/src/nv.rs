// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! NV-center level structure and the rotating-frame two-drive Hamiltonian.
//!
//! The ground-state Hamiltonian along the crystal axis is
//! H = D S_z^2 + gamma_e B S_z (secular approximation, field along z), with
//! the Zeeman term lowering |-1> so that the |0> <-> |-1> transition is the
//! lower resonance. An axial hyperfine shift A_z m m_I for a fixed nuclear
//! projection is optional.

use nalgebra::Matrix3;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qutrit::{Basis, HermitianOp};

/// Reference resonance positions (MHz) for the default field configuration,
/// used by the `levels` report to show deltas.
pub const REFERENCE_ODMR_LOW_MHZ: f64 = 1518.6;
pub const REFERENCE_ODMR_HIGH_MHZ: f64 = 4221.7;

/// Static parameters of the spin-1 ground manifold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvParams {
    /// Zero-field splitting D between m_s = 0 and m_s = +/-1.
    pub zero_field_splitting_mhz: f64,
    /// Electron gyromagnetic ratio g_e beta_e / h.
    pub gamma_e_mhz_per_gauss: f64,
    /// Static field magnitude along the NV z axis.
    pub b_field_gauss: f64,
    /// Axial hyperfine splitting A_z to the host nitrogen nuclear spin.
    pub hyperfine_axial_mhz: f64,
    /// Fixed nuclear spin projection m_I in {-1, 0, +1}.
    pub nuclear_projection: i8,
    /// Whether the axial hyperfine shift enters the level energies.
    pub nuclear_term_enabled: bool,
    /// Constant nuclear Zeeman offset applied to all three electron levels;
    /// cancels in transition frequencies and defaults to zero.
    pub nuclear_zeeman_offset_mhz: f64,
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            zero_field_splitting_mhz: 2870.0,
            gamma_e_mhz_per_gauss: 2.8025,
            b_field_gauss: 482.7,
            hyperfine_axial_mhz: 2.2,
            nuclear_projection: 1,
            nuclear_term_enabled: false,
            nuclear_zeeman_offset_mhz: 0.0,
        }
    }
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        if self.zero_field_splitting_mhz.is_nan() || self.zero_field_splitting_mhz <= 0.0 {
            return Err(Error::Config(
                "zero_field_splitting_mhz must be positive".into(),
            ));
        }
        if self.b_field_gauss.is_nan() || self.b_field_gauss < 0.0 {
            return Err(Error::Config("b_field_gauss must be non-negative".into()));
        }
        if !self.hyperfine_axial_mhz.is_finite() {
            return Err(Error::Config("hyperfine_axial_mhz must be finite".into()));
        }
        if !(-1..=1).contains(&self.nuclear_projection) {
            return Err(Error::Config(
                "nuclear_projection must be -1, 0, or +1".into(),
            ));
        }
        Ok(())
    }
}

/// Energies of the three levels and the two microwave transition frequencies.
#[derive(Debug, Clone, Copy)]
pub struct LevelStructure {
    /// Level energies in MHz, ordered m_s = +1, 0, -1.
    pub energies_mhz: [f64; 3],
    /// |0> <-> |-1> transition frequency.
    pub f_minus_mhz: f64,
    /// |0> <-> |+1> transition frequency.
    pub f_plus_mhz: f64,
}

/// Level energies E(m) = D m^2 + gamma_e B m (+ A_z m m_I when enabled),
/// plus the two transition frequencies.
pub fn energy_levels(p: &NvParams) -> LevelStructure {
    let energy = |m: f64| -> f64 {
        let mut e =
            p.zero_field_splitting_mhz * m * m + p.gamma_e_mhz_per_gauss * p.b_field_gauss * m;
        if p.nuclear_term_enabled {
            e += p.hyperfine_axial_mhz * m * (p.nuclear_projection as f64);
        }
        e + p.nuclear_zeeman_offset_mhz
    };
    let energies_mhz = [energy(1.0), energy(0.0), energy(-1.0)];
    LevelStructure {
        energies_mhz,
        f_minus_mhz: energies_mhz[2] - energies_mhz[1],
        f_plus_mhz: energies_mhz[0] - energies_mhz[1],
    }
}

/// One resonant microwave drive in the rotating frame.
#[derive(Debug, Clone, Copy)]
pub struct Drive {
    pub rabi_mhz: f64,
    pub phase_rad: f64,
    pub detuning_mhz: f64,
}

impl Drive {
    pub fn off() -> Self {
        Self {
            rabi_mhz: 0.0,
            phase_rad: 0.0,
            detuning_mhz: 0.0,
        }
    }
}

/// Rotating-wave Hamiltonian for the two drives, in MHz (the 2 pi angular
/// conversion is applied exactly once, when a pulse is exponentiated):
///
/// H = (W1/2)(e^(i p1)|0><-1| + h.c.) + (W2/2)(e^(i p2)|0><+1| + h.c.)
///     + D1 |-1><-1| + D2 |+1><+1|
///
/// MW1 addresses |0> <-> |-1>, MW2 addresses |0> <-> |+1>.
pub fn rotating_frame_hamiltonian(mw1: &Drive, mw2: &Drive) -> HermitianOp {
    let mut h = Matrix3::<C64>::zeros();
    // Zeeman index order: 0 -> |+1>, 1 -> |0>, 2 -> |-1>
    let half1 = 0.5 * mw1.rabi_mhz;
    let half2 = 0.5 * mw2.rabi_mhz;
    h[(1, 2)] = C64::from_polar(half1, mw1.phase_rad);
    h[(2, 1)] = C64::from_polar(half1, -mw1.phase_rad);
    h[(1, 0)] = C64::from_polar(half2, mw2.phase_rad);
    h[(0, 1)] = C64::from_polar(half2, -mw2.phase_rad);
    h[(2, 2)] = C64::new(mw1.detuning_mhz, 0.0);
    h[(0, 0)] = C64::new(mw2.detuning_mhz, 0.0);
    HermitianOp::new(h, Basis::Zeeman).expect("constructed Hermitian by symmetry")
}
