// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Two-channel pulse programs: compilation of state preparations, their
//! phase-inverted reversals, and density-matrix evolution with a
//! phenomenological noise model.
//!
//! Evolution is exact per constant-Hamiltonian segment. Every segment
//! Hamiltonian couples |0> to at most one other level, so the propagator is
//! the closed-form two-level rotation embedded in 3x3, with the spectator
//! level picking up its diagonal phase. Static field noise is drawn once per
//! ensemble member and enters as a detuning along S_z; echo markers invert
//! its sign across two equal delays. Off-diagonal elements decay as
//! exp(-dt/T2) after each segment.
//!
//! All randomness is seeded: identical inputs give bit-identical outputs, and
//! ensemble members use per-member sub-seeds so results are independent of
//! evaluation order.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qutrit::{neutrally_polarized_state, Basis, DensityMatrix, Direction};

/// SplitMix64 step, used to derive independent sub-seeds from a master seed.
pub(crate) fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Format with 12 significant digits; parse/print round trips are lossless
/// at that precision.
pub(crate) fn fmt_g12(x: f64) -> String {
    format!("{x:.11e}")
}

fn wrap_angle(phase: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut p = phase.rem_euclid(tau);
    if p > std::f64::consts::PI {
        p -= tau;
    }
    p
}

/// Microwave channel. MW1 drives |0> <-> |-1>, MW2 drives |0> <-> |+1>.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Mw1,
    Mw2,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Mw1 => write!(f, "MW1"),
            Channel::Mw2 => write!(f, "MW2"),
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MW1" => Ok(Channel::Mw1),
            "MW2" => Ok(Channel::Mw2),
            other => Err(Error::InvalidInput(format!("unknown channel `{other}`"))),
        }
    }
}

/// A square pulse on one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub channel: Channel,
    pub rabi_mhz: f64,
    pub phase_rad: f64,
    pub duration_us: f64,
    pub detuning_mhz: f64,
}

impl Pulse {
    pub fn resonant(channel: Channel, rabi_mhz: f64, phase_rad: f64, duration_us: f64) -> Self {
        Self {
            channel,
            rabi_mhz,
            phase_rad,
            duration_us,
            detuning_mhz: 0.0,
        }
    }

    /// Resonant pulse of a given rotation angle; duration = angle/(2 pi Rabi).
    pub fn from_angle(channel: Channel, rabi_mhz: f64, phase_rad: f64, angle_rad: f64) -> Self {
        Self::resonant(
            channel,
            rabi_mhz,
            phase_rad,
            angle_rad / (std::f64::consts::TAU * rabi_mhz),
        )
    }

    /// Rotation angle 2 pi Rabi t in radians.
    pub fn rotation_angle(&self) -> f64 {
        std::f64::consts::TAU * self.rabi_mhz * self.duration_us
    }

    fn validate(&self) -> Result<()> {
        if !self.rabi_mhz.is_finite()
            || self.rabi_mhz < 0.0
            || !self.duration_us.is_finite()
            || self.duration_us < 0.0
            || !self.phase_rad.is_finite()
            || !self.detuning_mhz.is_finite()
        {
            return Err(Error::InvalidInput(
                "pulse fields must be finite, with non-negative rabi and duration".into(),
            ));
        }
        Ok(())
    }
}

/// One element of a pulse program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceElement {
    Pulse(Pulse),
    Delay {
        duration_us: f64,
    },
    /// Refocusing marker: free evolution tau, ideal inversion of the static
    /// detuning, free evolution tau again (tau1 = tau2 by construction).
    Echo {
        tau_us: f64,
    },
}

impl SequenceElement {
    pub fn duration_us(&self) -> f64 {
        match self {
            SequenceElement::Pulse(p) => p.duration_us,
            SequenceElement::Delay { duration_us } => *duration_us,
            SequenceElement::Echo { tau_us } => 2.0 * tau_us,
        }
    }
}

/// An ordered two-channel pulse program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PulseSequence {
    elements: Vec<SequenceElement>,
}

impl PulseSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_pulse(&mut self, pulse: Pulse) -> Result<()> {
        pulse.validate()?;
        self.elements.push(SequenceElement::Pulse(pulse));
        Ok(())
    }

    pub fn push_delay(&mut self, duration_us: f64) -> Result<()> {
        if !duration_us.is_finite() || duration_us < 0.0 {
            return Err(Error::InvalidInput("delay must be non-negative".into()));
        }
        self.elements.push(SequenceElement::Delay { duration_us });
        Ok(())
    }

    pub fn push_echo(&mut self, tau_us: f64) -> Result<()> {
        if !tau_us.is_finite() || tau_us < 0.0 {
            return Err(Error::InvalidInput("echo tau must be non-negative".into()));
        }
        self.elements.push(SequenceElement::Echo { tau_us });
        Ok(())
    }

    pub fn elements(&self) -> &[SequenceElement] {
        &self.elements
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_duration_us(&self) -> f64 {
        self.elements.iter().map(SequenceElement::duration_us).sum()
    }

    /// Append all elements of `other`.
    pub fn extend(&mut self, other: &PulseSequence) {
        self.elements.extend_from_slice(&other.elements);
    }

    /// Reversed pulse order with every pulse phase shifted by 180 degrees.
    /// For resonant pulses the result undoes the original exactly.
    pub fn inverted(&self) -> PulseSequence {
        let elements = self
            .elements
            .iter()
            .rev()
            .map(|e| match e {
                SequenceElement::Pulse(p) => SequenceElement::Pulse(Pulse {
                    phase_rad: wrap_angle(p.phase_rad + std::f64::consts::PI),
                    ..*p
                }),
                other => *other,
            })
            .collect();
        PulseSequence { elements }
    }

    /// Line-oriented text form: `PULSE <MW1|MW2> <rabi_MHz> <phase_rad>
    /// <duration_us> <detuning_MHz>`, `DELAY <duration_us>`, `ECHO <tau_us>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.elements {
            match e {
                SequenceElement::Pulse(p) => {
                    out.push_str(&format!(
                        "PULSE {} {} {} {} {}\n",
                        p.channel,
                        fmt_g12(p.rabi_mhz),
                        fmt_g12(p.phase_rad),
                        fmt_g12(p.duration_us),
                        fmt_g12(p.detuning_mhz)
                    ));
                }
                SequenceElement::Delay { duration_us } => {
                    out.push_str(&format!("DELAY {}\n", fmt_g12(*duration_us)));
                }
                SequenceElement::Echo { tau_us } => {
                    out.push_str(&format!("ECHO {}\n", fmt_g12(*tau_us)));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seq = PulseSequence::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("line {}: bad number `{s}`", lineno + 1))
                })
            };
            match fields[0] {
                "PULSE" => {
                    if fields.len() != 6 {
                        return Err(Error::InvalidInput(format!(
                            "line {}: PULSE takes 5 fields",
                            lineno + 1
                        )));
                    }
                    seq.push_pulse(Pulse {
                        channel: fields[1].parse()?,
                        rabi_mhz: parse(fields[2])?,
                        phase_rad: parse(fields[3])?,
                        duration_us: parse(fields[4])?,
                        detuning_mhz: parse(fields[5])?,
                    })?;
                }
                "DELAY" => {
                    if fields.len() != 2 {
                        return Err(Error::InvalidInput(format!(
                            "line {}: DELAY takes 1 field",
                            lineno + 1
                        )));
                    }
                    seq.push_delay(parse(fields[1])?)?;
                }
                "ECHO" => {
                    if fields.len() != 2 {
                        return Err(Error::InvalidInput(format!(
                            "line {}: ECHO takes 1 field",
                            lineno + 1
                        )));
                    }
                    seq.push_echo(parse(fields[1])?)?;
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "line {}: unknown element `{other}`",
                        lineno + 1
                    )));
                }
            }
        }
        Ok(seq)
    }
}

/// Phenomenological noise model: static Gaussian detuning ensemble plus
/// uniform off-diagonal decay.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Rabi-envelope decay scale; the anchor for detuning-width calibration.
    pub t2_star_us: f64,
    /// Echo-protected coherence time; `f64::INFINITY` disables the decay.
    pub t2_us: f64,
    /// Width of the static detuning distribution.
    pub detuning_sigma_mhz: f64,
    /// Number of static-noise samples averaged per evolution.
    pub ensemble_size: usize,
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self {
            t2_star_us: f64::INFINITY,
            t2_us: f64::INFINITY,
            detuning_sigma_mhz: 0.0,
            ensemble_size: 1,
        }
    }

    /// Calibrate the detuning width so the simulated Rabi envelope decays to
    /// 1/e at `t2_star_us` for the given drive strength.
    pub fn calibrated(t2_star_us: f64, t2_us: f64, rabi_mhz: f64, ensemble_size: usize) -> Self {
        Self {
            t2_star_us,
            t2_us,
            detuning_sigma_mhz: calibrate_detuning_sigma(t2_star_us, rabi_mhz),
            ensemble_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t2_star_us.is_nan()
            || self.t2_star_us <= 0.0
            || self.t2_us.is_nan()
            || self.t2_us <= 0.0
        {
            return Err(Error::Config("noise times must be positive".into()));
        }
        if !self.detuning_sigma_mhz.is_finite() || self.detuning_sigma_mhz < 0.0 {
            return Err(Error::Config(
                "detuning_sigma_mhz must be finite and non-negative".into(),
            ));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Closed-form propagator exp(-i 2 pi H t) for the driven two-level block
/// [[0, (W/2) e^(i phi)], [(W/2) e^(-i phi), delta]], returned as the four
/// entries (u00, u01, u10, u11) in the (|0>, |target>) ordering.
fn two_level_entries(
    rabi_mhz: f64,
    phase_rad: f64,
    detuning_mhz: f64,
    duration_us: f64,
) -> (C64, C64, C64, C64) {
    let g = rabi_mhz.hypot(detuning_mhz);
    let global = C64::from_polar(1.0, -std::f64::consts::PI * detuning_mhz * duration_us);
    if g == 0.0 {
        return (global, C64::ZERO, C64::ZERO, global);
    }
    let theta = std::f64::consts::PI * g * duration_us;
    let (sin_t, cos_t) = theta.sin_cos();
    let axis_z = detuning_mhz / g;
    let axis_xy = rabi_mhz / g;
    let u00 = global * C64::new(cos_t, axis_z * sin_t);
    let u11 = global * C64::new(cos_t, -axis_z * sin_t);
    let coupling = C64::new(0.0, -axis_xy * sin_t);
    let u01 = global * coupling * C64::from_polar(1.0, phase_rad);
    let u10 = global * coupling * C64::from_polar(1.0, -phase_rad);
    (u00, u01, u10, u11)
}

/// 3x3 propagator for a pulse, with an additional static detuning along S_z.
fn pulse_matrix(p: &Pulse, static_detuning_mhz: f64) -> Matrix3<C64> {
    let mut u = Matrix3::<C64>::zeros();
    match p.channel {
        Channel::Mw1 => {
            // target |-1> at index 2; noise shifts it by -delta
            let (u00, u01, u10, u11) = two_level_entries(
                p.rabi_mhz,
                p.phase_rad,
                p.detuning_mhz - static_detuning_mhz,
                p.duration_us,
            );
            u[(1, 1)] = u00;
            u[(1, 2)] = u01;
            u[(2, 1)] = u10;
            u[(2, 2)] = u11;
            // spectator |+1> at index 0 carries phase from +delta
            u[(0, 0)] = C64::from_polar(
                1.0,
                -std::f64::consts::TAU * static_detuning_mhz * p.duration_us,
            );
        }
        Channel::Mw2 => {
            // target |+1> at index 0; noise shifts it by +delta
            let (u00, u01, u10, u11) = two_level_entries(
                p.rabi_mhz,
                p.phase_rad,
                p.detuning_mhz + static_detuning_mhz,
                p.duration_us,
            );
            u[(1, 1)] = u00;
            u[(1, 0)] = u01;
            u[(0, 1)] = u10;
            u[(0, 0)] = u11;
            // spectator |-1> at index 2 carries phase from -delta
            u[(2, 2)] = C64::from_polar(
                1.0,
                std::f64::consts::TAU * static_detuning_mhz * p.duration_us,
            );
        }
    }
    u
}

/// Free-evolution propagator under the static detuning delta S_z.
fn delay_matrix(static_detuning_mhz: f64, duration_us: f64) -> Matrix3<C64> {
    let phase = std::f64::consts::TAU * static_detuning_mhz * duration_us;
    Matrix3::from_diagonal(&Vector3::new(
        C64::from_polar(1.0, -phase),
        C64::new(1.0, 0.0),
        C64::from_polar(1.0, phase),
    ))
}

/// Noise-free propagator of one pulse; unitary to machine precision.
pub fn pulse_unitary(p: &Pulse) -> Matrix3<C64> {
    pulse_matrix(p, 0.0)
}

/// Noise-free propagator of a whole sequence (delays and echoes are identity
/// without a static detuning).
pub fn sequence_unitary(seq: &PulseSequence) -> Matrix3<C64> {
    let mut u = Matrix3::identity();
    for e in seq.elements() {
        match e {
            SequenceElement::Pulse(p) => u = pulse_matrix(p, 0.0) * u,
            SequenceElement::Delay { .. } | SequenceElement::Echo { .. } => {}
        }
    }
    u
}

fn damp_coherences(rho: &mut Matrix3<C64>, duration_us: f64, t2_us: f64) {
    if !t2_us.is_finite() || duration_us == 0.0 {
        return;
    }
    let f = C64::new((-duration_us / t2_us).exp(), 0.0);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                rho[(i, j)] *= f;
            }
        }
    }
}

/// Ensemble-averaged evolution of `rho0` through `seq`.
///
/// Per member, a static detuning is drawn from N(0, sigma), the sequence is
/// applied unitarily with that detuning (echo markers flip its sign between
/// their two delays), and coherences decay as exp(-dt/T2) after each
/// segment. The member density matrices are averaged.
pub fn apply_sequence(
    seq: &PulseSequence,
    rho0: &DensityMatrix,
    noise: &NoiseParams,
    seed: u64,
) -> DensityMatrix {
    let rho_start = *rho0.in_basis(Basis::Zeeman).entries();
    let n = noise.ensemble_size.max(1);
    let normal = (noise.detuning_sigma_mhz > 0.0)
        .then(|| Normal::new(0.0, noise.detuning_sigma_mhz).expect("sigma validated"));

    let mut acc = Matrix3::<C64>::zeros();
    for member in 0..n {
        let delta = normal.map_or(0.0, |dist| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, member as u64));
            dist.sample(&mut rng)
        });
        let mut rho = rho_start;
        for elem in seq.elements() {
            match elem {
                SequenceElement::Pulse(p) => {
                    let u = pulse_matrix(p, delta);
                    rho = u * rho * u.adjoint();
                    damp_coherences(&mut rho, p.duration_us, noise.t2_us);
                }
                SequenceElement::Delay { duration_us } => {
                    let u = delay_matrix(delta, *duration_us);
                    rho = u * rho * u.adjoint();
                    damp_coherences(&mut rho, *duration_us, noise.t2_us);
                }
                SequenceElement::Echo { tau_us } => {
                    let u = delay_matrix(delta, *tau_us);
                    rho = u * rho * u.adjoint();
                    damp_coherences(&mut rho, *tau_us, noise.t2_us);
                    let u = delay_matrix(-delta, *tau_us);
                    rho = u * rho * u.adjoint();
                    damp_coherences(&mut rho, *tau_us, noise.t2_us);
                }
            }
        }
        acc += rho;
    }
    let avg = acc / C64::new(n as f64, 0.0);
    // symmetrize away rounding before revalidating the invariants
    let herm = (avg + avg.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::new(herm, Basis::Zeeman)
        .expect("averaged unitary evolution with dephasing preserves density invariants")
}

/// Find the detuning width sigma for which the ensemble-averaged Rabi
/// envelope at drive `rabi_mhz` falls to 1/e of its initial amplitude at
/// `t2_star_us`. Deterministic: the Gaussian average is a fixed quadrature.
pub fn calibrate_detuning_sigma(t2_star_us: f64, rabi_mhz: f64) -> f64 {
    if !t2_star_us.is_finite() {
        return 0.0;
    }
    assert!(rabi_mhz > 0.0, "calibration requires a positive drive");

    // Gaussian quadrature nodes over +/- 6 sigma
    const NODES: usize = 241;
    let mut z = [0.0f64; NODES];
    let mut w = [0.0f64; NODES];
    let mut total = 0.0;
    for k in 0..NODES {
        let zz = -6.0 + 12.0 * (k as f64 + 0.5) / NODES as f64;
        z[k] = zz;
        w[k] = (-0.5 * zz * zz).exp();
        total += w[k];
    }
    for wk in &mut w {
        *wk /= total;
    }

    // averaged |0>-population under a resonant drive with static detuning
    let p0 = |sigma: f64, t: f64| -> f64 {
        let mut p = 0.0;
        for k in 0..NODES {
            let delta = sigma * z[k];
            let g = rabi_mhz.hypot(delta);
            let s = (std::f64::consts::PI * g * t).sin();
            p += w[k] * (1.0 - (rabi_mhz / g).powi(2) * s * s);
        }
        p
    };

    // oscillation amplitude over one Rabi period around time t
    let period = 1.0 / rabi_mhz;
    let envelope = |sigma: f64, t: f64| -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..64 {
            let v = p0(sigma, t + period * k as f64 / 64.0);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        0.5 * (hi - lo)
    };

    let target = std::f64::consts::E.recip();
    let ratio = |sigma: f64| envelope(sigma, t2_star_us) / envelope(sigma, 0.0);

    let mut lo = 1e-4_f64;
    let mut hi = rabi_mhz;
    if ratio(lo) <= target {
        return lo;
    }
    if ratio(hi) >= target {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Required noiseless preparation fidelity.
pub const PREP_FIDELITY_TARGET: f64 = 1.0 - 1e-9;

/// Synthesizes state preparations into two-channel pulse programs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseCompiler {
    pub rabi_mw1_mhz: f64,
    pub rabi_mw2_mhz: f64,
}

impl Default for PulseCompiler {
    fn default() -> Self {
        Self {
            rabi_mw1_mhz: 20.0,
            rabi_mw2_mhz: 20.0,
        }
    }
}

impl PulseCompiler {
    pub fn validate(&self) -> Result<()> {
        if self.rabi_mw1_mhz.is_nan()
            || self.rabi_mw1_mhz <= 0.0
            || self.rabi_mw2_mhz.is_nan()
            || self.rabi_mw2_mhz <= 0.0
        {
            return Err(Error::Config(
                "drive Rabi frequencies must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Analysis pulse of rotation angle `chi` on the |0> <-> |-1> transition.
    pub fn chi_pulse(&self, chi_rad: f64) -> Pulse {
        Pulse::from_angle(Channel::Mw1, self.rabi_mw1_mhz, 0.0, chi_rad)
    }

    /// Noiseless fidelity |<target| U(seq) |0>|^2 of a preparation program.
    pub fn prep_fidelity(&self, seq: &PulseSequence, target: Direction) -> f64 {
        let u = sequence_unitary(seq);
        let out = u * Vector3::new(C64::ZERO, C64::new(1.0, 0.0), C64::ZERO);
        let goal = neutrally_polarized_state(target)
            .in_basis(Basis::Zeeman)
            .amplitudes();
        goal.dotc(&out).norm_sqr()
    }

    /// Synthesize a program taking |0> to the neutrally polarized state of
    /// `target`, with verified noiseless fidelity >= 1 - 1e-9.
    ///
    /// The two pulse areas and phases follow from the two-level decomposition
    /// of the target's Zeeman amplitudes; a bounded pattern search polishes
    /// them if the seed solution falls short.
    pub fn compile_prep(&self, target: Direction) -> Result<PulseSequence> {
        let goal = neutrally_polarized_state(target).in_basis(Basis::Zeeman);
        let amps = goal.amplitudes();

        // rotate the global phase so the |0> amplitude is real and >= 0
        let a0 = amps[1];
        let phase_fix = if a0.norm() > 1e-15 {
            a0.conj() / C64::new(a0.norm(), 0.0)
        } else {
            C64::new(1.0, 0.0)
        };
        let a_plus = amps[0] * phase_fix;
        let a_zero = (a0 * phase_fix).re.max(0.0);
        let a_minus = amps[2] * phase_fix;

        // MW1 half-angle alpha moves |a_minus| out of |0>; MW2 half-angle
        // beta splits the rest between |0> and |+1>.
        let alpha = a_minus.norm().min(1.0).asin();
        let beta = a_plus.norm().atan2(a_zero);
        let phi1 = if a_minus.norm() > 1e-15 {
            wrap_angle(-a_minus.arg() - std::f64::consts::FRAC_PI_2)
        } else {
            0.0
        };
        let phi2 = if a_plus.norm() > 1e-15 {
            wrap_angle(-a_plus.arg() - std::f64::consts::FRAC_PI_2)
        } else {
            0.0
        };

        let t1 = alpha / (std::f64::consts::PI * self.rabi_mw1_mhz);
        let t2 = beta / (std::f64::consts::PI * self.rabi_mw2_mhz);

        let mut params = [t1, phi1, t2, phi2];
        let mut fidelity = self.prep_fidelity(&self.assemble(&params), target);
        if fidelity < PREP_FIDELITY_TARGET {
            (params, fidelity) = self.refine(params, target);
        }
        if fidelity < PREP_FIDELITY_TARGET {
            return Err(Error::SynthesisFailed {
                best_fidelity: fidelity,
            });
        }
        Ok(self.assemble_pruned(&params))
    }

    fn assemble(&self, params: &[f64; 4]) -> PulseSequence {
        let mut seq = PulseSequence::new();
        seq.elements.push(SequenceElement::Pulse(Pulse::resonant(
            Channel::Mw1,
            self.rabi_mw1_mhz,
            params[1],
            params[0].max(0.0),
        )));
        seq.elements.push(SequenceElement::Pulse(Pulse::resonant(
            Channel::Mw2,
            self.rabi_mw2_mhz,
            params[3],
            params[2].max(0.0),
        )));
        seq
    }

    /// Like `assemble` but dropping pulses with negligible rotation angle.
    fn assemble_pruned(&self, params: &[f64; 4]) -> PulseSequence {
        let mut seq = PulseSequence::new();
        for e in self.assemble(params).elements() {
            if let SequenceElement::Pulse(p) = e {
                if p.rotation_angle().abs() > 1e-12 {
                    seq.elements.push(*e);
                }
            }
        }
        seq
    }

    /// Bounded derivative-free polish of (t1, phi1, t2, phi2).
    fn refine(&self, mut params: [f64; 4], target: Direction) -> ([f64; 4], f64) {
        let mut best = self.prep_fidelity(&self.assemble(&params), target);
        let mut steps = [
            0.05 / self.rabi_mw1_mhz,
            0.05,
            0.05 / self.rabi_mw2_mhz,
            0.05,
        ];
        for _ in 0..400 {
            if best >= 1.0 - 1e-12 || steps.iter().all(|s| *s < 1e-14) {
                break;
            }
            let mut improved = false;
            for k in 0..4 {
                for dir in [1.0, -1.0] {
                    let mut trial = params;
                    trial[k] += dir * steps[k];
                    if (k == 0 || k == 2) && trial[k] < 0.0 {
                        continue;
                    }
                    let f = self.prep_fidelity(&self.assemble(&trial), target);
                    if f > best {
                        best = f;
                        params = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in &mut steps {
                    *s *= 0.5;
                }
            }
        }
        (params, best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qutrit::{hermitian_eigen, QutritState};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_direction(rng: &mut impl Rng) -> Direction {
        Direction::normalized(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .unwrap_or_else(|_| Direction::z_axis())
    }

    fn ket_zero_density() -> DensityMatrix {
        QutritState::ket_zero().to_density()
    }

    // Independent oracle for the segment propagator: exponentiate the full
    // 3x3 Hamiltonian through an eigen-decomposition.
    fn eigen_exp_oracle(p: &Pulse) -> Matrix3<C64> {
        use crate::nv::{rotating_frame_hamiltonian, Drive};
        let (d1, d2) = match p.channel {
            Channel::Mw1 => (
                Drive {
                    rabi_mhz: p.rabi_mhz,
                    phase_rad: p.phase_rad,
                    detuning_mhz: p.detuning_mhz,
                },
                Drive::off(),
            ),
            Channel::Mw2 => (
                Drive::off(),
                Drive {
                    rabi_mhz: p.rabi_mhz,
                    phase_rad: p.phase_rad,
                    detuning_mhz: p.detuning_mhz,
                },
            ),
        };
        let h = rotating_frame_hamiltonian(&d1, &d2);
        let (vals, vecs) = hermitian_eigen(h.entries());
        let mut d = Matrix3::<C64>::zeros();
        for k in 0..3 {
            d[(k, k)] = C64::from_polar(1.0, -std::f64::consts::TAU * vals[k] * p.duration_us);
        }
        vecs * d * vecs.adjoint()
    }

    #[test]
    fn zero_duration_pulse_is_identity() {
        let p = Pulse::resonant(Channel::Mw1, 10.0, 0.3, 0.0);
        assert!((pulse_unitary(&p) - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn pi_pulse_transfers_population() {
        let rabi = 10.0;
        let p = Pulse::resonant(Channel::Mw1, rabi, 0.0, 1.0 / (2.0 * rabi));
        let out = pulse_unitary(&p) * QutritState::ket_zero().amplitudes();
        assert_abs_diff_eq!(out[2].norm_sqr(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn rabi_population_follows_sine_squared() {
        // exact two-level solution as oracle: P(0 -> -1) = sin^2(pi W t)
        let rabi = 7.0;
        for &t in &[0.01, 0.037, 0.09, 0.21] {
            let p = Pulse::resonant(Channel::Mw1, rabi, 0.0, t);
            let out = pulse_unitary(&p) * QutritState::ket_zero().amplitudes();
            let oracle = (std::f64::consts::PI * rabi * t).sin().powi(2);
            assert_abs_diff_eq!(out[2].norm_sqr(), oracle, epsilon = 1e-12);
            // the undriven |+1> level stays empty
            assert!(out[0].norm() < 1e-12);
        }
    }

    #[test]
    fn opposite_phase_half_pulses_cancel() {
        let rabi = 12.0;
        let quarter = 1.0 / (4.0 * rabi);
        let a = Pulse::resonant(Channel::Mw1, rabi, 0.0, quarter);
        let b = Pulse::resonant(Channel::Mw1, rabi, std::f64::consts::PI, quarter);
        let u = pulse_unitary(&b) * pulse_unitary(&a);
        assert!((u - Matrix3::identity()).norm() < 1e-10);
    }

    #[test]
    fn closed_form_matches_eigen_exponential_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..200 {
            let p = Pulse {
                channel: if rng.random_bool(0.5) {
                    Channel::Mw1
                } else {
                    Channel::Mw2
                },
                rabi_mhz: rng.random_range(0.0..30.0),
                phase_rad: rng.random_range(-3.2..3.2),
                duration_us: rng.random_range(0.0..0.5),
                detuning_mhz: rng.random_range(-8.0..8.0),
            };
            let diff = (pulse_unitary(&p) - eigen_exp_oracle(&p)).norm();
            assert!(diff < 1e-12, "closed form deviates from oracle by {diff:e}");
        }
    }

    #[test]
    fn pulse_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let p = Pulse {
                channel: Channel::Mw2,
                rabi_mhz: rng.random_range(0.0..25.0),
                phase_rad: rng.random_range(-3.2..3.2),
                duration_us: rng.random_range(0.0..1.0),
                detuning_mhz: rng.random_range(-5.0..5.0),
            };
            let u = pulse_unitary(&p);
            assert!((u * u.adjoint() - Matrix3::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn compile_prep_of_z_axis_is_empty() {
        let compiler = PulseCompiler::default();
        let seq = compiler.compile_prep(Direction::z_axis()).unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn compile_prep_reaches_pentagram_targets() {
        let compiler = PulseCompiler::default();
        let set = crate::kcbs::build_pentagram();
        for &d in set.directions() {
            let seq = compiler.compile_prep(d).unwrap();
            let f = compiler.prep_fidelity(&seq, d);
            assert!(f >= PREP_FIDELITY_TARGET, "fidelity {f} too low");
        }
    }

    #[test]
    fn compile_prep_reaches_random_targets() {
        let compiler = PulseCompiler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let d = random_direction(&mut rng);
            let seq = compiler.compile_prep(d).unwrap();
            let f = compiler.prep_fidelity(&seq, d);
            assert!(f >= PREP_FIDELITY_TARGET, "fidelity {f} too low for target");
        }
    }

    #[test]
    fn inverted_empty_is_empty() {
        assert!(PulseSequence::new().inverted().is_empty());
    }

    #[test]
    fn inverted_sequence_composes_to_identity() {
        let compiler = PulseCompiler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let d = random_direction(&mut rng);
            let seq = compiler.compile_prep(d).unwrap();
            let u = sequence_unitary(&seq);
            let u_inv = sequence_unitary(&seq.inverted());
            assert!((u_inv * u - Matrix3::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn inverted_prep_returns_to_ket_zero() {
        let compiler = PulseCompiler::default();
        let set = crate::kcbs::build_pentagram();
        for i in 1..=5 {
            let d = set.direction(i);
            let prep = compiler.compile_prep(d).unwrap();
            let target = neutrally_polarized_state(d)
                .in_basis(Basis::Zeeman)
                .amplitudes();
            let back = sequence_unitary(&prep.inverted()) * target;
            assert!(back[1].norm_sqr() >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn noiseless_apply_matches_unitary_evolution() {
        let compiler = PulseCompiler::default();
        let d = Direction::from_spherical(1.1, 0.6);
        let mut seq = compiler.compile_prep(d).unwrap();
        seq.push_delay(0.4).unwrap();
        seq.push_echo(0.2).unwrap();
        let rho = apply_sequence(&seq, &ket_zero_density(), &NoiseParams::noiseless(), 1);
        let u = sequence_unitary(&seq);
        let expected = u * ket_zero_density().entries().clone_owned() * u.adjoint();
        assert!((rho.entries() - expected).norm() < 1e-10);
    }

    #[test]
    fn rabi_envelope_decays_with_ensemble_noise() {
        let rabi = 5.0;
        let noise = NoiseParams {
            t2_star_us: 35.0,
            t2_us: f64::INFINITY,
            detuning_sigma_mhz: 0.8,
            ensemble_size: 300,
        };
        // oscillation amplitude of P0 across one Rabi period near t and 3t
        let amplitude = |t_center: f64| -> f64 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..24 {
                let t = t_center + (k as f64 / 24.0) / rabi;
                let mut seq = PulseSequence::new();
                seq.push_pulse(Pulse::resonant(Channel::Mw1, rabi, 0.0, t))
                    .unwrap();
                let rho = apply_sequence(&seq, &ket_zero_density(), &noise, 7);
                let p0 = rho.population_zeeman(0);
                lo = lo.min(p0);
                hi = hi.max(p0);
            }
            0.5 * (hi - lo)
        };
        let early = amplitude(4.0);
        let late = amplitude(12.0);
        assert!(
            late < early,
            "envelope must decay: amp(12us) = {late}, amp(4us) = {early}"
        );
    }

    #[test]
    fn echo_refocuses_static_detuning() {
        // coherent superposition on the driven transition
        let half = Pulse::from_angle(Channel::Mw1, 20.0, 0.0, std::f64::consts::FRAC_PI_2);
        let mut prep = PulseSequence::new();
        prep.push_pulse(half).unwrap();

        let noise = NoiseParams {
            t2_star_us: 35.0,
            t2_us: f64::INFINITY,
            detuning_sigma_mhz: 0.5,
            ensemble_size: 200,
        };
        // coherence right after the (noisy) preparation
        let rho0 = apply_sequence(&prep, &ket_zero_density(), &noise, 3);
        let coherence0 = rho0.entries()[(1, 2)].norm();

        // echo across the full wait refocuses the static detuning exactly
        let mut echoed = prep.clone();
        echoed.push_echo(5.0).unwrap();
        let rho_echo = apply_sequence(&echoed, &ket_zero_density(), &noise, 3);
        let coherence_echo = rho_echo.entries()[(1, 2)].norm();
        assert_abs_diff_eq!(coherence_echo, coherence0, epsilon = 1e-6);

        // the same wait without the echo dephases visibly
        let mut plain = prep.clone();
        plain.push_delay(10.0).unwrap();
        let rho_plain = apply_sequence(&plain, &ket_zero_density(), &noise, 3);
        assert!(rho_plain.entries()[(1, 2)].norm() < 0.9 * coherence0);
    }

    #[test]
    fn t2_decay_damps_coherences() {
        let half = Pulse::from_angle(Channel::Mw1, 20.0, 0.0, std::f64::consts::FRAC_PI_2);
        let mut seq = PulseSequence::new();
        seq.push_pulse(half).unwrap();
        seq.push_echo(74.0).unwrap();
        let noise = NoiseParams {
            t2_star_us: 35.0,
            t2_us: 148.0,
            detuning_sigma_mhz: 0.0,
            ensemble_size: 1,
        };
        let rho = apply_sequence(&seq, &ket_zero_density(), &noise, 0);
        // half pulse gives coherence 1/2, then every segment (pulse included)
        // damps by exp(-dt/T2); the echo wait alone is one full T2
        let expected = 0.5 * (-seq.total_duration_us() / noise.t2_us).exp();
        assert_abs_diff_eq!(rho.entries()[(1, 2)].norm(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(
            rho.entries()[(1, 2)].norm(),
            0.5 / std::f64::consts::E,
            epsilon = 1e-4
        );
    }

    #[test]
    fn evolution_preserves_trace_and_positivity() {
        let compiler = PulseCompiler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let noise = NoiseParams {
            t2_star_us: 35.0,
            t2_us: 148.0,
            detuning_sigma_mhz: 0.7,
            ensemble_size: 50,
        };
        for k in 0..20 {
            let d = random_direction(&mut rng);
            let mut seq = compiler.compile_prep(d).unwrap();
            seq.push_echo(1.0).unwrap();
            let rho = apply_sequence(&seq, &ket_zero_density(), &noise, k);
            assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-10);
            assert!(rho.min_eigenvalue() >= -1e-8);
        }
    }

    #[test]
    fn apply_sequence_is_deterministic() {
        let compiler = PulseCompiler::default();
        let d = Direction::from_spherical(0.9, 2.0);
        let seq = compiler.compile_prep(d).unwrap();
        let noise = NoiseParams {
            t2_star_us: 35.0,
            t2_us: 148.0,
            detuning_sigma_mhz: 0.6,
            ensemble_size: 64,
        };
        let a = apply_sequence(&seq, &ket_zero_density(), &noise, 42);
        let b = apply_sequence(&seq, &ket_zero_density(), &noise, 42);
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let mut seq = PulseSequence::new();
        seq.push_pulse(Pulse {
            channel: Channel::Mw1,
            rabi_mhz: 19.87654321,
            phase_rad: -2.2360679775,
            duration_us: 0.0123456789012,
            detuning_mhz: 0.25,
        })
        .unwrap();
        seq.push_delay(0.5).unwrap();
        seq.push_echo(1.25).unwrap();
        seq.push_pulse(Pulse::resonant(Channel::Mw2, 5.0, 0.0, 0.05))
            .unwrap();

        let text = seq.to_text();
        let parsed = PulseSequence::from_text(&text).unwrap();
        assert_eq!(parsed.to_text(), text);
        // values agree to 12 significant digits
        if let (SequenceElement::Pulse(a), SequenceElement::Pulse(b)) =
            (&seq.elements()[0], &parsed.elements()[0])
        {
            assert_abs_diff_eq!(a.rabi_mhz, b.rabi_mhz, epsilon = 1e-10);
            assert_abs_diff_eq!(a.phase_rad, b.phase_rad, epsilon = 1e-11);
            assert_abs_diff_eq!(a.duration_us, b.duration_us, epsilon = 1e-13);
        } else {
            panic!("expected pulses");
        }
    }

    #[test]
    fn text_parse_rejects_malformed_lines() {
        assert!(PulseSequence::from_text("PULSE MW3 1 0 1 0").is_err());
        assert!(PulseSequence::from_text("PULSE MW1 1 0").is_err());
        assert!(PulseSequence::from_text("WAIT 1.0").is_err());
        assert!(PulseSequence::from_text("DELAY abc").is_err());
    }

    #[test]
    fn calibrated_sigma_reproduces_envelope_time() {
        let rabi = 20.0;
        let t2_star = 35.0;
        let sigma = calibrate_detuning_sigma(t2_star, rabi);
        assert!(sigma > 0.0 && sigma < rabi);
        // self-consistency: the quadrature envelope at t2_star sits near 1/e
        let noise = NoiseParams {
            t2_star_us: t2_star,
            t2_us: f64::INFINITY,
            detuning_sigma_mhz: sigma,
            ensemble_size: 400,
        };
        let amplitude = |t_center: f64| -> f64 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..32 {
                let t = t_center + (k as f64 / 32.0) / rabi;
                let mut seq = PulseSequence::new();
                seq.push_pulse(Pulse::resonant(Channel::Mw1, rabi, 0.0, t))
                    .unwrap();
                let rho = apply_sequence(&seq, &ket_zero_density(), &noise, 11);
                let p0 = rho.population_zeeman(0);
                lo = lo.min(p0);
                hi = hi.max(p0);
            }
            0.5 * (hi - lo)
        };
        let ratio = amplitude(t2_star) / amplitude(0.0);
        let target = std::f64::consts::E.recip();
        assert!(
            (ratio - target).abs() < 0.1,
            "envelope ratio {ratio} too far from 1/e"
        );
    }
}
