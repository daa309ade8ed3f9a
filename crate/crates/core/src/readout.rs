// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Fluorescence readout model, the chi-sweep protocol, sinusoid fitting,
//! and the two experiment kinds (neighbor-orthogonality test and projector
//! expectation measurement).
//!
//! Readout is a parametric stand-in for the optical chain: Poisson counts at
//! a |0>-population-dependent rate, normalized so the dark rate maps to 0 and
//! the bright rate to 1, plus a bounded per-curve baseline drift. The `exact`
//! flag gives the infinite-shots limit (no count noise), which the noiseless
//! verification pipeline relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kcbs::PentagramSet;
use crate::pulse::{apply_sequence, mix_seed, NoiseParams, PulseCompiler, PulseSequence};
use crate::qutrit::{DensityMatrix, QutritState};

const TAU: f64 = std::f64::consts::TAU;

// sub-seed tags for the independent random streams of one sweep
const TAG_DRIFT: u64 = 0xd21f;
const TAG_COUNTS: u64 = 0xc0d7;

/// Photon-count readout parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutModel {
    /// Mean counts per shot with the spin in |0>.
    pub bright_rate: f64,
    /// Mean counts per shot with the spin in |+-1>.
    pub dark_rate: f64,
    /// Shots per sweep point.
    pub shots: u64,
    /// Magnitude bound of the per-curve baseline offset.
    pub drift_bound: f64,
    /// Infinite-shots limit: report the exact normalized signal.
    pub exact: bool,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self {
            bright_rate: 0.03,
            dark_rate: 0.02,
            shots: 2_000_000,
            drift_bound: 0.02,
            exact: false,
        }
    }
}

impl ReadoutModel {
    /// Noise-free readout: exact signals, no drift.
    pub fn ideal() -> Self {
        Self {
            drift_bound: 0.0,
            exact: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dark_rate.is_nan()
            || self.dark_rate < 0.0
            || self.bright_rate.is_nan()
            || self.bright_rate <= self.dark_rate
        {
            return Err(Error::Config("need bright_rate > dark_rate >= 0".into()));
        }
        if self.shots == 0 {
            return Err(Error::Config("shots must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.drift_bound) {
            return Err(Error::Config("drift_bound must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Error floor reported in exact mode, keeping fit weights finite.
    pub const EXACT_MODE_SIGNAL_ERR: f64 = 1e-9;

    /// Draw counts for a |0> population and normalize; returns
    /// (counts, normalized signal, statistical error).
    fn draw(&self, p_zero: f64, rng: &mut impl Rng) -> (u64, f64, f64) {
        let contrast = self.bright_rate - self.dark_rate;
        let mean_rate = self.dark_rate + p_zero.clamp(0.0, 1.0) * contrast;
        if self.exact {
            let counts = (mean_rate * self.shots as f64).round() as u64;
            return (counts, p_zero, Self::EXACT_MODE_SIGNAL_ERR);
        }
        let mean = mean_rate * self.shots as f64;
        let counts = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng) as u64
        } else {
            0
        };
        let per_shot = counts as f64 / self.shots as f64;
        let signal = (per_shot - self.dark_rate) / contrast;
        let err = (counts.max(1) as f64).sqrt() / (self.shots as f64 * contrast);
        (counts, signal, err)
    }
}

/// Simulate one readout of `rho`, including a per-call baseline offset drawn
/// uniformly from [-drift_bound, +drift_bound]. Returns raw counts and the
/// normalized signal.
pub fn simulate_counts(rho: &DensityMatrix, model: &ReadoutModel, seed: u64) -> (u64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_zero = rho.population_zeeman(0);
    let (counts, signal, _) = model.draw(p_zero, &mut rng);
    let drift = if model.drift_bound > 0.0 {
        rng.random_range(-model.drift_bound..=model.drift_bound)
    } else {
        0.0
    };
    (counts, signal + drift)
}

/// One measured sweep curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepData {
    pub chi_values: Vec<f64>,
    pub signal: Vec<f64>,
    pub signal_err: Vec<f64>,
}

impl SweepData {
    pub fn len(&self) -> usize {
        self.chi_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi_values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_values.len() != self.signal.len()
            || self.chi_values.len() != self.signal_err.len()
        {
            return Err(Error::InvalidInput("sweep columns differ in length".into()));
        }
        if self.signal_err.iter().any(|&e| e.is_nan() || e <= 0.0) {
            return Err(Error::InvalidInput("sweep errors must be positive".into()));
        }
        Ok(())
    }

    /// CSV with header `chi_rad,signal,signal_err`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chi_rad,signal,signal_err\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::pulse::fmt_g12(self.chi_values[i]),
                crate::pulse::fmt_g12(self.signal[i]),
                crate::pulse::fmt_g12(self.signal_err[i]),
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "chi_rad,signal,signal_err" => {}
            other => return Err(Error::InvalidInput(format!("bad CSV header: {other:?}"))),
        }
        let mut data = SweepData {
            chi_values: Vec::new(),
            signal: Vec::new(),
            signal_err: Vec::new(),
        };
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "CSV line {}: expected 3 columns",
                    lineno + 2
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("CSV line {}: bad number `{s}`", lineno + 2))
                })
            };
            data.chi_values.push(parse(cols[0])?);
            data.signal.push(parse(cols[1])?);
            data.signal_err.push(parse(cols[2])?);
        }
        data.validate()?;
        Ok(data)
    }
}

/// Result of fitting y(chi) = y0 + A cos(chi - chi0).
#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    pub d_amplitude: f64,
    pub d_offset: f64,
    /// Fitted curve evaluated at chi = 2 pi.
    pub point_estimate: f64,
    /// sqrt(dA^2 + dy0^2), the propagated readout error.
    pub d_point: f64,
    /// Raw estimate fell outside [-0.05, 1.05].
    pub out_of_range: bool,
}

/// Weighted least squares of a constant plus first harmonic. Linear in
/// (y0, A cos chi0, A sin chi0), so the normal equations solve it exactly.
pub fn fit_sinusoid(data: &SweepData) -> Result<FitResult> {
    data.validate()?;
    check_fit_points(&data.chi_values)?;

    let mut xtwx = nalgebra::Matrix3::<f64>::zeros();
    let mut xtwy = nalgebra::Vector3::<f64>::zeros();
    for i in 0..data.len() {
        let chi = data.chi_values[i];
        let y = data.signal[i];
        let w = 1.0 / (data.signal_err[i] * data.signal_err[i]);
        if !w.is_finite() || !y.is_finite() {
            return Err(Error::FitFailed {
                reason: format!("non-finite data at point {i}"),
            });
        }
        let row = [1.0, chi.cos(), chi.sin()];
        for r in 0..3 {
            for c in 0..3 {
                xtwx[(r, c)] += w * row[r] * row[c];
            }
            xtwy[r] += w * row[r] * y;
        }
    }
    let cov = xtwx.try_inverse().ok_or_else(|| Error::FitFailed {
        reason: "singular normal equations (degenerate chi grid)".into(),
    })?;
    let beta = cov * xtwy;
    let (y0, a, b) = (beta[0], beta[1], beta[2]);

    let amplitude = a.hypot(b);
    let phase = b.atan2(a);
    let var_amp = if amplitude > 1e-12 {
        (a * a * cov[(1, 1)] + b * b * cov[(2, 2)] + 2.0 * a * b * cov[(1, 2)])
            / (amplitude * amplitude)
    } else {
        cov[(1, 1)] + cov[(2, 2)]
    };
    let d_amplitude = var_amp.max(0.0).sqrt();
    let d_offset = cov[(0, 0)].max(0.0).sqrt();

    let point_estimate = y0 + amplitude * (TAU - phase).cos();
    let d_point = d_amplitude.hypot(d_offset);
    let out_of_range = !(-0.05..=1.05).contains(&point_estimate);

    Ok(FitResult {
        amplitude,
        offset: y0,
        phase,
        d_amplitude,
        d_offset,
        point_estimate,
        d_point,
        out_of_range,
    })
}

/// Uniform chi grid: `points_per_period` points per 2 pi over `periods`
/// periods, starting at 0 and therefore containing 2 pi exactly when at
/// least one full period is covered.
pub fn chi_grid(points_per_period: usize, periods: f64) -> Vec<f64> {
    let step = TAU / points_per_period as f64;
    let n = (points_per_period as f64 * periods).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// The fit needs at least 8 points spanning a full period.
fn check_fit_points(grid: &[f64]) -> Result<()> {
    if grid.len() < 8 {
        return Err(Error::GridTooSparse(format!(
            "{} points, need at least 8",
            grid.len()
        )));
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < TAU - 1e-9 {
        return Err(Error::GridTooSparse(format!(
            "points span {:.4} rad, need a full period",
            hi - lo
        )));
    }
    Ok(())
}

/// Sweep grids additionally need 8 points per period and the chi = 2 pi
/// readout point itself.
fn check_grid(grid: &[f64]) -> Result<()> {
    check_fit_points(grid)?;
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let points_per_period = grid.len() as f64 / ((hi - lo) / TAU);
    if points_per_period < 8.0 {
        return Err(Error::GridTooSparse(format!(
            "{points_per_period:.1} points per period, need at least 8"
        )));
    }
    if !grid.iter().any(|&chi| (chi - TAU).abs() < 1e-9) {
        return Err(Error::GridTooSparse("grid must include chi = 2 pi".into()));
    }
    Ok(())
}

/// A configured measurement bench: pulse drives, noise, readout, and the
/// chi grid shared by all sweeps.
#[derive(Debug, Clone)]
pub struct Apparatus {
    pub compiler: PulseCompiler,
    pub noise: NoiseParams,
    pub readout: ReadoutModel,
    pub chi_grid: Vec<f64>,
    /// Refocusing delay inserted between preparation and analysis pulse in
    /// the projector measurement; 0 disables it.
    pub echo_tau_us: f64,
}

impl Apparatus {
    pub fn new(
        compiler: PulseCompiler,
        noise: NoiseParams,
        readout: ReadoutModel,
        chi_grid: Vec<f64>,
        echo_tau_us: f64,
    ) -> Result<Self> {
        compiler.validate()?;
        noise.validate()?;
        readout.validate()?;
        check_grid(&chi_grid)?;
        if echo_tau_us.is_nan() || echo_tau_us < 0.0 {
            return Err(Error::Config("echo_tau_us must be non-negative".into()));
        }
        Ok(Self {
            compiler,
            noise,
            readout,
            chi_grid,
            echo_tau_us,
        })
    }

    /// Sweep the analysis-pulse angle: evolve |0><0| through `prep` plus a
    /// chi pulse on MW1 for each grid point, reading counts at every point.
    /// One baseline drift offset is drawn per curve.
    pub fn chi_sweep(&self, prep: &PulseSequence, seed: u64) -> Result<SweepData> {
        check_grid(&self.chi_grid)?;
        let rho0 = QutritState::ket_zero().to_density();

        let drift = if self.readout.drift_bound > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TAG_DRIFT));
            rng.random_range(-self.readout.drift_bound..=self.readout.drift_bound)
        } else {
            0.0
        };

        let mut data = SweepData {
            chi_values: Vec::with_capacity(self.chi_grid.len()),
            signal: Vec::with_capacity(self.chi_grid.len()),
            signal_err: Vec::with_capacity(self.chi_grid.len()),
        };
        for (k, &chi) in self.chi_grid.iter().enumerate() {
            let point_seed = mix_seed(seed, k as u64);
            let mut seq = prep.clone();
            seq.push_pulse(self.compiler.chi_pulse(chi))?;
            let rho = apply_sequence(&seq, &rho0, &self.noise, point_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(point_seed, TAG_COUNTS));
            let (_, signal, err) = self.readout.draw(rho.population_zeeman(0), &mut rng);
            data.chi_values.push(chi);
            data.signal.push(signal + drift);
            data.signal_err.push(err);
        }
        Ok(data)
    }

    /// Measure <L_i> for the state |0>: prepare |l_i> (with an optional
    /// refocusing wait), sweep the analysis pulse, fit, and read the fitted
    /// curve at chi = 2 pi.
    pub fn li_experiment(&self, set: &PentagramSet, i: usize, seed: u64) -> Result<SweepOutcome> {
        let mut prep = self.compiler.compile_prep(set.direction(i))?;
        if self.echo_tau_us > 0.0 {
            prep.push_echo(self.echo_tau_us)?;
        }
        let data = self.chi_sweep(&prep, seed)?;
        let fit = fit_sinusoid(&data)?;
        Ok(SweepOutcome { data, fit })
    }

    /// Test the orthogonality of neighbors: prepare |l_(i+1)>, run the
    /// phase-inverted preparation of |l_i>, and measure the residual |0>
    /// population; ideally |<l_i|l_(i+1)>|^2 = 0.
    pub fn overlap_experiment(
        &self,
        set: &PentagramSet,
        i: usize,
        seed: u64,
    ) -> Result<SweepOutcome> {
        let next = i % 5 + 1;
        let mut prep = self.compiler.compile_prep(set.direction(next))?;
        let unprep = self.compiler.compile_prep(set.direction(i))?.inverted();
        prep.extend(&unprep);
        let data = self.chi_sweep(&prep, seed)?;
        let fit = fit_sinusoid(&data)?;
        Ok(SweepOutcome { data, fit })
    }
}

/// A sweep curve together with its fit.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub data: SweepData,
    pub fit: FitResult,
}

impl SweepOutcome {
    /// (estimate, error) pair read off the fit at chi = 2 pi.
    pub fn estimate(&self) -> (f64, f64) {
        (self.fit.point_estimate, self.fit.d_point)
    }
}
