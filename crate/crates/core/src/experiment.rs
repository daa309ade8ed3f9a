// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end experiment orchestration: configuration, the ten sweeps (five
//! neighbor-orthogonality tests, five projector measurements), and the final
//! report.

use serde::{Deserialize, Serialize};

use crate::analysis::ExperimentReport;
use crate::error::{Error, Result};
use crate::kcbs::build_pentagram;
use crate::nv::NvParams;
use crate::pulse::{mix_seed, NoiseParams, PulseCompiler};
use crate::readout::{chi_grid, Apparatus, ReadoutModel, SweepOutcome};

// sub-seed tags for the ten independent sweeps of one run
const TAG_OVERLAP: u64 = 100;
const TAG_LI: u64 = 200;

/// Drive strengths for the two microwave channels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub rabi_mw1_mhz: f64,
    pub rabi_mw2_mhz: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            rabi_mw1_mhz: 20.0,
            rabi_mw2_mhz: 20.0,
        }
    }
}

/// Grid specification for the analysis-pulse sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub points_per_period: usize,
    pub periods: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            points_per_period: 16,
            periods: 1.25,
        }
    }
}

/// Noise configuration; `t2_us: null` disables the coherence decay and
/// `detuning_sigma_mhz: null` calibrates the width from `t2_star_us`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub t2_star_us: f64,
    pub t2_us: Option<f64>,
    pub detuning_sigma_mhz: Option<f64>,
    pub ensemble_size: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            t2_star_us: 35.0,
            t2_us: Some(148.0),
            detuning_sigma_mhz: None,
            ensemble_size: 160,
        }
    }
}

impl NoiseConfig {
    fn build(&self, rabi_mhz: f64) -> Result<NoiseParams> {
        let t2_us = self.t2_us.unwrap_or(f64::INFINITY);
        let params = match self.detuning_sigma_mhz {
            Some(sigma) => NoiseParams {
                t2_star_us: self.t2_star_us,
                t2_us,
                detuning_sigma_mhz: sigma,
                ensemble_size: self.ensemble_size,
            },
            None => NoiseParams::calibrated(self.t2_star_us, t2_us, rabi_mhz, self.ensemble_size),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Complete run configuration, loadable from a single JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nv: NvParams,
    pub noise: NoiseConfig,
    pub readout: ReadoutModel,
    pub drive: DriveConfig,
    pub sweep: SweepSpec,
    /// Refocusing delay around the projector measurement; 0 disables it.
    pub echo_tau_us: f64,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nv: NvParams::default(),
            noise: NoiseConfig::default(),
            readout: ReadoutModel::default(),
            drive: DriveConfig::default(),
            sweep: SweepSpec::default(),
            echo_tau_us: 1.0,
            seed: 20120704,
            repetitions: 1,
        }
    }
}

impl ExperimentConfig {
    /// The default configuration: reference noise parameters and enough
    /// shots for a per-point statistical error near 0.011.
    pub fn reference() -> Self {
        Self::default()
    }

    /// Everything ideal: no broadening, no decay, exact readout.
    pub fn noiseless() -> Self {
        Self {
            noise: NoiseConfig {
                t2_star_us: f64::INFINITY,
                t2_us: None,
                detuning_sigma_mhz: Some(0.0),
                ensemble_size: 1,
            },
            readout: ReadoutModel::ideal(),
            echo_tau_us: 0.0,
            ..Self::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad config JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.nv.validate()?;
        self.readout.validate()?;
        if self.drive.rabi_mw1_mhz.is_nan()
            || self.drive.rabi_mw1_mhz <= 0.0
            || self.drive.rabi_mw2_mhz.is_nan()
            || self.drive.rabi_mw2_mhz <= 0.0
        {
            return Err(Error::Config(
                "drive Rabi frequencies must be positive".into(),
            ));
        }
        if self.sweep.points_per_period < 8 {
            return Err(Error::Config(
                "sweep needs at least 8 points per period".into(),
            ));
        }
        if self.sweep.periods.is_nan() || self.sweep.periods < 1.0 {
            return Err(Error::Config("sweep must cover at least one period".into()));
        }
        if self.echo_tau_us.is_nan() || self.echo_tau_us < 0.0 {
            return Err(Error::Config("echo_tau_us must be non-negative".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.noise.t2_star_us.is_nan() || self.noise.t2_star_us <= 0.0 {
            return Err(Error::Config("t2_star_us must be positive".into()));
        }
        Ok(())
    }

    /// Build the measurement bench this configuration describes. The
    /// detuning-width calibration runs here, once.
    pub fn apparatus(&self) -> Result<Apparatus> {
        let compiler = PulseCompiler {
            rabi_mw1_mhz: self.drive.rabi_mw1_mhz,
            rabi_mw2_mhz: self.drive.rabi_mw2_mhz,
        };
        let noise = self.noise.build(self.drive.rabi_mw1_mhz)?;
        Apparatus::new(
            compiler,
            noise,
            self.readout,
            chi_grid(self.sweep.points_per_period, self.sweep.periods),
            self.echo_tau_us,
        )
    }
}

/// Everything a run produces: the ten sweep curves and the final report.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub overlap_outcomes: Vec<SweepOutcome>,
    pub li_outcomes: Vec<SweepOutcome>,
}

/// Execute the full pipeline under one seed: five orthogonality sweeps,
/// five projector sweeps, then aggregation.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let apparatus = config.apparatus()?;
    run_with_apparatus(&apparatus, config.seed)
}

/// Run against a prebuilt bench, e.g. to reuse one calibration across many
/// seeded repetitions.
pub fn run_with_apparatus(apparatus: &Apparatus, seed: u64) -> Result<RunOutput> {
    let set = build_pentagram();

    let mut overlap_outcomes = Vec::with_capacity(5);
    let mut overlap_estimates = [(0.0, 0.0); 5];
    for i in 1..=5 {
        let outcome =
            apparatus.overlap_experiment(&set, i, mix_seed(seed, TAG_OVERLAP + i as u64))?;
        overlap_estimates[i - 1] = outcome.estimate();
        overlap_outcomes.push(outcome);
    }

    let mut li_outcomes = Vec::with_capacity(5);
    let mut li_estimates = [(0.0, 0.0); 5];
    for i in 1..=5 {
        let outcome = apparatus.li_experiment(&set, i, mix_seed(seed, TAG_LI + i as u64))?;
        li_estimates[i - 1] = outcome.estimate();
        li_outcomes.push(outcome);
    }

    let report = ExperimentReport::from_measurements(&li_estimates, &overlap_estimates)?;
    Ok(RunOutput {
        report,
        overlap_outcomes,
        li_outcomes,
    })
}

/// Seed used for repetition `rep`; repetition 0 is the configured seed
/// itself, so a single-repetition run is reproducible byte for byte.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    if rep == 0 {
        seed
    } else {
        mix_seed(seed, 0x5eed_0000 + rep as u64)
    }
}
