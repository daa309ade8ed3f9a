// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! `kcbs` — command-line front end for the spin-1 contextuality simulator.
//!
//! Exit codes: 0 success (and inequality violated, for `run`), 1 inequality
//! not violated, 2 configuration error, 3 internal numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use kcbs_sim::analysis::{self, ExperimentReport};
use kcbs_sim::experiment::{repetition_seed, run_with_apparatus, ExperimentConfig, RunOutput};
use kcbs_sim::hidden_variable::{
    exclusive_assignments, kcbs_argmax, max_exclusive_sum, max_kcbs_over_assignments,
};
use kcbs_sim::kcbs::{build_pentagram, quantum_prediction, PentagramSet};
use kcbs_sim::nv::{energy_levels, NvParams, REFERENCE_ODMR_HIGH_MHZ, REFERENCE_ODMR_LOW_MHZ};
use kcbs_sim::pulse::PulseCompiler;
use kcbs_sim::qutrit::Direction;
use kcbs_sim::readout::{fit_sinusoid, SweepData};

#[derive(Parser)]
#[command(
    name = "kcbs",
    version,
    about = "Spin-1 KCBS contextuality test: geometry, bounds, pulse compilation, simulated runs"
)]
struct Cli {
    /// Experiment configuration JSON; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Emit machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,

    /// Directory for run artifacts (default: kcbs-out).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the pentagram directions and their geometric invariants.
    Geometry,
    /// Print the classical, exclusivity, and quantum bounds.
    Bounds {
        /// Also list the assignments attaining the classical maximum.
        #[arg(long)]
        list_argmax: bool,
    },
    /// Print the level energies and microwave transition frequencies.
    Levels {
        /// Override the static field magnitude (Gauss).
        #[arg(long, value_name = "GAUSS")]
        b_field: Option<f64>,
    },
    /// Compile a state-preparation pulse program and verify its fidelity.
    Compile {
        /// Pentagram direction index 1..=5.
        #[arg(long, conflicts_with_all = ["theta", "phi"])]
        index: Option<usize>,
        /// Polar angle of the target direction (radians).
        #[arg(long, requires = "phi")]
        theta: Option<f64>,
        /// Azimuth of the target direction (radians).
        #[arg(long, requires = "theta")]
        phi: Option<f64>,
        /// Emit the phase-inverted reversed program instead.
        #[arg(long)]
        invert: bool,
    },
    /// Run the full simulated experiment; writes sweep CSVs and report JSON.
    Run,
    /// Re-fit existing sweep CSVs from an output directory and rebuild the
    /// report.
    Analyze,
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    fn numeric(e: impl std::fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Geometry => cmd_geometry(cli),
        Command::Bounds { list_argmax } => cmd_bounds(cli, *list_argmax),
        Command::Levels { b_field } => cmd_levels(cli, *b_field),
        Command::Compile {
            index,
            theta,
            phi,
            invert,
        } => cmd_compile(cli, *index, *theta, *phi, *invert),
        Command::Run => cmd_run(cli),
        Command::Analyze => cmd_analyze(cli),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json_str(&text).map_err(CliError::config)?
        }
        None => ExperimentConfig::reference(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::config)?;
    Ok(config)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("kcbs-out"))
}

fn cmd_geometry(cli: &Cli) -> Result<ExitCode, CliError> {
    let set = build_pentagram();
    let psi = set.psi_state();
    let pred = quantum_prediction(&set, &psi);

    let dots: Vec<f64> = PentagramSet::cyclic_pairs()
        .iter()
        .map(|&(i, j)| set.directions()[i].dot(&set.directions()[j]))
        .collect();

    if cli.json {
        let directions: Vec<_> = set
            .directions()
            .iter()
            .map(|d| json!({"x": d.x(), "y": d.y(), "z": d.z()}))
            .collect();
        let doc = json!({
            "theta_rad": set.theta(),
            "cos_theta": set.theta().cos(),
            "phi_rad": set.phis(),
            "directions": directions,
            "cyclic_dots": dots,
            "psi_overlaps": pred.single_expectations,
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!(
            "pentagram geometry: theta = {:.7} rad, cos(theta) = {:.7}",
            set.theta(),
            set.theta().cos()
        );
        println!("  n      phi_n        l_n = (x, y, z)                        |<psi|l_n>|^2");
        for (k, d) in set.directions().iter().enumerate() {
            println!(
                "  {}  {:>9.6}   ({:>9.6}, {:>9.6}, {:>9.6})   {:.7}",
                k + 1,
                set.phis()[k],
                d.x(),
                d.y(),
                d.z(),
                pred.single_expectations[k],
            );
        }
        println!("  cyclic dot products l_i . l_(i+1):");
        for (k, dot) in dots.iter().enumerate() {
            println!("    l_{} . l_{} = {:+.3e}", k + 1, k % 5 + 2, dot);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bounds(cli: &Cli, list_argmax: bool) -> Result<ExitCode, CliError> {
    let classical = max_kcbs_over_assignments();
    let exclusive = max_exclusive_sum();
    let set = build_pentagram();
    let quantum = quantum_prediction(&set, &set.psi_state()).kcbs_value;
    let gap = quantum - classical as f64;

    let pattern = |a: &kcbs_sim::hidden_variable::Assignment| -> String {
        a.values().iter().map(|v| v.to_string()).collect()
    };

    if cli.json {
        let mut doc = json!({
            "classical_max": classical,
            "exclusive_max": exclusive,
            "exclusive_count": exclusive_assignments().len(),
            "quantum": quantum,
            "gap": gap,
        });
        if list_argmax {
            let argmax: Vec<String> = kcbs_argmax().iter().map(&pattern).collect();
            doc["argmax"] = json!(argmax);
        }
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!("classical={classical} exclusive={exclusive} quantum={quantum:.7} gap={gap:.7}");
        if list_argmax {
            println!("assignments attaining the classical maximum (a1..a5):");
            for a in kcbs_argmax() {
                println!("  {}", pattern(&a));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_levels(cli: &Cli, b_field: Option<f64>) -> Result<ExitCode, CliError> {
    let config = load_config(cli)?;
    let params = NvParams {
        b_field_gauss: b_field.unwrap_or(config.nv.b_field_gauss),
        ..config.nv
    };
    params.validate().map_err(CliError::config)?;
    let levels = energy_levels(&params);
    let delta_low = levels.f_minus_mhz - REFERENCE_ODMR_LOW_MHZ;
    let delta_high = levels.f_plus_mhz - REFERENCE_ODMR_HIGH_MHZ;

    if cli.json {
        let doc = json!({
            "b_field_gauss": params.b_field_gauss,
            "energies_mhz": {
                "m_plus_one": levels.energies_mhz[0],
                "m_zero": levels.energies_mhz[1],
                "m_minus_one": levels.energies_mhz[2],
            },
            "f_minus_mhz": levels.f_minus_mhz,
            "f_plus_mhz": levels.f_plus_mhz,
            "reference_low_mhz": REFERENCE_ODMR_LOW_MHZ,
            "reference_high_mhz": REFERENCE_ODMR_HIGH_MHZ,
            "delta_low_mhz": delta_low,
            "delta_high_mhz": delta_high,
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!("level energies at B = {} G:", params.b_field_gauss);
        println!("  E(+1) = {:>10.4} MHz", levels.energies_mhz[0]);
        println!("  E( 0) = {:>10.4} MHz", levels.energies_mhz[1]);
        println!("  E(-1) = {:>10.4} MHz", levels.energies_mhz[2]);
        println!(
            "  f_minus = {:.4} MHz (reference {:.1}, delta {:+.4})",
            levels.f_minus_mhz, REFERENCE_ODMR_LOW_MHZ, delta_low
        );
        println!(
            "  f_plus  = {:.4} MHz (reference {:.1}, delta {:+.4})",
            levels.f_plus_mhz, REFERENCE_ODMR_HIGH_MHZ, delta_high
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compile(
    cli: &Cli,
    index: Option<usize>,
    theta: Option<f64>,
    phi: Option<f64>,
    invert: bool,
) -> Result<ExitCode, CliError> {
    let config = load_config(cli)?;
    let target = match (index, theta, phi) {
        (Some(i), None, None) => {
            if !(1..=5).contains(&i) {
                return Err(CliError::Config("--index must be 1..=5".into()));
            }
            build_pentagram().direction(i)
        }
        (None, Some(t), Some(p)) => Direction::from_spherical(t, p),
        _ => {
            return Err(CliError::Config(
                "specify either --index or both --theta and --phi".into(),
            ))
        }
    };

    let compiler = PulseCompiler {
        rabi_mw1_mhz: config.drive.rabi_mw1_mhz,
        rabi_mw2_mhz: config.drive.rabi_mw2_mhz,
    };
    let prep = compiler.compile_prep(target).map_err(CliError::numeric)?;
    let (program, fidelity) = if invert {
        let inv = prep.inverted();
        // fidelity of returning the prepared state to |0>
        let round_trip = {
            let mut seq = prep.clone();
            seq.extend(&inv);
            compiler.prep_fidelity(&seq, Direction::z_axis())
        };
        (inv, round_trip)
    } else {
        let f = compiler.prep_fidelity(&prep, target);
        (prep, f)
    };

    if cli.json {
        let doc = json!({
            "target": {"x": target.x(), "y": target.y(), "z": target.z()},
            "inverted": invert,
            "fidelity": fidelity,
            "program": program.to_text(),
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        print!("{}", program.to_text());
        if program.is_empty() {
            println!("(empty program)");
        }
        println!("# verified fidelity: {fidelity:.12}");
    }
    Ok(ExitCode::SUCCESS)
}

fn write_run_artifacts(dir: &Path, output: &RunOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::config)?;
    for (k, outcome) in output.overlap_outcomes.iter().enumerate() {
        let path = dir.join(format!("overlap_{}.csv", k + 1));
        fs::write(&path, outcome.data.to_csv()).map_err(CliError::config)?;
    }
    for (k, outcome) in output.li_outcomes.iter().enumerate() {
        let path = dir.join(format!("li_{}.csv", k + 1));
        fs::write(&path, outcome.data.to_csv()).map_err(CliError::config)?;
    }
    fs::write(dir.join("report.json"), output.report.to_json()).map_err(CliError::config)?;
    Ok(())
}

fn print_report(report: &ExperimentReport, as_json: bool) {
    if as_json {
        println!("{}", report.to_json());
        return;
    }
    println!("  <L_i> estimates:");
    for (k, (v, e)) in report.li.iter().zip(report.li_err.iter()).enumerate() {
        println!("    L_{}: {:.5} +- {:.5}", k + 1, v, e);
    }
    println!(
        "  sum = {:.4} +- {:.4}  (classical bound {}, ideal {:.7})",
        report.sum, report.sum_err, report.classical_bound, report.quantum_ideal
    );
    println!(
        "  epsilon = {:.4} +- {:.4}, sigma violation = {:.2}",
        report.epsilon, report.epsilon_err, report.sigma
    );
    println!(
        "  robustness lower bound = {:.4} -> {}",
        report.robust_bound,
        if report.violated() {
            "inequality violated"
        } else {
            "no violation"
        }
    );
}

fn cmd_run(cli: &Cli) -> Result<ExitCode, CliError> {
    let config = load_config(cli)?;
    let dir = out_dir(cli);
    let apparatus = config.apparatus().map_err(CliError::config)?;

    let mut reports = Vec::with_capacity(config.repetitions);
    for rep in 0..config.repetitions {
        let seed = repetition_seed(config.seed, rep);
        let output = run_with_apparatus(&apparatus, seed).map_err(CliError::numeric)?;
        let rep_dir = if config.repetitions == 1 {
            dir.clone()
        } else {
            dir.join(format!("rep_{rep:03}"))
        };
        write_run_artifacts(&rep_dir, &output)?;
        for (kind, outcomes) in [
            ("overlap", &output.overlap_outcomes),
            ("li", &output.li_outcomes),
        ] {
            for (k, outcome) in outcomes.iter().enumerate() {
                if outcome.fit.out_of_range {
                    eprintln!(
                        "warning: {kind}_{} fit estimate {:.4} outside [-0.05, 1.05]",
                        k + 1,
                        outcome.fit.point_estimate
                    );
                }
            }
        }
        if !cli.json {
            println!(
                "run {} (seed {seed}) -> {}",
                rep + 1,
                rep_dir.join("report.json").display()
            );
            print_report(&output.report, false);
        }
        reports.push(output.report);
    }

    let violated = if reports.len() == 1 {
        if cli.json {
            print_report(&reports[0], true);
        }
        reports[0].violated()
    } else {
        let n = reports.len() as f64;
        let mean_sum = reports.iter().map(|r| r.sum).sum::<f64>() / n;
        let mean_eps = reports.iter().map(|r| r.epsilon).sum::<f64>() / n;
        let mean_bound = reports.iter().map(|r| r.robust_bound).sum::<f64>() / n;
        let fraction = reports.iter().filter(|r| r.violated()).count() as f64 / n;
        let summary = json!({
            "repetitions": reports.len(),
            "mean_sum": mean_sum,
            "mean_epsilon": mean_eps,
            "mean_robust_bound": mean_bound,
            "violation_fraction": fraction,
        });
        let text = serde_json::to_string_pretty(&summary).unwrap();
        fs::write(dir.join("summary.json"), &text).map_err(CliError::config)?;
        println!("{text}");
        mean_bound > analysis::CLASSICAL_BOUND
    };

    Ok(if violated {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_analyze(cli: &Cli) -> Result<ExitCode, CliError> {
    let dir = out_dir(cli);
    let read_fit = |name: String| -> Result<(f64, f64), CliError> {
        let path = dir.join(&name);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let data = SweepData::from_csv(&text).map_err(CliError::config)?;
        let fit = fit_sinusoid(&data).map_err(CliError::numeric)?;
        Ok((fit.point_estimate, fit.d_point))
    };

    let mut overlaps = [(0.0, 0.0); 5];
    let mut li = [(0.0, 0.0); 5];
    for i in 1..=5 {
        overlaps[i - 1] = read_fit(format!("overlap_{i}.csv"))?;
        li[i - 1] = read_fit(format!("li_{i}.csv"))?;
    }
    let report = ExperimentReport::from_measurements(&li, &overlaps).map_err(CliError::numeric)?;
    print_report(&report, cli.json);
    Ok(if report.violated() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
