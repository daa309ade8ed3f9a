// Copyright 2026 kcbs-sim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite: one test per release criterion, each printing a
//! pass line with its measured runtime (visible with `--nocapture`).
//!
//! Run with `cargo test -p kcbs-cli --test acceptance`.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kcbs_sim::analysis::{cauchy_schwarz_check, robust_bound, sigma_violation, ExperimentReport};
use kcbs_sim::experiment::{repetition_seed, run_experiment, ExperimentConfig};
use kcbs_sim::hidden_variable::{
    max_exclusive_sum, max_kcbs_over_assignments, mixture_value, HvDistribution,
};
use kcbs_sim::kcbs::{build_pentagram, quantum_prediction, PentagramSet};
use kcbs_sim::nv::{energy_levels, NvParams, REFERENCE_ODMR_HIGH_MHZ, REFERENCE_ODMR_LOW_MHZ};
use kcbs_sim::pulse::{
    apply_sequence, sequence_unitary, NoiseParams, PulseCompiler, PREP_FIDELITY_TARGET,
};
use kcbs_sim::qutrit::{spin_operator, Basis, DensityMatrix, Direction, HermitianOp, QutritState};

fn pass(criterion: &str, detail: String, started: Instant) {
    println!(
        "acceptance {criterion}: PASS ({detail}; {:.2?})",
        started.elapsed()
    );
}

fn random_direction(rng: &mut impl Rng) -> Direction {
    loop {
        if let Ok(d) = Direction::normalized(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ) {
            return d;
        }
    }
}

fn random_density(rng: &mut impl Rng) -> DensityMatrix {
    let mut a = Matrix3::<num_complex::Complex64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            a[(i, j)] = num_complex::Complex64::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
        }
    }
    let m = a * a.adjoint();
    DensityMatrix::new(m / m.trace(), Basis::Zeeman).unwrap()
}

#[test]
fn criterion_01_classical_bounds_by_enumeration() {
    let t0 = Instant::now();
    assert_eq!(max_kcbs_over_assignments(), 2);
    assert_eq!(max_exclusive_sum(), 2);
    assert!(
        t0.elapsed() < Duration::from_secs(1),
        "enumeration too slow"
    );
    pass("01 classical-bound", "max=2 exclusive-max=2".into(), t0);
}

#[test]
fn criterion_02_quantum_value_analytic_and_simulated() {
    let t0 = Instant::now();
    let sqrt5 = 5.0_f64.sqrt();

    let set = build_pentagram();
    let analytic = quantum_prediction(&set, &set.psi_state()).kcbs_value;
    assert!(
        (analytic - sqrt5).abs() < 1e-12,
        "analytic value {analytic} off sqrt(5)"
    );

    let out = run_experiment(&ExperimentConfig::noiseless()).unwrap();
    assert!(
        (out.report.sum - sqrt5).abs() < 1e-6,
        "simulated sweep+fit sum {} off sqrt(5)",
        out.report.sum
    );
    assert!(t0.elapsed() < Duration::from_secs(10), "pipeline too slow");
    pass(
        "02 quantum-value",
        format!("analytic={analytic:.12} simulated={:.8}", out.report.sum),
        t0,
    );
}

#[test]
fn criterion_03_pentagram_geometry() {
    let t0 = Instant::now();
    let set = build_pentagram();
    assert!(set.max_cyclic_dot() < 1e-12);
    let pred = quantum_prediction(&set, &set.psi_state());
    for &overlap in &pred.single_expectations {
        assert!(
            (overlap - 5.0_f64.powf(-0.5)).abs() < 1e-9,
            "overlap {overlap} off 1/sqrt(5)"
        );
        assert!((overlap - 0.4472136).abs() < 5e-8);
    }
    pass(
        "03 geometry",
        format!(
            "max cyclic dot {:.1e}, overlaps {:.7}",
            set.max_cyclic_dot(),
            pred.single_expectations[0]
        ),
        t0,
    );
}

#[test]
fn criterion_04_level_structure_near_reference_peaks() {
    let t0 = Instant::now();
    let levels = energy_levels(&NvParams::default());
    let d_low = (levels.f_minus_mhz - REFERENCE_ODMR_LOW_MHZ).abs();
    let d_high = (levels.f_plus_mhz - REFERENCE_ODMR_HIGH_MHZ).abs();
    assert!(d_low < 3.0, "f_minus off by {d_low} MHz");
    assert!(d_high < 3.0, "f_plus off by {d_high} MHz");
    pass(
        "04 level-structure",
        format!(
            "f-={:.1} (delta {:.2}), f+={:.1} (delta {:.2})",
            levels.f_minus_mhz, d_low, levels.f_plus_mhz, d_high
        ),
        t0,
    );
}

#[test]
fn criterion_05_robustness_formula() {
    let t0 = Instant::now();
    let bound = robust_bound(&[0.4392; 5], 0.0020);
    assert!((bound - 2.098).abs() < 1e-3, "bound {bound} off 2.098");
    pass("05 robustness-formula", format!("bound={bound:.6}"), t0);
}

#[test]
fn criterion_06_sigma_violation_arithmetic() {
    let t0 = Instant::now();
    let sigma = sigma_violation((2.196, 0.025)).unwrap();
    assert!((sigma - 7.84).abs() < 1e-2, "sigma {sigma} off 7.84");
    pass("06 sigma-violation", format!("sigma={sigma:.4}"), t0);
}

#[test]
fn criterion_07_noisy_end_to_end_statistics() {
    let t0 = Instant::now();
    let config = ExperimentConfig::reference();
    let apparatus = config.apparatus().unwrap();

    let runs = 100;
    let mut sums = Vec::with_capacity(runs);
    let mut epsilons = Vec::with_capacity(runs);
    let mut violations = 0;
    let mut point_errs = Vec::new();
    for rep in 0..runs {
        let seed = repetition_seed(config.seed, rep);
        let out = kcbs_sim::experiment::run_with_apparatus(&apparatus, seed).unwrap();
        sums.push(out.report.sum);
        epsilons.push(out.report.epsilon);
        if out.report.violated() {
            violations += 1;
        }
        if rep == 0 {
            point_errs.extend(out.li_outcomes[0].data.signal_err.iter().copied());
        }
    }
    let mean_sum = sums.iter().sum::<f64>() / runs as f64;
    let mean_eps = epsilons.iter().sum::<f64>() / runs as f64;
    let mean_point_err = point_errs.iter().sum::<f64>() / point_errs.len() as f64;

    assert!(
        (0.008..=0.014).contains(&mean_point_err),
        "per-point error {mean_point_err} not near 0.011"
    );
    assert!(
        (2.10..=2.24).contains(&mean_sum),
        "mean sum {mean_sum} outside [2.10, 2.24]"
    );
    assert!(
        (0.000..=0.006).contains(&mean_eps),
        "mean epsilon {mean_eps} outside [0.000, 0.006]"
    );
    assert!(
        violations >= runs * 9 / 10,
        "robust bound exceeded 2 in only {violations}/{runs} runs"
    );
    assert!(t0.elapsed() < Duration::from_secs(300), "batch too slow");
    pass(
        "07 noisy-end-to-end",
        format!(
            "mean sum={mean_sum:.4}, mean eps={mean_eps:.4}, violations={violations}/{runs}, point err={mean_point_err:.4}"
        ),
        t0,
    );
}

#[test]
fn criterion_08_compiler_contract() {
    let t0 = Instant::now();
    let compiler = PulseCompiler::default();
    let set = build_pentagram();
    let mut worst = 1.0f64;
    for &d in set.directions() {
        let seq = compiler.compile_prep(d).unwrap();
        worst = worst.min(compiler.prep_fidelity(&seq, d));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut worst_identity = 0.0f64;
    for _ in 0..100 {
        let d = random_direction(&mut rng);
        let seq = compiler.compile_prep(d).unwrap();
        worst = worst.min(compiler.prep_fidelity(&seq, d));
        let u = sequence_unitary(&seq);
        let u_inv = sequence_unitary(&seq.inverted());
        let dev = (u_inv * u - Matrix3::identity()).norm();
        worst_identity = worst_identity.max(dev);
    }
    assert!(worst >= PREP_FIDELITY_TARGET, "worst fidelity {worst}");
    assert!(
        worst_identity < 1e-10,
        "inverse composition deviates by {worst_identity:e}"
    );
    pass(
        "08 compiler-contract",
        format!("worst fidelity {worst:.12}, worst inverse dev {worst_identity:.1e}"),
        t0,
    );
}

#[test]
fn criterion_09_property_suites() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x90b5);
    let set = build_pentagram();
    let compiler = PulseCompiler::default();

    // density-matrix invariants on evolution outputs
    let noise = NoiseParams {
        t2_star_us: 35.0,
        t2_us: 148.0,
        detuning_sigma_mhz: 0.8,
        ensemble_size: 40,
    };
    let rho0 = QutritState::ket_zero().to_density();
    for k in 0..50 {
        let d = random_direction(&mut rng);
        let mut seq = compiler.compile_prep(d).unwrap();
        seq.push_echo(1.0).unwrap();
        seq.push_pulse(compiler.chi_pulse(rng.random_range(0.0..7.0)))
            .unwrap();
        let rho = apply_sequence(&seq, &rho0, &noise, k);
        assert!((rho.trace() - 1.0).abs() < 1e-10);
        assert!(rho.min_eigenvalue() >= -1e-8);
        let m = rho.entries();
        assert!((m - m.adjoint()).norm() < 1e-12);
    }

    // Cauchy-Schwarz on 1000 random density matrices
    for _ in 0..1000 {
        let rho = random_density(&mut rng);
        assert!(cauchy_schwarz_check(&rho, &set));
    }

    // convexity of hidden-variable mixtures on 1000 random distributions
    let classical_max = max_kcbs_over_assignments() as f64;
    for _ in 0..1000 {
        let mut w = [0.0f64; 32];
        for x in &mut w {
            *x = -rng.random_range(0.0f64..1.0).ln();
        }
        let total: f64 = w.iter().sum();
        for x in &mut w {
            *x /= total;
        }
        let s: f64 = w.iter().sum();
        for x in &mut w {
            *x /= s;
        }
        let d = HvDistribution::new(w).unwrap();
        assert!(mixture_value(&d) <= classical_max + 1e-12);
    }

    // commutation of squared spin components tracks axis orthogonality
    let squared = |axis: Direction| {
        let s = spin_operator(axis);
        HermitianOp::new(s.entries() * s.entries(), Basis::Zeeman).unwrap()
    };
    let mut checked = 0;
    while checked < 100 {
        let a = random_direction(&mut rng);
        let b = random_direction(&mut rng);
        let dot = a.dot(&b).abs();
        if dot > 0.05 && dot < 0.95 {
            assert!(squared(a).commutator_norm(&squared(b)) > 1e-3);
            checked += 1;
        }
    }
    for &(i, j) in &PentagramSet::cyclic_pairs() {
        let a = set.directions()[i];
        let b = set.directions()[j];
        assert!(squared(a).commutator_norm(&squared(b)) < 1e-10);
    }

    pass(
        "09 property-suites",
        "evolution invariants, Cauchy-Schwarz x1000, convexity x1000, commutators x100".into(),
        t0,
    );
}

#[test]
fn criterion_10_run_determinism() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    // a lighter-than-default but fully stochastic configuration
    std::fs::write(
        &config_path,
        r#"{"noise": {"ensemble_size": 32}, "readout": {"shots": 100000}, "seed": 11}"#,
    )
    .unwrap();

    let run = |out: &str| -> Vec<u8> {
        let out_dir = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_kcbs"))
            .args(["run", "--config"])
            .arg(&config_path)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(
            status.status.code() == Some(0) || status.status.code() == Some(1),
            "run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(out_dir.join("report.json")).unwrap()
    };
    let first = run("a");
    let second = run("b");
    assert_eq!(first, second, "reports differ between identical runs");
    let report = ExperimentReport::from_json(std::str::from_utf8(&first).unwrap()).unwrap();
    pass(
        "10 determinism",
        format!("byte-identical reports, sum={:.4}", report.sum),
        t0,
    );
}
