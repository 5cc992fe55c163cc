use std::f64::consts::PI;

use dms_battery::davies::DaviesModel;
use dms_battery::dynamics::{
    evolve, evolve_with, pure_state, DriveEnvelope, EnvelopeShape, Evolver, SimulationConfig, StateSelector,
};
use dms_battery::msclass::{analytic_two_qutrit, Analysis};
use dms_battery::qsys::{drive_operator, QuditSpec, SystemSpec};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn two_qutrits() -> SystemSpec {
    SystemSpec::two_qutrits(10.0, 0.2, 1.0).unwrap()
}

#[test]
fn free_decay_matches_rate_equations() {
    // A2 -> D1 and B1 -> ground at rate 2 gamma
    let a = Analysis::new(&two_qutrits(), 0.1).unwrap();
    let funnel = evolve_with(
        &a,
        &SimulationConfig::decay(two_qutrits(), 0.1, StateSelector::Funnel, 20.0),
    )
    .unwrap();
    let bright = evolve_with(
        &a,
        &SimulationConfig::decay(two_qutrits(), 0.1, StateSelector::Bright, 20.0),
    )
    .unwrap();
    for (i, &t) in funnel.times.iter().enumerate() {
        let p = (-0.2 * t).exp();
        assert!(
            (funnel.energy[i] - (19.8 * p + 9.0 * (1.0 - p))).abs() < 1e-8,
            "t = {t}"
        );
    }
    for (i, &t) in bright.times.iter().enumerate() {
        assert!((bright.energy[i] - 11.0 * (-0.2 * t).exp()).abs() < 1e-8, "t = {t}");
    }
}

#[test]
fn closed_system_keeps_eigenstate_populations() {
    let spec = two_qutrits();
    let r = analytic_two_qutrit(10.0, 0.2, 1.0);
    let psi = (&r.a2 + &r.b1 + &r.e_minus).normalize();
    let cfg = SimulationConfig::decay(
        spec.clone(),
        0.0,
        StateSelector::Custom(psi.iter().map(|z| [z.re, z.im]).collect()),
        10.0,
    );
    let traj = evolve(&cfg).unwrap();
    let first = &traj.populations[0];
    for pops in &traj.populations {
        for (p, q) in pops.iter().zip(first) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

#[test]
fn step_halving_converges() {
    let spec = two_qutrits();
    let mut cfg = SimulationConfig::charging(spec, 0.1);
    cfg.drive.amplitude = 1.0;
    cfg.t_final = 20.0;
    let coarse = evolve(&cfg).unwrap();
    cfg.dt *= 0.5;
    let fine = evolve(&cfg).unwrap();
    let rel = (coarse.final_energy() - fine.final_energy()).abs() / fine.final_energy().abs();
    assert!(rel < 1e-6, "relative change {rel:e}");
}

#[test]
fn qubit_runs_ignore_anharmonicity() {
    let run = |alpha: f64| {
        let spec = SystemSpec::uniform(2, QuditSpec::new(2, 10.0, alpha).unwrap(), 1.0).unwrap();
        let mut cfg = SimulationConfig::charging(spec, 0.1);
        cfg.t_final = 10.0;
        evolve(&cfg).unwrap()
    };
    let (a, b) = (run(0.0), run(0.2));
    assert_eq!(a.energy, b.energy);
    assert_eq!(a.fidelity, b.fidelity);
}

#[test]
fn closed_charging_differs_from_open_charging() {
    let mut cfg = SimulationConfig::charging(two_qutrits(), 0.1);
    cfg.t_final = 1.0;
    cfg.drive.cutoff_time = 6.0;
    let open = evolve(&cfg).unwrap();
    cfg.dissipative_charging = false;
    let closed = evolve(&cfg).unwrap();
    // the charged population is mostly dark, so the effect is small
    assert!((closed.final_energy() - open.final_energy()).abs() > 1e-7);
    assert!(closed.max_trace_error() < 1e-6);
}

#[test]
fn hard_cutoff_is_a_grid_point() {
    let mut cfg = SimulationConfig::charging(two_qutrits(), 0.1);
    cfg.drive.shape = EnvelopeShape::HardCutoff;
    cfg.drive.cutoff_time = 1.234;
    cfg.t_final = 1.0;
    let traj = evolve(&cfg).unwrap();
    assert!((traj.drive_off_time - 0.1234).abs() < 1e-15);
    assert!(traj.times.iter().any(|&t| (t - 0.1234).abs() < 1e-15));
}

fn arb_drive() -> impl Strategy<Value = (f64, f64, f64, bool, f64)> {
    (0.1f64..2.0, 0.0f64..(2.0 * PI), 0.5f64..6.0, any::<bool>(), 0.0f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: RngSeed::Fixed(0x5eed_0201),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn trajectories_respect_invariants((amp, phase, cutoff, hard, alpha) in arb_drive()) {
        let spec = SystemSpec::two_qutrits(10.0, alpha, 1.0).unwrap();
        let model = DaviesModel::new(&spec, 0.1).unwrap();
        let phases = vec![0.0, phase];
        let ev = Evolver::new(&model, &drive_operator(&spec, &phases).unwrap()).unwrap();
        let envelope = DriveEnvelope {
            amplitude: amp,
            phases,
            cutoff_time: cutoff,
            shape: if hard { EnvelopeShape::HardCutoff } else { EnvelopeShape::default() },
        };
        let rho0 = pure_state(&spec.ground_state());
        let traj = ev.run(&rho0, &envelope, 15.0, 1e-3, 50, true, &spec.ground_state()).unwrap();
        prop_assert!(traj.max_trace_error() < 1e-6);
        prop_assert!(traj.min_min_eigenvalue() >= -1e-6);
        prop_assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(traj.max_energy_rise_after(traj.drive_off_time) <= 1e-8);
    }
}
