mod common;

use std::f64::consts::PI;

use cascade_core::attack::AttackVector;
use cascade_core::case::BusKind;
use cascade_core::dynamics::{line_flow, DynamicState, DynamicsConfig, IndicatorState, Simulator};
use cascade_core::ieee39::load_reduced;
use cascade_core::protection::{EventKind, ProtectionConfig, ScaleFactors};
use cascade_core::{Error, GridCase};
use common::{bus, file, line, single_bus, three_bus};

fn perturbed(sim: &Simulator) -> DynamicState {
    let mut s = sim.equilibrium_state();
    for (i, w) in s.omega.iter_mut().enumerate() {
        *w = 0.003 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    for (i, d) in s.delta.iter_mut().enumerate() {
        *d += 0.05 * i as f64;
    }
    s.voltage[0] *= 0.97;
    s.rho[0] = 0.1;
    s
}

#[test]
fn equilibrium_is_a_fixed_point_of_the_derivatives() {
    let sim = Simulator::new(three_bus(), DynamicsConfig::default()).unwrap();
    let s = sim.equilibrium_state();
    let d = sim.derivatives(&s, &IndicatorState::connected(sim.case()), &sim.equilibrium_load()).unwrap();
    for v in d.delta.iter().chain(&d.omega).chain(&d.voltage).chain(&d.rho) {
        assert!(v.abs() <= 1e-8, "{d:?}");
    }
}

#[test]
fn load_step_rocof_matches_swing_equation() {
    // Machine bus 1 tied to a near-infinite bus 2.
    let mut machine = bus(1, BusKind::GeneratorWithLoad, 1, 100.0, 50.0);
    machine.inertia_mws = 1000.0;
    let mut infinite = bus(2, BusKind::GeneratorWithLoad, 1, 50.0, 100.0);
    infinite.inertia_mws = 1e12;
    let case = GridCase::from_file(file("smib", vec![machine, infinite], vec![line(1, 2, 10.0, None)])).unwrap();
    let m = case.buses[0].inertia;
    let dp = 0.05;

    let mut cfg = DynamicsConfig::default();
    cfg.dt = 1e-4;
    let sim = Simulator::new(case, cfg).unwrap();
    let mut load = sim.equilibrium_load();
    load[0] += dp;
    let d = sim.derivatives(&sim.equilibrium_state(), &IndicatorState::connected(sim.case()), &load).unwrap();
    assert!((d.omega[0] - (-dp / m)).abs() < 1e-6, "{} vs {}", d.omega[0], -dp / m);

    // The same step applied as a static attack, one integration step.
    let x = AttackVector { lambda0: vec![dp * 100.0], interval: 60, scenario: 2, gain: 0.0 };
    let rec = sim.simulate(Some(&x), &[0], &ProtectionConfig::disabled(), cfg.dt).unwrap();
    let rocof = rec.final_state.omega[0] / cfg.dt;
    assert!((rocof - (-dp / m)).abs() < 1e-6, "{rocof}");
}

#[test]
fn governor_is_idle_inside_the_deadband() {
    let cfg = DynamicsConfig::default();
    let sim = Simulator::new(three_bus(), cfg).unwrap();
    let ind = IndicatorState::connected(sim.case());
    let mut s = sim.equilibrium_state();
    s.omega = vec![0.5 * cfg.deadband, -0.99 * cfg.deadband, 0.3];
    let d = sim.derivatives(&s, &ind, &sim.equilibrium_load()).unwrap();
    assert_eq!(d.rho, vec![0.0, 0.0]);

    s.omega = vec![0.02, -0.03, 0.0];
    let d = sim.derivatives(&s, &ind, &sim.equilibrium_load()).unwrap();
    assert_eq!(d.rho[0], -sim.case().buses[0].governor_gain * 0.02);
    assert_eq!(d.rho[1], sim.case().buses[1].governor_gain * 0.03);
}

#[test]
fn shedding_a_generator_removes_injection_and_field_drive() {
    let sim = Simulator::new(three_bus(), DynamicsConfig::default()).unwrap();
    let s = perturbed(&sim);
    let load = sim.equilibrium_load();
    let on = IndicatorState::connected(sim.case());
    for g in 0..sim.case().n_generators {
        let mut off = on.clone();
        off.psi[g] = false;
        let a = sim.derivatives(&s, &on, &load).unwrap();
        let b = sim.derivatives(&s, &off, &load).unwrap();
        let bus = &sim.case().buses[g];
        let gen = sim.generation(g, s.rho[g]);
        assert!((a.omega[g] - b.omega[g] - gen / bus.inertia).abs() < 1e-12);
        assert!((a.voltage[g] - b.voltage[g] - bus.field_voltage / bus.time_constant).abs() < 1e-12);
        for i in (0..sim.case().n_buses()).filter(|&i| i != g) {
            assert_eq!(a.omega[i], b.omega[i]);
            assert_eq!(a.voltage[i], b.voltage[i]);
        }
    }
}

#[test]
fn tripping_a_line_equals_removing_it() {
    let full = three_bus();
    let sim = Simulator::new(full.clone(), DynamicsConfig::default()).unwrap();
    let s = perturbed(&sim);
    let load = sim.equilibrium_load();
    for k in 0..full.lines.len() {
        let mut f = common::three_bus_file();
        f.lines.remove(k);
        let cut = GridCase::from_file(f).unwrap();
        let reduced = Simulator::with_equilibrium(cut, sim.equilibrium().clone(), DynamicsConfig::default()).unwrap();
        let mut ind = IndicatorState::connected(&full);
        ind.line[k] = false;
        let a = sim.derivatives(&s, &ind, &load).unwrap();
        let b = reduced.derivatives(&s, &IndicatorState::connected(reduced.case()), &load).unwrap();
        for (x, y) in a.omega.iter().zip(&b.omega).chain(a.voltage.iter().zip(&b.voltage)) {
            assert!((x - y).abs() < 1e-12, "line {k}: {x} vs {y}");
        }
    }
}

#[test]
fn non_finite_state_is_a_divergence() {
    let sim = Simulator::new(three_bus(), DynamicsConfig::default()).unwrap();
    let mut s = sim.equilibrium_state();
    s.voltage[1] = f64::NAN;
    let r = sim.derivatives(&s, &IndicatorState::connected(sim.case()), &sim.equilibrium_load());
    assert!(matches!(r, Err(Error::Divergence { .. })));
}

#[test]
fn lossless_two_bus_conserves_energy() {
    let mut g = bus(1, BusKind::Generator, 1, 100.0, 0.0);
    let mut l = bus(2, BusKind::Load, 1, 0.0, 100.0);
    for b in [&mut g, &mut l] {
        b.damping_mw = 0.0;
        b.governor_mw_per_s = 0.0;
        b.inertia_mws = 1000.0;
        // Voltages effectively frozen.
        b.time_constant_s = 1e12;
    }
    let case = GridCase::from_file(file("two-bus", vec![g, l], vec![line(1, 2, 10.0, None)])).unwrap();
    let cfg = DynamicsConfig { dt: 1e-3, output_stride: 10, ..DynamicsConfig::default() };
    let sim = Simulator::new(case, cfg).unwrap();
    let x = AttackVector { lambda0: vec![30.0], interval: 60, scenario: 2, gain: 0.0 };
    let rec = sim.simulate(Some(&x), &[1], &ProtectionConfig::disabled(), 10.0).unwrap();

    let c = sim.case();
    let ws = sim.omega_s();
    let p = [c.buses[0].p_gen, -(c.buses[1].p_load + 0.3)];
    let b = c.lines[0].susceptance;
    let energy = |s: &DynamicState| {
        let kinetic: f64 = (0..2).map(|i| 0.5 * c.buses[i].inertia * s.omega[i] * s.omega[i]).sum();
        let potential = -(p[0] * s.delta[0] + p[1] * s.delta[1] + b * s.voltage[0] * s.voltage[1] * (s.delta[0] - s.delta[1]).cos()) / ws;
        kinetic + potential
    };
    let h0 = energy(&rec.trajectory[0]);
    let drift = rec.trajectory.iter().map(|s| (energy(s) - h0).abs()).fold(0.0, f64::max);
    assert!(rec.max_abs_omega > 1e-4, "the step must excite a swing");
    assert!(drift < 1e-6, "energy drift {drift}");
}

#[test]
fn line_flow_examples() {
    assert_eq!(line_flow(1.0, 1.0, 5.0, 0.0), 0.0);
    assert!((line_flow(1.0, 1.0, 5.0, PI / 6.0) - 2.5).abs() < 1e-12);
    assert_eq!(line_flow(1.02, 0.97, 7.0, 0.3), -line_flow(0.97, 1.02, 7.0, -0.3));

    let sim = Simulator::new(three_bus(), DynamicsConfig::default()).unwrap();
    let s = perturbed(&sim);
    for (k, l) in sim.case().lines.iter().enumerate() {
        let direct = line_flow(s.voltage[l.from], s.voltage[l.to], l.susceptance, s.delta[l.from] - s.delta[l.to]);
        assert_eq!(sim.line_flow(&s, k), direct);
    }
}

#[test]
fn zero_attack_rests_at_equilibrium_on_ieee39() {
    let case = load_reduced().unwrap();
    for tau in 1..=4 {
        let sim = Simulator::new(case.apply_scenario(tau).unwrap(), DynamicsConfig::default()).unwrap();
        let nodes = sim.case().load_buses();
        let x = AttackVector::zero(nodes.len(), tau);
        let rec = sim.simulate(Some(&x), &nodes, &ProtectionConfig::default(), 60.0).unwrap();
        assert!(rec.events.is_empty(), "tau {tau}: {:?}", rec.events);
        assert!(sim.omega_s() * rec.max_abs_omega < 1e-6, "tau {tau}: {}", rec.max_abs_omega);
    }
}

#[test]
fn trajectory_times_increase_and_runs_are_deterministic() {
    let case = load_reduced().unwrap().apply_scenario(4).unwrap();
    let cfg = DynamicsConfig { output_stride: 50, ..DynamicsConfig::default() };
    let sim = Simulator::new(case, cfg).unwrap();
    let nodes = sim.case().load_buses();
    let x = AttackVector {
        lambda0: (0..nodes.len()).map(|i| 40.0 * (i % 5) as f64).collect(),
        interval: 3,
        scenario: 4,
        gain: 2.5,
    };
    let prot = ProtectionConfig::default().scaled(2.0);
    let a = sim.simulate(Some(&x), &nodes, &prot, 20.0).unwrap();
    assert!(a.trajectory.windows(2).all(|w| w[0].t < w[1].t));
    assert!(a.events.events.windows(2).all(|w| w[0].time <= w[1].time));
    let b = std::thread::scope(|s| s.spawn(|| sim.simulate(Some(&x), &nodes, &prot, 20.0).unwrap()).join().unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn deadband_holds_governor_along_trajectories() {
    let cfg = DynamicsConfig { output_stride: 1, ..DynamicsConfig::default() };
    let sim = Simulator::new(three_bus(), cfg).unwrap();
    let x = AttackVector { lambda0: vec![30.0, 10.0], interval: 2, scenario: 2, gain: 3.0 };
    let rec = sim.simulate(Some(&x), &[0, 2], &ProtectionConfig::disabled(), 20.0).unwrap();
    let w = cfg.deadband;
    let mut moved = 0;
    for pair in rec.trajectory.windows(2) {
        for g in 0..sim.case().n_generators {
            if pair[1].rho[g] != pair[0].rho[g] {
                moved += 1;
                // RK4 stages lie between the two endpoints of a smooth step.
                let peak = pair[0].omega[g].abs().max(pair[1].omega[g].abs());
                assert!(peak > 0.9 * w, "rho moved at t = {} with |omega| = {peak}", pair[1].t);
            }
        }
    }
    assert!(moved > 0, "the attack should push frequency outside the deadband");
}

/// Single-bus step response with no governor: `omega(t) = -dP/D (1 - exp(-D t / M))`.
#[test]
fn one_ufls_event_at_the_bisected_step() {
    let case = single_bus(100.0, 1000.0, 100.0);
    let (m, d) = (case.buses[0].inertia, case.buses[0].damping);
    let horizon = 60.0;
    let sim = Simulator::new(case, DynamicsConfig::default()).unwrap();
    let only_ufls = ProtectionConfig::default().scaled_each(&ScaleFactors { rocof: 1e6, ofgs: 1e6, ufls: 1.0, line: 1e6 });
    let threshold = only_ufls.ufls_thresholds[0];
    let events = |step_mw: f64| {
        let x = AttackVector { lambda0: vec![step_mw], interval: 60, scenario: 2, gain: 0.0 };
        sim.simulate(Some(&x), &[0], &only_ufls, horizon).unwrap().events
    };

    let (mut lo, mut hi) = (0.0, 50.0);
    assert!(events(lo).is_empty() && !events(hi).is_empty());
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if events(mid).is_empty() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let analytic_pu = -threshold * d / (1.0 - (-d * horizon / m).exp());
    assert!((hi / 100.0 - analytic_pu).abs() < 1e-5 * analytic_pu, "{} vs {analytic_pu}", hi / 100.0);

    let log = events(hi * 1.01);
    assert_eq!(log.len(), 1);
    assert_eq!(log.events[0].kind, EventKind::Ufls);
    assert!((log.events[0].magnitude - 10.0).abs() < 1e-9);
}
