//! The IEEE 39-bus (New England) system and its Kron reduction to the ten
//! generator buses plus the seventeen load buses that carry significant load.
//!
//! Branch reactances, loads, dispatch and machine data are the published
//! values (100 MVA base). Running [`reduced_case`] with default parameters
//! regenerates `data/ieee39_kron.json`:
//!
//! 1. build the 39-bus Laplacian susceptance matrix from branch reactances
//!    (resistance, charging and tap ratios ignored);
//! 2. eliminate the twelve remaining buses by Schur complement. The two tiny
//!    loads at buses 9 and 12 are dropped with them;
//! 3. rescale dispatch so that generation equals the retained load;
//! 4. derive field voltages so that `E = 1` at every bus in the base scenario;
//! 5. set interconnector limits from the equilibrium flows of all scenarios.

use crate::case::{BusKind, BusRecord, CaseFile, GridCase, LineRecord, CASE_SCHEMA, SCENARIO_FACTORS};
use crate::equilibrium::{solve_angles, solve_equilibrium, EquilibriumOptions};
use crate::error::Result;
use crate::kron::kron_reduce;
use nalgebra::DMatrix;

pub const BASE_MVA: f64 = 100.0;
pub const FREQUENCY_HZ: f64 = 50.0;

/// `(from, to, x)` in per-unit.
pub const BRANCHES: [(u32, u32, f64); 46] = [
    (1, 2, 0.0411),
    (1, 39, 0.025),
    (2, 3, 0.0151),
    (2, 25, 0.0086),
    (2, 30, 0.0181),
    (3, 4, 0.0213),
    (3, 18, 0.0133),
    (4, 5, 0.0128),
    (4, 14, 0.0129),
    (5, 6, 0.0026),
    (5, 8, 0.0112),
    (6, 7, 0.0092),
    (6, 11, 0.0082),
    (6, 31, 0.025),
    (7, 8, 0.0046),
    (8, 9, 0.0363),
    (9, 39, 0.025),
    (10, 11, 0.0043),
    (10, 13, 0.0043),
    (10, 32, 0.02),
    (12, 11, 0.0435),
    (12, 13, 0.0435),
    (13, 14, 0.0101),
    (14, 15, 0.0217),
    (15, 16, 0.0094),
    (16, 17, 0.0089),
    (16, 19, 0.0195),
    (16, 21, 0.0135),
    (16, 24, 0.0059),
    (17, 18, 0.0082),
    (17, 27, 0.0173),
    (19, 20, 0.0138),
    (19, 33, 0.0142),
    (20, 34, 0.018),
    (21, 22, 0.014),
    (22, 23, 0.0096),
    (22, 35, 0.0143),
    (23, 24, 0.035),
    (23, 36, 0.0272),
    (25, 26, 0.0323),
    (25, 37, 0.0232),
    (26, 27, 0.0147),
    (26, 28, 0.0474),
    (26, 29, 0.0625),
    (28, 29, 0.0151),
    (29, 38, 0.0156),
];

/// Active loads in MW, `(bus, P_d)`.
pub const LOADS: [(u32, f64); 21] = [
    (1, 97.6),
    (3, 322.0),
    (4, 500.0),
    (7, 233.8),
    (8, 522.0),
    (9, 6.5),
    (12, 8.53),
    (15, 320.0),
    (16, 329.0),
    (18, 158.0),
    (20, 680.0),
    (21, 274.0),
    (23, 247.5),
    (24, 308.6),
    (25, 224.0),
    (26, 139.0),
    (27, 281.0),
    (28, 206.0),
    (29, 283.5),
    (31, 9.2),
    (39, 1104.0),
];

/// Per generator bus 30..=39: dispatch (MW), H (s), x_d, x'_d, T'_d0 (s).
pub const GENERATORS: [(u32, f64, f64, f64, f64, f64); 10] = [
    (30, 250.0, 42.0, 0.1, 0.031, 10.2),
    (31, 677.871, 30.3, 0.295, 0.0697, 6.56),
    (32, 650.0, 35.8, 0.2495, 0.0531, 5.7),
    (33, 632.0, 28.6, 0.262, 0.0436, 5.69),
    (34, 508.0, 26.0, 0.67, 0.132, 5.4),
    (35, 650.0, 34.8, 0.254, 0.05, 7.3),
    (36, 560.0, 26.4, 0.295, 0.049, 5.66),
    (37, 540.0, 24.3, 0.29, 0.057, 6.7),
    (38, 830.0, 34.5, 0.2106, 0.057, 4.79),
    (39, 1000.0, 500.0, 0.02, 0.006, 7.0),
];

/// Load buses kept after reduction, in case order.
pub const KEPT_LOADS: [u32; 17] = [1, 3, 4, 7, 8, 15, 16, 18, 20, 21, 23, 24, 25, 26, 27, 28, 29];

/// Conventional three-area partition.
pub fn area_of(bus: u32) -> u8 {
    match bus {
        1..=14 | 30 | 31 | 32 | 39 => 1,
        25..=29 | 37 | 38 => 2,
        _ => 3,
    }
}

/// Dynamic parameters not contained in the published data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionParams {
    /// Generator cap as a multiple of (rebalanced) dispatch.
    pub p_max_factor: f64,
    /// Maximum nodal load as a multiple of base-scenario load.
    pub load_max_factor: f64,
    /// Generator damping per unit of rated output, pu power per pu
    /// frequency; 20 is the primary response of a 5% droop.
    pub gen_damping: f64,
    /// Load damping per unit of base load, pu power per pu frequency.
    pub load_damping: f64,
    /// Governor gain per unit of rated output, 1/s per pu frequency.
    pub governor_gain: f64,
    /// Load-bus inertia as a fraction of the mean generator inertia.
    pub load_inertia_fraction: f64,
    pub load_time_constant: f64,
    pub load_reactance: f64,
    /// Interconnector limit as a multiple of the largest equilibrium flow
    /// over all scenarios.
    pub line_limit_factor: f64,
    /// Lower bound on interconnector limits, MW.
    pub line_limit_floor_mw: f64,
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams {
            p_max_factor: 1.5,
            load_max_factor: 2.0,
            gen_damping: 20.0,
            load_damping: 1.0,
            governor_gain: 5.0,
            load_inertia_fraction: 0.01,
            load_time_constant: 1.0,
            load_reactance: 0.05,
            line_limit_factor: 1.5,
            line_limit_floor_mw: 100.0,
        }
    }
}

/// Full 39x39 Laplacian susceptance matrix, bus `k` at index `k - 1`.
pub fn full_susceptance() -> DMatrix<f64> {
    let mut b = DMatrix::zeros(39, 39);
    for &(f, t, x) in &BRANCHES {
        let (i, j, s) = (f as usize - 1, t as usize - 1, 1.0 / x);
        b[(i, j)] += s;
        b[(j, i)] += s;
        b[(i, i)] -= s;
        b[(j, j)] -= s;
    }
    b
}

/// Bus numbers of the reduced case in order: generators 30..=39, then loads.
pub fn kept_buses() -> Vec<u32> {
    GENERATORS.iter().map(|g| g.0).chain(KEPT_LOADS).collect()
}

fn load_at(bus: u32) -> f64 {
    LOADS.iter().find(|l| l.0 == bus).map_or(0.0, |l| l.1)
}

pub fn reduced_case(params: &ReductionParams) -> Result<CaseFile> {
    let kept = kept_buses();
    let idx: Vec<usize> = kept.iter().map(|&b| b as usize - 1).collect();
    let reduced = kron_reduce(&full_susceptance(), &idx)?;
    let n = kept.len();

    // Drop numerically empty couplings.
    let scale = reduced.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut lines = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let s = reduced[(i, j)];
            if s.abs() > 1e-9 * scale {
                lines.push(LineRecord {
                    from: kept[i],
                    to: kept[j],
                    susceptance_pu: s,
                    flow_limit_mw: (area_of(kept[i]) != area_of(kept[j])).then_some(f64::MAX),
                });
            }
        }
    }

    let total_load: f64 = kept.iter().map(|&b| load_at(b)).sum();
    let total_dispatch: f64 = GENERATORS.iter().map(|g| g.1).sum();
    let rebalance = total_load / total_dispatch;
    let mean_m = GENERATORS.iter().map(|g| 2.0 * g.2).sum::<f64>() / GENERATORS.len() as f64;

    let mut buses = Vec::with_capacity(n);
    for &(id, dispatch, h, xd, xdp, tdo) in &GENERATORS {
        let p_gen = dispatch * rebalance;
        let p_max = params.p_max_factor * p_gen;
        let p_load = load_at(id);
        buses.push(BusRecord {
            id,
            kind: if p_load > 0.0 { BusKind::GeneratorWithLoad } else { BusKind::Generator },
            area: area_of(id),
            inertia_mws: 2.0 * h * BASE_MVA,
            damping_mw: params.gen_damping * p_max + params.load_damping * p_load,
            governor_mw_per_s: params.governor_gain * p_max,
            time_constant_s: tdo,
            reactance_pu: xd - xdp,
            field_voltage_pu: 1.0,
            p_gen_mw: p_gen,
            p_max_mw: p_max,
            p_load_mw: p_load,
            p_load_max_mw: params.load_max_factor * p_load,
        });
    }
    for &id in &KEPT_LOADS {
        let p_load = load_at(id);
        buses.push(BusRecord {
            id,
            kind: BusKind::Load,
            area: area_of(id),
            inertia_mws: params.load_inertia_fraction * mean_m * BASE_MVA,
            damping_mw: params.load_damping * p_load,
            governor_mw_per_s: 0.0,
            time_constant_s: params.load_time_constant,
            reactance_pu: params.load_reactance,
            field_voltage_pu: 1.0,
            p_gen_mw: 0.0,
            p_max_mw: 0.0,
            p_load_mw: p_load,
            p_load_max_mw: params.load_max_factor * p_load,
        });
    }

    let mut file = CaseFile {
        schema: CASE_SCHEMA.into(),
        name: "ieee39-kron".into(),
        base_mva: BASE_MVA,
        frequency_hz: FREQUENCY_HZ,
        buses,
        lines,
    };

    // Field voltages giving unit magnitudes in the base scenario.
    let case = GridCase::from_file(file.clone())?;
    let ones = vec![1.0; n];
    let delta = solve_angles(&case, &ones, &EquilibriumOptions::default())?;
    for (i, rec) in file.buses.iter_mut().enumerate() {
        let c: f64 = (0..n).map(|j| case.susceptance[(i, j)] * (delta[i] - delta[j]).cos()).sum();
        rec.field_voltage_pu = 1.0 - rec.reactance_pu * c;
    }

    // Interconnector limits from the equilibrium flows of every scenario.
    let case = GridCase::from_file(file.clone())?;
    let mut peak = vec![0.0f64; case.lines.len()];
    for tau in 1..=SCENARIO_FACTORS.len() as u8 {
        let scen = case.apply_scenario(tau)?;
        let eq = solve_equilibrium(&scen)?;
        for (k, l) in scen.lines.iter().enumerate() {
            let flow = eq.voltage[l.from] * eq.voltage[l.to] * l.susceptance * (eq.delta[l.from] - eq.delta[l.to]).sin();
            peak[k] = peak[k].max(flow.abs() * BASE_MVA);
        }
    }
    for (rec, p) in file.lines.iter_mut().zip(peak) {
        if rec.flow_limit_mw.is_some() {
            rec.flow_limit_mw = Some((params.line_limit_factor * p).max(params.line_limit_floor_mw));
        }
    }
    Ok(file)
}

/// The shipped reduced case.
pub fn load_reduced() -> Result<GridCase> {
    GridCase::from_json_str(include_str!("../data/ieee39_kron.json"))
}
