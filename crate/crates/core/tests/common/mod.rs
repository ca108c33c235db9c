#![allow(dead_code)]

use cascade_core::case::{BusKind, BusRecord, CaseFile, LineRecord, CASE_SCHEMA};
use cascade_core::GridCase;

pub fn bus(id: u32, kind: BusKind, area: u8, p_gen: f64, p_load: f64) -> BusRecord {
    let gen = kind.is_generator();
    BusRecord {
        id,
        kind,
        area,
        inertia_mws: if gen { 1000.0 } else { 10.0 },
        damping_mw: 100.0,
        governor_mw_per_s: if gen { 500.0 } else { 0.0 },
        time_constant_s: if gen { 6.0 } else { 0.5 },
        reactance_pu: if gen { 0.2 } else { 0.02 },
        field_voltage_pu: 1.0,
        p_gen_mw: p_gen,
        p_max_mw: if gen { 2.0 * p_gen.max(100.0) } else { 0.0 },
        p_load_mw: p_load,
        p_load_max_mw: 2.0 * p_load,
    }
}

pub fn line(from: u32, to: u32, b: f64, limit: Option<f64>) -> LineRecord {
    LineRecord { from, to, susceptance_pu: b, flow_limit_mw: limit }
}

pub fn file(name: &str, buses: Vec<BusRecord>, lines: Vec<LineRecord>) -> CaseFile {
    CaseFile { schema: CASE_SCHEMA.into(), name: name.into(), base_mva: 100.0, frequency_hz: 50.0, buses, lines }
}

/// Generators 1 and 2 (2 also carries load) in area 1, load bus 3 in area 2.
pub fn three_bus_file() -> CaseFile {
    file(
        "three-bus",
        vec![
            bus(3, BusKind::Load, 2, 0.0, 80.0),
            bus(1, BusKind::Generator, 1, 100.0, 0.0),
            bus(2, BusKind::GeneratorWithLoad, 1, 60.0, 80.0),
        ],
        vec![line(1, 2, 10.0, None), line(2, 3, 8.0, Some(150.0)), line(1, 3, 5.0, Some(150.0))],
    )
}

pub fn three_bus() -> GridCase {
    GridCase::from_file(three_bus_file()).unwrap()
}

/// One generator feeding its own load, no lines and no governor.
pub fn single_bus(p: f64, inertia_mws: f64, damping_mw: f64) -> GridCase {
    let mut b = bus(1, BusKind::GeneratorWithLoad, 1, p, p);
    b.inertia_mws = inertia_mws;
    b.damping_mw = damping_mw;
    b.governor_mw_per_s = 0.0;
    b.p_load_max_mw = 10.0 * p;
    GridCase::from_file(file("single-bus", vec![b], vec![])).unwrap()
}
