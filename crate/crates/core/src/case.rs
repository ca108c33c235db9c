//! Static network description: buses, lines, susceptance matrix and areas.
//!
//! Case files are JSON in SI-ish units (MW, MW·s, seconds) and are converted
//! to per-unit on the case's MVA base at parse time. See `CaseFile` for the
//! schema.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CASE_SCHEMA: &str = "cascade-laa-case/1";

/// Diurnal loading levels, night/morning/afternoon/evening.
pub const SCENARIO_FACTORS: [f64; 4] = [0.4, 1.0, 0.85, 1.3];

/// Scaling factor for scenario `tau` (1-based).
pub fn scenario_factor(tau: u8) -> Result<f64> {
    match tau {
        1..=4 => Ok(SCENARIO_FACTORS[tau as usize - 1]),
        _ => Err(Error::Validation(format!("scenario must be in 1..=4, got {tau}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Generator,
    Load,
    GeneratorWithLoad,
}

impl BusKind {
    pub fn is_generator(self) -> bool {
        !matches!(self, BusKind::Load)
    }
}

/// One bus as written in a case file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: u32,
    pub kind: BusKind,
    pub area: u8,
    /// Angular momentum `M` times the MVA base (MW·s per per-unit frequency).
    pub inertia_mws: f64,
    /// MW per per-unit frequency deviation.
    pub damping_mw: f64,
    /// Governor integral gain, MW/s per per-unit frequency deviation.
    #[serde(default)]
    pub governor_mw_per_s: f64,
    pub time_constant_s: f64,
    pub reactance_pu: f64,
    pub field_voltage_pu: f64,
    #[serde(default)]
    pub p_gen_mw: f64,
    #[serde(default)]
    pub p_max_mw: f64,
    #[serde(default)]
    pub p_load_mw: f64,
    #[serde(default)]
    pub p_load_max_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: u32,
    pub to: u32,
    pub susceptance_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_limit_mw: Option<f64>,
}

/// On-disk case document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema: String,
    pub name: String,
    pub base_mva: f64,
    pub frequency_hz: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

/// A bus in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub area: u8,
    pub inertia: f64,
    pub damping: f64,
    pub governor_gain: f64,
    pub time_constant: f64,
    pub reactance: f64,
    pub field_voltage: f64,
    pub p_gen: f64,
    pub p_max: f64,
    pub p_load: f64,
    pub p_load_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    /// Bus indices into `GridCase::buses`.
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    /// Endpoints lie in different areas.
    pub is_interconnector: bool,
    /// Per-unit flow limit, interconnectors only.
    pub flow_limit: Option<f64>,
}

/// Validated network in per-unit. Generator buses occupy indices
/// `0..n_generators`, pure load buses the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// Imaginary part of the bus admittance matrix: positive off-diagonal
    /// line susceptances, diagonal equal to minus the row sum.
    pub susceptance: DMatrix<f64>,
    pub n_generators: usize,
    /// Scenario applied to this case, if any.
    pub scenario: Option<u8>,
}

impl GridCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_loads(&self) -> usize {
        self.buses.len() - self.n_generators
    }

    pub fn n_areas(&self) -> usize {
        self.buses.iter().map(|b| b.area as usize).max().unwrap_or(0)
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_generation(&self) -> f64 {
        self.buses.iter().map(|b| b.p_gen).sum()
    }

    /// Indices of buses carrying load (the default vulnerable set).
    pub fn load_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].p_load > 0.0).collect()
    }

    pub fn interconnectors(&self) -> impl Iterator<Item = (usize, &Line)> {
        self.lines.iter().enumerate().filter(|(_, l)| l.is_interconnector)
    }

    pub fn mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }

    pub fn pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    pub fn from_json_str(source: &str) -> Result<Self> {
        if source.trim().is_empty() {
            return Err(Error::Parse { line: 1, column: 1, message: "empty case file".into() });
        }
        let file: CaseFile = serde_json::from_str(source).map_err(Error::from_json)?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_file(file: CaseFile) -> Result<Self> {
        if file.schema != CASE_SCHEMA {
            return Err(Error::Validation(format!(
                "unsupported schema {:?}, expected {CASE_SCHEMA:?}",
                file.schema
            )));
        }
        if !(file.base_mva > 0.0) || !(file.frequency_hz > 0.0) {
            return Err(Error::Validation("base_mva and frequency_hz must be positive".into()));
        }
        if file.buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        let base = file.base_mva;

        // Generators first, each group in file order.
        let mut ordered: Vec<&BusRecord> = file.buses.iter().filter(|b| b.kind.is_generator()).collect();
        let n_generators = ordered.len();
        ordered.extend(file.buses.iter().filter(|b| !b.kind.is_generator()));

        let mut index = HashMap::new();
        let mut buses = Vec::with_capacity(ordered.len());
        for (i, r) in ordered.into_iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", r.id)));
            }
            buses.push(Bus {
                id: r.id,
                kind: r.kind,
                area: r.area,
                inertia: r.inertia_mws / base,
                damping: r.damping_mw / base,
                governor_gain: r.governor_mw_per_s / base,
                time_constant: r.time_constant_s,
                reactance: r.reactance_pu,
                field_voltage: r.field_voltage_pu,
                p_gen: r.p_gen_mw / base,
                p_max: r.p_max_mw / base,
                p_load: r.p_load_mw / base,
                p_load_max: r.p_load_max_mw / base,
            });
        }

        let mut lines = Vec::with_capacity(file.lines.len());
        for l in &file.lines {
            let lookup = |id: u32| {
                index
                    .get(&id)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("line {}-{} references unknown bus {id}", l.from, l.to)))
            };
            let (from, to) = (lookup(l.from)?, lookup(l.to)?);
            let is_interconnector = buses[from].area != buses[to].area;
            lines.push(Line {
                from,
                to,
                susceptance: l.susceptance_pu,
                is_interconnector,
                flow_limit: l.flow_limit_mw.map(|v| v / base),
            });
        }

        let susceptance = susceptance_matrix(buses.len(), &lines);
        let case = GridCase {
            name: file.name,
            base_mva: base,
            frequency_hz: file.frequency_hz,
            buses,
            lines,
            susceptance,
            n_generators,
            scenario: None,
        };
        case.validate()?;
        Ok(case)
    }

    /// Back to the on-disk representation (MW units).
    pub fn to_file(&self) -> CaseFile {
        let base = self.base_mva;
        CaseFile {
            schema: CASE_SCHEMA.to_string(),
            name: self.name.clone(),
            base_mva: base,
            frequency_hz: self.frequency_hz,
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    area: b.area,
                    inertia_mws: b.inertia * base,
                    damping_mw: b.damping * base,
                    governor_mw_per_s: b.governor_gain * base,
                    time_constant_s: b.time_constant,
                    reactance_pu: b.reactance,
                    field_voltage_pu: b.field_voltage,
                    p_gen_mw: b.p_gen * base,
                    p_max_mw: b.p_max * base,
                    p_load_mw: b.p_load * base,
                    p_load_max_mw: b.p_load_max * base,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    from: self.buses[l.from].id,
                    to: self.buses[l.to].id,
                    susceptance_pu: l.susceptance,
                    flow_limit_mw: l.flow_limit.map(|v| v * base),
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("case serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        for (i, b) in self.buses.iter().enumerate() {
            let gen = i < self.n_generators;
            if gen != b.kind.is_generator() {
                return bad(format!("bus {}: generator index range is not contiguous", b.id));
            }
            if b.area == 0 {
                return bad(format!("bus {}: area ids start at 1", b.id));
            }
            let finite = [
                b.inertia, b.damping, b.governor_gain, b.time_constant, b.reactance, b.field_voltage, b.p_gen,
                b.p_max, b.p_load, b.p_load_max,
            ]
            .iter()
            .all(|v| v.is_finite());
            if !finite {
                return bad(format!("bus {}: non-finite parameter", b.id));
            }
            if !(b.inertia > 0.0) {
                return bad(format!("bus {}: inertia must be positive", b.id));
            }
            if !(b.time_constant > 0.0) {
                return bad(format!("bus {}: time constant must be positive", b.id));
            }
            if b.damping < 0.0 || b.reactance < 0.0 || b.field_voltage < 0.0 {
                return bad(format!("bus {}: damping, reactance and field voltage must be non-negative", b.id));
            }
            if gen {
                if b.p_gen < 0.0 || b.p_gen > b.p_max * (1.0 + 1e-12) {
                    return bad(format!("bus {}: need 0 <= P_G <= P_max", b.id));
                }
                if b.governor_gain < 0.0 {
                    return bad(format!("bus {}: governor gain must be non-negative", b.id));
                }
            } else if b.p_gen != 0.0 || b.governor_gain != 0.0 || b.p_max != 0.0 {
                return bad(format!("bus {}: pure load bus cannot carry generation or a governor", b.id));
            }
            if matches!(b.kind, BusKind::Generator) && b.p_load != 0.0 {
                return bad(format!("bus {}: generator bus with load must use kind generator_with_load", b.id));
            }
            if b.p_load < 0.0 || b.p_load > b.p_load_max * (1.0 + 1e-12) {
                return bad(format!("bus {}: need 0 <= P_L <= P_L_max", b.id));
            }
        }
        for l in &self.lines {
            let (a, b) = (self.buses[l.from].id, self.buses[l.to].id);
            if l.from == l.to {
                return bad(format!("line {a}-{b}: endpoints must differ"));
            }
            if !(l.susceptance > 0.0 && l.susceptance.is_finite()) {
                return bad(format!("line {a}-{b}: susceptance must be positive"));
            }
            match (l.is_interconnector, l.flow_limit) {
                (true, Some(lim)) if !(lim > 0.0) => return bad(format!("line {a}-{b}: flow limit must be positive")),
                (true, None) => return bad(format!("line {a}-{b}: interconnector needs a flow limit")),
                (false, Some(_)) => return bad(format!("line {a}-{b}: flow limits apply to interconnectors only")),
                _ => {}
            }
        }
        let n = self.buses.len();
        if self.susceptance.nrows() != n || self.susceptance.ncols() != n {
            return bad("susceptance matrix dimension differs from bus count".into());
        }
        for i in 0..n {
            for j in 0..i {
                if self.susceptance[(i, j)] != self.susceptance[(j, i)] {
                    return bad(format!("susceptance matrix not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(())
    }

    /// Scales every equilibrium load and generation by the scenario factor.
    ///
    /// Intended to be applied once to a base case; applying it again
    /// compounds the factors.
    pub fn apply_scenario(&self, tau: u8) -> Result<GridCase> {
        let f = scenario_factor(tau)?;
        let mut out = self.clone();
        for b in &mut out.buses {
            b.p_load *= f;
            b.p_gen *= f;
        }
        out.scenario = Some(tau);
        Ok(out)
    }

    /// Field-by-field comparison with a relative tolerance on reals.
    pub fn approx_eq(&self, other: &GridCase, rel: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300);
        self.name == other.name
            && self.n_generators == other.n_generators
            && self.scenario == other.scenario
            && close(self.base_mva, other.base_mva)
            && close(self.frequency_hz, other.frequency_hz)
            && self.buses.len() == other.buses.len()
            && self.buses.iter().zip(&other.buses).all(|(a, b)| {
                a.id == b.id
                    && a.kind == b.kind
                    && a.area == b.area
                    && [
                        (a.inertia, b.inertia),
                        (a.damping, b.damping),
                        (a.governor_gain, b.governor_gain),
                        (a.time_constant, b.time_constant),
                        (a.reactance, b.reactance),
                        (a.field_voltage, b.field_voltage),
                        (a.p_gen, b.p_gen),
                        (a.p_max, b.p_max),
                        (a.p_load, b.p_load),
                        (a.p_load_max, b.p_load_max),
                    ]
                    .iter()
                    .all(|&(x, y)| close(x, y))
            })
            && self.lines.len() == other.lines.len()
            && self.lines.iter().zip(&other.lines).all(|(a, b)| {
                a.from == b.from
                    && a.to == b.to
                    && a.is_interconnector == b.is_interconnector
                    && close(a.susceptance, b.susceptance)
                    && match (a.flow_limit, b.flow_limit) {
                        (Some(x), Some(y)) => close(x, y),
                        (None, None) => true,
                        _ => false,
                    }
            })
    }
}

/// Laplacian-form susceptance matrix from a branch list.
pub fn susceptance_matrix(n: usize, lines: &[Line]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for l in lines {
        b[(l.from, l.to)] += l.susceptance;
        b[(l.to, l.from)] += l.susceptance;
        b[(l.from, l.from)] -= l.susceptance;
        b[(l.to, l.to)] -= l.susceptance;
    }
    b
}
