//! Emergency responses: RoCoF-induced and over-frequency generation
//! shedding, four-stage under-frequency load shedding and interconnector
//! tripping, plus cascade accounting and the N-1 calibration loop.

use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::dynamics::{count_islands, line_flow, DynamicsConfig, IndicatorState, Outage, Simulator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtectionConfig {
    /// |RoCoF| limit for generator shedding, pu/s.
    pub rocof_limit: f64,
    /// Generator over-frequency limit, pu.
    pub ofgs_limit: f64,
    /// Strictly decreasing load-shedding thresholds, pu (negative).
    pub ufls_thresholds: [f64; 4],
    /// Fraction of equilibrium nodal load shed per stage.
    pub ufls_fraction: f64,
    /// Multiplier on the case's interconnector flow limits.
    pub line_limit_scale: f64,
    /// A condition must persist this long before the relay acts, s.
    pub trip_delay: f64,
    /// Moving-average window of the RoCoF measurement, s.
    pub rocof_window: f64,
}

impl Default for ProtectionConfig {
    fn default() -> Self {
        ProtectionConfig {
            rocof_limit: 0.02,
            ofgs_limit: 0.03,
            ufls_thresholds: [-0.020, -0.024, -0.028, -0.032],
            ufls_fraction: 0.10,
            line_limit_scale: 1.0,
            trip_delay: 0.0,
            rocof_window: 0.1,
        }
    }
}

impl ProtectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("protection: {m}")));
        if !(self.rocof_limit > 0.0) || !(self.ofgs_limit > 0.0) || !(self.line_limit_scale > 0.0) {
            return bad("limits must be positive");
        }
        if !(self.ufls_thresholds[0] < 0.0) || self.ufls_thresholds.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("UFLS thresholds must be negative and strictly decreasing");
        }
        if !(self.ufls_fraction > 0.0 && self.ufls_fraction <= 0.25) {
            return bad("UFLS fraction must be in (0, 0.25]");
        }
        if !(self.trip_delay >= 0.0) || !(self.rocof_window > 0.0) {
            return bad("trip delay must be non-negative and RoCoF window positive");
        }
        Ok(())
    }

    /// Every threshold moved outward by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.scaled_each(&ScaleFactors::uniform(factor))
    }

    /// Each relay family moved outward by its own factor.
    pub fn scaled_each(&self, f: &ScaleFactors) -> Self {
        ProtectionConfig {
            rocof_limit: self.rocof_limit * f.rocof,
            ofgs_limit: self.ofgs_limit * f.ofgs,
            ufls_thresholds: self.ufls_thresholds.map(|v| v * f.ufls),
            line_limit_scale: self.line_limit_scale * f.line,
            ..self.clone()
        }
    }

    /// A configuration under which no relay can act.
    pub fn disabled() -> Self {
        ProtectionConfig::default().scaled(1e9)
    }
}

/// Outward threshold multipliers, one per relay family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    pub rocof: f64,
    pub ofgs: f64,
    pub ufls: f64,
    pub line: f64,
}

impl ScaleFactors {
    pub fn uniform(f: f64) -> Self {
        ScaleFactors { rocof: f, ofgs: f, ufls: f, line: f }
    }

    pub fn max(&self) -> f64 {
        self.rocof.max(self.ofgs).max(self.ufls).max(self.line)
    }
}

/// Extreme relay inputs over one run, restricted to components still in
/// service when the input was measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelayPeaks {
    /// Largest averaged |RoCoF| at a connected generator, pu/s.
    pub rocof: f64,
    /// Largest frequency deviation at a connected generator, pu.
    pub over_frequency: f64,
    /// Most negative frequency deviation at a bus with load left, pu.
    pub under_frequency: f64,
    /// Largest |flow| on a connected interconnector over its case limit.
    pub line_loading: f64,
}

impl RelayPeaks {
    /// Per-family factor by which `cfg` would have to move outward for the
    /// relay not to act on these inputs.
    pub fn factors(&self, cfg: &ProtectionConfig) -> ScaleFactors {
        ScaleFactors {
            rocof: self.rocof / cfg.rocof_limit,
            ofgs: self.over_frequency / cfg.ofgs_limit,
            ufls: self.under_frequency / cfg.ufls_thresholds[0],
            line: self.line_loading / cfg.line_limit_scale,
        }
    }

    fn merge(&mut self, o: &RelayPeaks) {
        self.rocof = self.rocof.max(o.rocof);
        self.over_frequency = self.over_frequency.max(o.over_frequency);
        self.under_frequency = self.under_frequency.min(o.under_frequency);
        self.line_loading = self.line_loading.max(o.line_loading);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "RIGS")]
    Rigs,
    #[serde(rename = "OFGS")]
    Ofgs,
    #[serde(rename = "UFLS")]
    Ufls,
    #[serde(rename = "LINE")]
    Line,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [EventKind::Rigs, EventKind::Ofgs, EventKind::Ufls, EventKind::Line];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Rigs => "RIGS",
            EventKind::Ofgs => "OFGS",
            EventKind::Ufls => "UFLS",
            EventKind::Line => "LINE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    /// Bus id, or line index for `LINE`.
    pub target: u32,
    /// Area of the bus, or of the sending end for `LINE`.
    pub area: u8,
    /// MW disconnected; for `LINE` the flow at the trip.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn push(&mut self, e: Event) {
        debug_assert!(self.events.last().is_none_or(|l| l.time <= e.time));
        self.events.push(e);
    }

    pub fn first(&self) -> Option<&Event> {
        self.events.first()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// MW per event kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindTotals {
    pub rigs: f64,
    pub ofgs: f64,
    pub ufls: f64,
}

impl KindTotals {
    pub fn total(&self) -> f64 {
        self.rigs + self.ofgs + self.ufls
    }

    pub fn get(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::Rigs => self.rigs,
            EventKind::Ofgs => self.ofgs,
            EventKind::Ufls => self.ufls,
            EventKind::Line => 0.0,
        }
    }

    fn add(&mut self, kind: EventKind, mw: f64) {
        match kind {
            EventKind::Rigs => self.rigs += mw,
            EventKind::Ofgs => self.ofgs += mw,
            EventKind::Ufls => self.ufls += mw,
            EventKind::Line => {}
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub rigs: usize,
    pub ofgs: usize,
    pub ufls: usize,
    pub line: usize,
}

impl KindCounts {
    pub fn total(&self) -> usize {
        self.rigs + self.ofgs + self.ufls + self.line
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeMetrics {
    /// Cascade size `X`, MW.
    pub total: f64,
    pub by_kind: KindTotals,
    pub counts: KindCounts,
    /// `by_area[a - 1]` for area `a`.
    pub by_area: Vec<KindTotals>,
}

/// Cascade size and its decompositions. Line trips are counted but add no MW.
pub fn cascade_size(log: &EventLog, n_areas: usize) -> CascadeMetrics {
    let mut m = CascadeMetrics { by_area: vec![KindTotals::default(); n_areas], ..Default::default() };
    for e in &log.events {
        match e.kind {
            EventKind::Rigs => m.counts.rigs += 1,
            EventKind::Ofgs => m.counts.ofgs += 1,
            EventKind::Ufls => m.counts.ufls += 1,
            EventKind::Line => m.counts.line += 1,
        }
        m.by_kind.add(e.kind, e.magnitude);
        let a = e.area as usize;
        if a >= 1 {
            if a > m.by_area.len() {
                m.by_area.resize(a, KindTotals::default());
            }
            m.by_area[a - 1].add(e.kind, e.magnitude);
        }
    }
    m.total = m.by_kind.total();
    m
}

/// Per-simulation relay state.
#[derive(Debug, Clone)]
pub(crate) struct Relays {
    rocof_limit: f64,
    ofgs_limit: f64,
    thresholds: [f64; 4],
    shed: Vec<f64>,
    /// `(line index, case limit)` for every interconnector.
    lines: Vec<(usize, f64)>,
    line_scale: f64,
    delay: f64,
    window: usize,
    window_s: f64,
    history: Vec<f64>,
    cursor: usize,
    peak_rocof: Vec<f64>,
    peaks: RelayPeaks,
    /// First time each pending condition was seen, NaN when idle.
    since_rigs: Vec<f64>,
    since_ofgs: Vec<f64>,
    since_ufls: Vec<f64>,
    since_line: Vec<f64>,
}

impl Relays {
    pub(crate) fn new(sim: &Simulator, cfg: &ProtectionConfig) -> Result<Self> {
        cfg.validate()?;
        let case = sim.case();
        let dt = sim.config().dt;
        let ng = case.n_generators;
        let window = ((cfg.rocof_window / dt).round() as usize).max(1);
        let lines: Vec<(usize, f64)> = case
            .lines
            .iter()
            .enumerate()
            .filter_map(|(k, l)| l.flow_limit.filter(|_| l.is_interconnector).map(|lim| (k, lim)))
            .collect();
        Ok(Relays {
            rocof_limit: cfg.rocof_limit,
            ofgs_limit: cfg.ofgs_limit,
            thresholds: cfg.ufls_thresholds,
            shed: case.buses.iter().map(|b| cfg.ufls_fraction * b.p_load).collect(),
            delay: cfg.trip_delay,
            window,
            window_s: window as f64 * dt,
            // Pre-disturbance history: the system rests at nominal frequency.
            history: vec![0.0; window * ng],
            cursor: 0,
            peak_rocof: vec![0.0; ng],
            peaks: RelayPeaks::default(),
            line_scale: cfg.line_limit_scale,
            since_rigs: vec![f64::NAN; ng],
            since_ofgs: vec![f64::NAN; ng],
            since_ufls: vec![f64::NAN; case.n_buses()],
            since_line: vec![f64::NAN; lines.len()],
            lines,
        })
    }

    pub(crate) fn peak_rocof(&self) -> &[f64] {
        &self.peak_rocof
    }

    pub(crate) fn peaks(&self) -> RelayPeaks {
        self.peaks
    }

    /// Whether a condition seen at `t` has persisted long enough.
    fn debounce(since: &mut f64, active: bool, t: f64, delay: f64) -> bool {
        if !active {
            *since = f64::NAN;
            return false;
        }
        if since.is_nan() {
            *since = t;
        }
        t - *since >= delay - 1e-12
    }

    /// Runs every relay once at time `t` on the packed state `y`.
    pub(crate) fn check_and_trip(
        &mut self,
        sim: &Simulator,
        t: f64,
        y: &[f64],
        ind: &mut IndicatorState,
        load: &mut [f64],
        log: &mut crate::protection::EventLog,
    ) {
        let case = sim.case();
        let n = case.n_buses();
        let ng = case.n_generators;
        let (delta, omega, voltage, rho) = (&y[..n], &y[n..2 * n], &y[2 * n..3 * n], &y[3 * n..]);
        let base = case.base_mva;

        let slot = &mut self.history[self.cursor * ng..(self.cursor + 1) * ng];
        let mut rocof = [0.0f64; 64];
        let mut rocof_heap;
        let rocof: &mut [f64] = if ng <= 64 {
            &mut rocof[..ng]
        } else {
            rocof_heap = vec![0.0; ng];
            &mut rocof_heap
        };
        for g in 0..ng {
            rocof[g] = (omega[g] - slot[g]) / self.window_s;
            slot[g] = omega[g];
            self.peak_rocof[g] = self.peak_rocof[g].max(rocof[g].abs());
            if ind.psi[g] {
                self.peaks.rocof = self.peaks.rocof.max(rocof[g].abs());
                self.peaks.over_frequency = self.peaks.over_frequency.max(omega[g]);
            }
        }
        self.cursor = (self.cursor + 1) % self.window;

        for g in 0..ng {
            let fire = ind.psi[g] && rocof[g].abs() > self.rocof_limit;
            if Self::debounce(&mut self.since_rigs[g], fire, t, self.delay) {
                ind.psi[g] = false;
                log.push(Event {
                    kind: EventKind::Rigs,
                    time: t,
                    target: case.buses[g].id,
                    area: case.buses[g].area,
                    magnitude: sim.generation(g, rho[g]) * base,
                });
            }
        }
        for g in 0..ng {
            let fire = ind.psi[g] && omega[g] > self.ofgs_limit;
            if Self::debounce(&mut self.since_ofgs[g], fire, t, self.delay) {
                ind.psi[g] = false;
                log.push(Event {
                    kind: EventKind::Ofgs,
                    time: t,
                    target: case.buses[g].id,
                    area: case.buses[g].area,
                    magnitude: sim.generation(g, rho[g]) * base,
                });
            }
        }
        for i in 0..n {
            // Nothing left to shed: an outaged or fully shed load.
            if self.shed[i] <= 0.0 || load[i] <= 0.0 {
                continue;
            }
            self.peaks.under_frequency = self.peaks.under_frequency.min(omega[i]);
            let r = ind.stage[i] as usize;
            let fire = r < 4 && omega[i] < self.thresholds[r.min(3)];
            if Self::debounce(&mut self.since_ufls[i], fire, t, self.delay) {
                ind.stage[i] += 1;
                self.since_ufls[i] = f64::NAN;
                load[i] = (load[i] - self.shed[i]).max(0.0);
                log.push(Event {
                    kind: EventKind::Ufls,
                    time: t,
                    target: case.buses[i].id,
                    area: case.buses[i].area,
                    magnitude: self.shed[i] * base,
                });
            }
        }
        for (m, &(k, limit)) in self.lines.iter().enumerate() {
            if !ind.line[k] {
                continue;
            }
            let l = &case.lines[k];
            let flow = line_flow(voltage[l.from], voltage[l.to], l.susceptance, delta[l.from] - delta[l.to]);
            self.peaks.line_loading = self.peaks.line_loading.max(flow.abs() / limit);
            if Self::debounce(&mut self.since_line[m], flow.abs() > limit * self.line_scale, t, self.delay) {
                ind.line[k] = false;
                log.push(Event {
                    kind: EventKind::Line,
                    time: t,
                    target: k as u32,
                    area: case.buses[l.from].area,
                    magnitude: flow.abs() * base,
                });
            }
        }
    }
}

/// One contingency that set off a protection action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub outage: Outage,
    pub label: String,
    pub events: EventLog,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: u8,
    pub outages: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct N1Report {
    pub scenarios: Vec<ScenarioReport>,
    /// Contingency labels left out of the check.
    pub excluded: Vec<String>,
}

impl N1Report {
    pub fn passed(&self) -> bool {
        self.scenarios.iter().all(|s| s.violations.is_empty())
    }

    pub fn violation_count(&self) -> usize {
        self.scenarios.iter().map(|s| s.violations.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct N1Options {
    pub scenarios: Vec<u8>,
    /// Simulated time after the outage, s.
    pub horizon: f64,
    /// Contingency labels to skip, e.g. `"generator 39"`.
    pub exclude: Vec<String>,
    /// Stop at the first violation.
    pub fail_fast: bool,
}

impl Default for N1Options {
    fn default() -> Self {
        N1Options { scenarios: vec![1, 2, 3, 4], horizon: 60.0, exclude: Vec::new(), fail_fast: false }
    }
}

/// Single-component contingencies: every generator, every bus carrying
/// load, and every branch whose removal keeps the network connected. A
/// radial branch outage isolates its bus and is covered by that bus's own
/// outage.
pub fn contingencies(case: &GridCase) -> Vec<(Outage, String)> {
    let mut out = Vec::new();
    for g in 0..case.n_generators {
        out.push((Outage::Generator(g), format!("generator {}", case.buses[g].id)));
    }
    for i in case.load_buses() {
        out.push((Outage::Load(i), format!("load {}", case.buses[i].id)));
    }
    let edges: Vec<(usize, usize, f64)> = case.lines.iter().map(|l| (l.from, l.to, l.susceptance)).collect();
    let mut on = vec![true; edges.len()];
    for k in 0..edges.len() {
        on[k] = false;
        if count_islands(case.n_buses(), &edges, &on) == 1 {
            let l = &case.lines[k];
            out.push((Outage::Line(k), format!("line {}-{}", case.buses[l.from].id, case.buses[l.to].id)));
        }
        on[k] = true;
    }
    out
}

fn checked_contingencies(case: &GridCase, exclude: &[String]) -> Result<Vec<(Outage, String)>> {
    let all = contingencies(case);
    if let Some(x) = exclude.iter().find(|x| !all.iter().any(|(_, l)| l == *x)) {
        return Err(Error::Validation(format!("excluded contingency '{x}' does not exist")));
    }
    Ok(all.into_iter().filter(|(_, l)| !exclude.contains(l)).collect())
}

/// Simulates every contingency with no attack under each scenario, applied
/// to the base `case`. A contingency fails when any relay acts or the run
/// diverges.
pub fn verify_n1(
    case: &GridCase,
    protection: &ProtectionConfig,
    dynamics: &DynamicsConfig,
    opts: &N1Options,
) -> Result<N1Report> {
    protection.validate()?;
    let mut report = N1Report { scenarios: Vec::new(), excluded: opts.exclude.clone() };
    for &tau in &opts.scenarios {
        let sim = Simulator::new(case.apply_scenario(tau)?, *dynamics)?;
        let list = checked_contingencies(sim.case(), &opts.exclude)?;
        let mut violations = Vec::new();
        for (outage, label) in &list {
            let rec = sim.simulate_until_event(*outage, protection, opts.horizon)?;
            if !rec.events.is_empty() || rec.diverged() {
                violations.push(Violation {
                    outage: *outage,
                    label: label.clone(),
                    diverged: rec.diverged(),
                    events: rec.events,
                });
                if opts.fail_fast {
                    report.scenarios.push(ScenarioReport { scenario: tau, outages: list.len(), violations });
                    return Ok(report);
                }
            }
        }
        report.scenarios.push(ScenarioReport { scenario: tau, outages: list.len(), violations });
    }
    Ok(report)
}

/// The contingency that drives one relay family hardest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub scenario: u8,
    pub label: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub factors: ScaleFactors,
    pub config: ProtectionConfig,
    /// Binding contingency per family, in the order RoCoF, OFGS, UFLS, line.
    pub binding: Vec<Option<Binding>>,
    pub report: N1Report,
}

/// Smallest per-family outward scaling of `start` (never below 1) under
/// which every contingency passes.
///
/// A contingency passes exactly when no relay acts, so its trajectory is the
/// one simulated with protection disabled. The required factor of each family
/// is therefore its peak relay input over all contingencies divided by its
/// threshold; `margin` is added on top and the result is confirmed with a
/// full check, widening any family that still acts by a further `margin`.
pub fn calibrate(
    case: &GridCase,
    start: &ProtectionConfig,
    dynamics: &DynamicsConfig,
    opts: &N1Options,
    margin: f64,
) -> Result<Calibration> {
    start.validate()?;
    if !(margin > 0.0) {
        return Err(Error::Validation("calibration margin must be positive".into()));
    }
    let off = ProtectionConfig::disabled();
    let mut peaks = RelayPeaks::default();
    let mut binding: Vec<Option<Binding>> = vec![None; 4];
    for &tau in &opts.scenarios {
        let sim = Simulator::new(case.apply_scenario(tau)?, *dynamics)?;
        for (outage, label) in checked_contingencies(sim.case(), &opts.exclude)? {
            let rec = sim.simulate_outage(outage, &off, opts.horizon)?;
            if rec.diverged() {
                return Err(Error::Validation(format!("{label} diverges without protection under scenario {tau}")));
            }
            let f = rec.peaks.factors(start);
            for (k, v) in [f.rocof, f.ofgs, f.ufls, f.line].into_iter().enumerate() {
                if binding[k].as_ref().is_none_or(|b| v > b.factor) {
                    binding[k] = Some(Binding { scenario: tau, label: label.clone(), factor: v });
                }
            }
            peaks.merge(&rec.peaks);
        }
    }
    let need = peaks.factors(start);
    let up = |v: f64| (v * (1.0 + margin)).max(1.0);
    let mut factors = ScaleFactors { rocof: up(need.rocof), ofgs: up(need.ofgs), ufls: up(need.ufls), line: up(need.line) };
    for _ in 0..50 {
        let config = start.scaled_each(&factors);
        let report = verify_n1(case, &config, dynamics, &N1Options { fail_fast: false, ..opts.clone() })?;
        if report.passed() {
            return Ok(Calibration { factors, config, binding, report });
        }
        let acted = |k: EventKind| {
            report.scenarios.iter().flat_map(|s| &s.violations).any(|v| v.events.count(k) > 0)
        };
        if acted(EventKind::Rigs) {
            factors.rocof *= 1.0 + margin;
        }
        if acted(EventKind::Ofgs) {
            factors.ofgs *= 1.0 + margin;
        }
        if acted(EventKind::Ufls) {
            factors.ufls *= 1.0 + margin;
        }
        if acted(EventKind::Line) {
            factors.line *= 1.0 + margin;
        }
        if report.scenarios.iter().flat_map(|s| &s.violations).any(|v| v.diverged && v.events.is_empty()) {
            return Err(Error::Validation("a contingency diverges with no relay action".into()));
        }
    }
    Err(Error::Validation("threshold scaling did not converge to an N-1 secure configuration".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, area: u8, mw: f64) -> Event {
        Event { kind, time: 0.0, target: 1, area, magnitude: mw }
    }

    #[test]
    fn cascade_examples() {
        assert_eq!(cascade_size(&EventLog::default(), 3).total, 0.0);
        let log = EventLog {
            events: vec![ev(EventKind::Rigs, 1, 300.0), ev(EventKind::Ufls, 2, 50.0), ev(EventKind::Ufls, 2, 50.0)],
        };
        let m = cascade_size(&log, 3);
        assert_eq!(m.total, 400.0);
        assert_eq!(m.by_area[1].ufls, 100.0);
        assert_eq!(m.counts.ufls, 2);
        let lines = EventLog { events: vec![ev(EventKind::Line, 1, 250.0)] };
        let m = cascade_size(&lines, 3);
        assert_eq!(m.total, 0.0);
        assert_eq!(m.counts.line, 1);
    }

    #[test]
    fn additivity() {
        let a = EventLog { events: vec![ev(EventKind::Rigs, 1, 120.0), ev(EventKind::Line, 2, 40.0)] };
        let b = EventLog { events: vec![ev(EventKind::Ofgs, 3, 75.5), ev(EventKind::Ufls, 1, 12.25)] };
        let mut ab = a.clone();
        ab.events.extend(b.events.clone());
        assert_eq!(cascade_size(&ab, 3).total, cascade_size(&a, 3).total + cascade_size(&b, 3).total);
    }

    #[test]
    fn config_validation() {
        assert!(ProtectionConfig::default().validate().is_ok());
        let mut c = ProtectionConfig::default();
        c.ufls_thresholds = [-0.02, -0.02, -0.03, -0.04];
        assert!(c.validate().is_err());
        let s = ProtectionConfig::default().scaled(2.0);
        assert_eq!(s.rocof_limit, 0.04);
        assert_eq!(s.ufls_thresholds[3], -0.064);
        assert!(s.validate().is_ok());
    }
}
