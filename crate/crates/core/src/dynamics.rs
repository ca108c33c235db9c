//! Third-order structure-preserving network dynamics with protection gating.
//!
//! Every bus carries an angle `delta`, a per-unit frequency deviation `omega`
//! and a voltage magnitude `E`; generators additionally carry a governor
//! output `rho`. With `B` the Laplacian susceptance matrix gated by line
//! status, generator `psi` and net load `chi_L`:
//!
//! ```text
//! delta' = omega_s * omega
//! M omega' = psi * min(P_max, P_G + rho) - chi_L - E_i sum_j B_ij E_j sin(delta_ij) - D omega
//! S E'     = psi * (E_f - v) - E + X sum_j B_ij E_j cos(delta_ij)
//! rho'     = -A omega  when |omega| > W, else 0
//! ```
//!
//! Load buses follow the same form with no generation term, `psi = 1` and
//! no governor. The regulator signal is `v = K_v (E - E_ref)` with `E_ref`
//! the equilibrium voltage; `K_v = 0` disables it.

use serde::{Deserialize, Serialize};

use crate::attack::{AttackSchedule, AttackVector, Realizer};
use crate::case::GridCase;
use crate::equilibrium::{solve_equilibrium, EquilibriumState};
use crate::error::{Error, Result};
use crate::ode::{OdeSystem, Rk4};
use crate::protection::{EventLog, ProtectionConfig, RelayPeaks, Relays};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Governor deadband half-width, pu frequency.
    pub deadband: f64,
    pub avr_gain: f64,
    /// Abort once any `|omega|` exceeds this, pu.
    pub divergence_limit: f64,
    /// Record every `output_stride`-th step in the trajectory; 0 disables.
    pub output_stride: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig { dt: 0.005, deadband: 0.015, avr_gain: 0.0, divergence_limit: 10.0, output_stride: 0 }
    }
}

/// Continuous state, per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicState {
    pub t: f64,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub voltage: Vec<f64>,
    /// One entry per generator.
    pub rho: Vec<f64>,
}

/// Disconnection indicators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorState {
    /// Generator connected, per generator.
    pub psi: Vec<bool>,
    /// Line connected, per line.
    pub line: Vec<bool>,
    /// Under-frequency shedding stages taken, per bus.
    pub stage: Vec<u8>,
}

impl IndicatorState {
    pub fn connected(case: &GridCase) -> Self {
        IndicatorState {
            psi: vec![true; case.n_generators],
            line: vec![true; case.lines.len()],
            stage: vec![0; case.n_buses()],
        }
    }
}

/// A single component removed at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Outage {
    Generator(usize),
    Load(usize),
    Line(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Diverged { time: f64, detail: String },
}

/// Result of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub trajectory: Vec<DynamicState>,
    pub events: EventLog,
    pub indicators: IndicatorState,
    /// Largest averaged |RoCoF| seen at each generator, pu/s.
    pub peak_rocof: Vec<f64>,
    pub peaks: RelayPeaks,
    pub max_abs_omega: f64,
    pub schedule: AttackSchedule,
    /// Connected components of the network at the end.
    pub islands: usize,
    pub outcome: Outcome,
    pub final_state: DynamicState,
    /// Net nodal load at the end, pu.
    pub final_load: Vec<f64>,
}

impl SimRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged { .. })
    }
}

/// A case at a fixed scenario together with its operating point.
#[derive(Debug, Clone)]
pub struct Simulator {
    case: GridCase,
    eq: EquilibriumState,
    cfg: DynamicsConfig,
    omega_s: f64,
    ng: usize,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    time_constant: Vec<f64>,
    reactance: Vec<f64>,
    field: Vec<f64>,
    p_gen: Vec<f64>,
    p_max: Vec<f64>,
    governor: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
}

impl Simulator {
    pub fn new(case: GridCase, cfg: DynamicsConfig) -> Result<Self> {
        let eq = solve_equilibrium(&case)?;
        Self::with_equilibrium(case, eq, cfg)
    }

    pub fn with_equilibrium(case: GridCase, eq: EquilibriumState, cfg: DynamicsConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) || !(cfg.deadband >= 0.0) || !(cfg.divergence_limit > 0.0) {
            return Err(Error::Validation("dt and divergence limit must be positive, deadband non-negative".into()));
        }
        let ng = case.n_generators;
        let b = &case.buses;
        Ok(Simulator {
            omega_s: 2.0 * std::f64::consts::PI * case.frequency_hz,
            ng,
            inertia: b.iter().map(|x| x.inertia).collect(),
            damping: b.iter().map(|x| x.damping).collect(),
            time_constant: b.iter().map(|x| x.time_constant).collect(),
            reactance: b.iter().map(|x| x.reactance).collect(),
            field: b.iter().map(|x| x.field_voltage).collect(),
            p_gen: b[..ng].iter().map(|x| x.p_gen).collect(),
            p_max: b[..ng].iter().map(|x| x.p_max).collect(),
            governor: b[..ng].iter().map(|x| x.governor_gain).collect(),
            edges: case.lines.iter().map(|l| (l.from, l.to, l.susceptance)).collect(),
            case,
            eq,
            cfg,
        })
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    pub fn equilibrium(&self) -> &EquilibriumState {
        &self.eq
    }

    pub fn config(&self) -> &DynamicsConfig {
        &self.cfg
    }

    pub fn omega_s(&self) -> f64 {
        self.omega_s
    }

    pub fn equilibrium_state(&self) -> DynamicState {
        let n = self.case.n_buses();
        DynamicState {
            t: 0.0,
            delta: self.eq.delta.clone(),
            omega: vec![0.0; n],
            voltage: self.eq.voltage.clone(),
            rho: vec![0.0; self.ng],
        }
    }

    pub fn equilibrium_load(&self) -> Vec<f64> {
        self.case.buses.iter().map(|b| b.p_load).collect()
    }

    /// Current generator output `min(P_max, P_G + rho)`, pu.
    pub fn generation(&self, g: usize, rho: f64) -> f64 {
        self.p_max[g].min(self.p_gen[g] + rho)
    }

    fn pack(&self, s: &DynamicState) -> Vec<f64> {
        let mut y = Vec::with_capacity(3 * s.delta.len() + s.rho.len());
        y.extend_from_slice(&s.delta);
        y.extend_from_slice(&s.omega);
        y.extend_from_slice(&s.voltage);
        y.extend_from_slice(&s.rho);
        y
    }

    fn unpack(&self, t: f64, y: &[f64]) -> DynamicState {
        let n = self.case.n_buses();
        DynamicState {
            t,
            delta: y[..n].to_vec(),
            omega: y[n..2 * n].to_vec(),
            voltage: y[2 * n..3 * n].to_vec(),
            rho: y[3 * n..].to_vec(),
        }
    }

    /// Time derivative of `s` under the given indicators and per-unit net
    /// loads. Fails on non-finite input.
    pub fn derivatives(&self, s: &DynamicState, ind: &IndicatorState, load: &[f64]) -> Result<DynamicState> {
        let n = self.case.n_buses();
        if s.delta.len() != n || s.omega.len() != n || s.voltage.len() != n || s.rho.len() != self.ng || load.len() != n {
            return Err(Error::Validation("state dimensions do not match the case".into()));
        }
        let y = self.pack(s);
        if let Some(k) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: s.t, detail: format!("state component {k} is not finite") });
        }
        let mut dy = vec![0.0; y.len()];
        self.rhs_system(ind, load).rhs(s.t, &y, &mut dy);
        Ok(self.unpack(s.t, &dy))
    }

    fn rhs_system<'a>(&'a self, ind: &'a IndicatorState, load: &'a [f64]) -> Rhs<'a> {
        Rhs { sim: self, ind, load }
    }

    /// Power flowing from `from` to `to` on line `k`, pu.
    pub fn line_flow(&self, s: &DynamicState, k: usize) -> f64 {
        let (i, j, b) = self.edges[k];
        line_flow(s.voltage[i], s.voltage[j], b, s.delta[i] - s.delta[j])
    }

    /// Runs the attack `x` on `nodes` (bus indices) for `horizon` seconds.
    pub fn simulate(
        &self,
        x: Option<&AttackVector>,
        nodes: &[usize],
        protection: &ProtectionConfig,
        horizon: f64,
    ) -> Result<SimRecord> {
        self.run(x, nodes, None, protection, horizon, false)
    }

    /// Zero-attack run with one component removed at `t = 0`.
    pub fn simulate_outage(&self, outage: Outage, protection: &ProtectionConfig, horizon: f64) -> Result<SimRecord> {
        self.run(None, &[], Some(outage), protection, horizon, false)
    }

    /// Like [`Simulator::simulate_outage`] but returns at the first protection event.
    pub fn simulate_until_event(&self, outage: Outage, protection: &ProtectionConfig, horizon: f64) -> Result<SimRecord> {
        self.run(None, &[], Some(outage), protection, horizon, true)
    }

    fn run(
        &self,
        x: Option<&AttackVector>,
        nodes: &[usize],
        outage: Option<Outage>,
        protection: &ProtectionConfig,
        horizon: f64,
        stop_on_event: bool,
    ) -> Result<SimRecord> {
        if !(horizon > 0.0) {
            return Err(Error::Validation("horizon must be positive".into()));
        }
        let n = self.case.n_buses();
        let dt = self.cfg.dt;
        let steps = (horizon / dt).round() as usize;
        let mut ind = IndicatorState::connected(&self.case);
        let mut load = self.equilibrium_load();
        match outage {
            Some(Outage::Generator(g)) if g < self.ng => ind.psi[g] = false,
            Some(Outage::Load(i)) if i < n => load[i] = 0.0,
            Some(Outage::Line(k)) if k < self.edges.len() => ind.line[k] = false,
            Some(o) => return Err(Error::Validation(format!("outage {o:?} out of range"))),
            None => {}
        }

        let mut realizer = match x {
            Some(x) => {
                let mut r = Realizer::new(&self.case, nodes, x)?;
                r.start(&mut load);
                Some((r, ((x.interval as f64 / dt).round() as usize).max(1)))
            }
            None => None,
        };

        let mut relays = Relays::new(self, protection)?;
        let mut log = EventLog::default();
        let mut y = self.pack(&self.equilibrium_state());
        let mut rk = Rk4::new(y.len());
        let mut trajectory = Vec::new();
        if self.cfg.output_stride > 0 {
            trajectory.push(self.unpack(0.0, &y));
        }
        let mut max_abs_omega = 0.0f64;
        let mut outcome = Outcome::Completed;
        let mut t = 0.0;

        for step in 1..=steps {
            {
                let sys = self.rhs_system(&ind, &load);
                rk.step(&sys, t, &mut y, dt);
            }
            t = step as f64 * dt;
            // Magnitudes cannot go negative.
            for e in &mut y[2 * n..3 * n] {
                if *e < 0.0 {
                    *e = 0.0;
                }
            }
            if let Some(k) = y.iter().position(|v| !v.is_finite()) {
                outcome = Outcome::Diverged { time: t, detail: format!("state component {k} is not finite") };
                break;
            }
            let omega = &y[n..2 * n];
            let peak = omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
            max_abs_omega = max_abs_omega.max(peak);
            if peak > self.cfg.divergence_limit {
                outcome = Outcome::Diverged {
                    time: t,
                    detail: format!("|omega| = {peak:.3} exceeds {}", self.cfg.divergence_limit),
                };
                break;
            }

            relays.check_and_trip(self, t, &y, &mut ind, &mut load, &mut log);
            if stop_on_event && !log.is_empty() {
                break;
            }

            if let Some((r, every)) = realizer.as_mut() {
                if step % *every == 0 && step < steps {
                    r.epoch(t, &y[n..2 * n], &mut load);
                }
            }

            if self.cfg.output_stride > 0 && step % self.cfg.output_stride == 0 {
                trajectory.push(self.unpack(t, &y));
            }
        }

        let final_state = self.unpack(t, &y);
        Ok(SimRecord {
            trajectory,
            events: log,
            islands: count_islands(n, &self.edges, &ind.line),
            indicators: ind,
            peak_rocof: relays.peak_rocof().to_vec(),
            peaks: relays.peaks(),
            max_abs_omega,
            schedule: realizer.map(|(r, _)| r.into_schedule()).unwrap_or_default(),
            outcome,
            final_state,
            final_load: load,
        })
    }
}

/// `E_i E_j B_ij sin(delta_i - delta_j)`.
pub fn line_flow(e_i: f64, e_j: f64, b: f64, delta_ij: f64) -> f64 {
    e_i * e_j * b * delta_ij.sin()
}

/// Number of connected components when only `on` lines conduct.
pub fn count_islands(n: usize, edges: &[(usize, usize, f64)], on: &[bool]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut count = n;
    for (&(i, j, _), &c) in edges.iter().zip(on) {
        if c {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
    }
    count
}

struct Rhs<'a> {
    sim: &'a Simulator,
    ind: &'a IndicatorState,
    load: &'a [f64],
}

impl OdeSystem for Rhs<'_> {
    fn dim(&self) -> usize {
        3 * self.sim.case.n_buses() + self.sim.ng
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let sim = self.sim;
        let n = sim.case.n_buses();
        let (delta, rest) = y.split_at(n);
        let (omega, rest) = rest.split_at(n);
        let (e, rho) = rest.split_at(n);

        let mut sc = [(0.0f64, 0.0f64); 64];
        let mut heap;
        let sc: &mut [(f64, f64)] = if n <= 64 {
            &mut sc[..n]
        } else {
            heap = vec![(0.0, 0.0); n];
            &mut heap
        };
        for (v, d) in sc.iter_mut().zip(delta) {
            *v = d.sin_cos();
        }
        // Coupling sums accumulated in place: dy[i] = sum_j B_ij E_j sin,
        // dy[n + i] = sum_j B_ij E_j cos (diagonal included via the Laplacian).
        dy[..2 * n].fill(0.0);
        for (&(i, j, b), &on) in sim.edges.iter().zip(&self.ind.line) {
            if !on {
                continue;
            }
            let (si, ci) = sc[i];
            let (sj, cj) = sc[j];
            let s = si * cj - ci * sj;
            let c = ci * cj + si * sj;
            dy[i] += b * e[j] * s;
            dy[j] -= b * e[i] * s;
            dy[n + i] += b * (e[j] * c - e[i]);
            dy[n + j] += b * (e[i] * c - e[j]);
        }
        let avr = sim.cfg.avr_gain;
        for i in 0..n {
            let (psi, gen) = if i < sim.ng {
                let on = self.ind.psi[i];
                (if on { 1.0 } else { 0.0 }, if on { sim.generation(i, rho[i]) } else { 0.0 })
            } else {
                (1.0, 0.0)
            };
            let (ps, pc) = (dy[i], dy[n + i]);
            let v = avr * (e[i] - sim.eq.voltage[i]);
            dy[i] = sim.omega_s * omega[i];
            dy[n + i] = (gen - self.load[i] - e[i] * ps - sim.damping[i] * omega[i]) / sim.inertia[i];
            dy[2 * n + i] = (psi * (sim.field[i] - v) - e[i] + sim.reactance[i] * pc) / sim.time_constant[i];
        }
        let w = sim.cfg.deadband;
        for g in 0..sim.ng {
            dy[3 * n + g] = if omega[g].abs() > w { -sim.governor[g] * omega[g] } else { 0.0 };
        }
    }
}
