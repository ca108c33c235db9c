//! Attack campaigns: the condition oracle "at least one emergency response
//! fired", skipping-sampler chains over the attack box, record persistence,
//! checkpointing and resume.
//!
//! A sampler point is `[lambda0_1 .. lambda0_L, I, tau, C]`. The prior is
//! uniform on the box, so the conditional density is the indicator of the
//! attacks that trigger at least one relay.
//!
//! Output directory layout:
//!
//! ```text
//! records.jsonl     one SampleRecord per proposal whose chain state is in A
//! lambda0.jsonl     full initial load-change vectors, one line per unique state
//! records.csv       scalar projection of records.jsonl
//! summary.json      acceptance rate, diagnostics, event totals, runtime
//! checkpoint.json   resume point, rewritten every `checkpoint_every` proposals
//! parts/            per-chain record streams
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skipping::{Chain, ChainCheckpoint, ChainDiagnostics, DiscreteCoord, Halting, ProposalKernel, Target, Verdict};

use crate::attack::{avg_network_load_change, cumulative_attack, vulnerability_ratio, AttackVector};
use crate::case::GridCase;
use crate::dynamics::{DynamicsConfig, SimRecord, Simulator};
use crate::error::{Error, Result};
use crate::ieee39;
use crate::protection::{
    calibrate, cascade_size, CascadeMetrics, EventKind, KindCounts, KindTotals, N1Options, ProtectionConfig,
    ScaleFactors,
};

pub const CONFIG_SCHEMA: &str = "cascade-laa-config/1";
pub const SUMMARY_SCHEMA: &str = "cascade-laa-summary/1";
const CHECKPOINT_SCHEMA: &str = "cascade-laa-checkpoint/1";

/// Case name that loads the bundled Kron-reduced IEEE 39-bus system.
pub const BUILTIN_IEEE39: &str = "builtin:ieee39";

pub const SCENARIOS: [u8; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema: String,
    /// Case file path, or `builtin:ieee39`.
    pub case: String,
    #[serde(default)]
    pub protection: ProtectionSetting,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default)]
    pub attack: AttackBounds,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Either explicit thresholds or the string `"auto-calibrate"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProtectionSetting {
    Auto(AutoCalibrate),
    Fixed(ProtectionConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoCalibrate {
    #[serde(rename = "auto-calibrate")]
    AutoCalibrate,
}

impl Default for ProtectionSetting {
    fn default() -> Self {
        ProtectionSetting::Auto(AutoCalibrate::AutoCalibrate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Thresholds the per-family scaling starts from.
    pub start: ProtectionConfig,
    pub margin: f64,
    pub n1: N1Options,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings { start: ProtectionConfig::default(), margin: 0.02, n1: N1Options::default() }
    }
}

/// Sampling box of the attack parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackBounds {
    /// Upper bound of each initial load change, MW.
    pub lambda0_max_mw: f64,
    /// Largest attack interval, s; also the simulated horizon.
    pub t_max_s: u32,
    /// Controller gain range, MW per rad/s.
    pub c_min: f64,
    pub c_max: f64,
    /// Vulnerable bus ids; all buses carrying load when absent.
    pub nodes: Option<Vec<u32>>,
}

impl Default for AttackBounds {
    fn default() -> Self {
        AttackBounds { lambda0_max_mw: 1000.0, t_max_s: 60, c_min: 0.5, c_max: 5.0, nodes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    /// Total proposals over all chains.
    pub proposals: u64,
    /// Master seed; chain seeds are derived with splitmix64.
    pub seed: u64,
    pub chains: usize,
    /// Random-walk scale as a fraction of each coordinate's range.
    pub sigma_fraction: f64,
    pub halting_mean: f64,
    pub halting_cap: usize,
    /// Probability of redrawing the scenario at each proposal.
    pub scenario_resample: f64,
    /// Pilot proposals used to tune the scale; 0 skips tuning.
    pub pilot_proposals: u64,
    /// Acceptance-rate band the pilot aims for.
    pub pilot_band: [f64; 2],
    pub checkpoint_every: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            proposals: 100_000,
            seed: 0,
            chains: 4,
            sigma_fraction: 0.1,
            halting_mean: 10.0,
            halting_cap: 100,
            scenario_resample: 0.2,
            pilot_proposals: 2000,
            pilot_band: [0.15, 0.30],
            checkpoint_every: 1000,
        }
    }
}

impl CampaignConfig {
    /// Defaults for `case`.
    pub fn new(case: impl Into<String>) -> Self {
        CampaignConfig {
            schema: CONFIG_SCHEMA.into(),
            case: case.into(),
            protection: ProtectionSetting::default(),
            calibration: CalibrationSettings::default(),
            attack: AttackBounds::default(),
            sampler: SamplerSettings::default(),
            dynamics: DynamicsConfig::default(),
            output: None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: CampaignConfig = serde_json::from_str(s).map_err(Error::from_json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Validation(format!("config schema '{}' is not '{CONFIG_SCHEMA}'", self.schema)));
        }
        let a = &self.attack;
        if !(a.lambda0_max_mw > 0.0 && a.lambda0_max_mw.is_finite()) {
            return bad("lambda0_max_mw must be positive");
        }
        if a.t_max_s < 1 {
            return bad("t_max_s must be at least 1");
        }
        if !(a.c_min >= 0.0 && a.c_min <= a.c_max && a.c_max.is_finite()) {
            return bad("gain bounds must satisfy 0 <= c_min <= c_max");
        }
        if a.nodes.as_ref().is_some_and(|n| n.is_empty()) {
            return bad("vulnerable node list is empty");
        }
        let s = &self.sampler;
        if s.proposals < 1 {
            return bad("proposals must be at least 1");
        }
        if s.chains < 1 {
            return bad("chains must be at least 1");
        }
        if !(s.sigma_fraction > 0.0 && s.sigma_fraction.is_finite()) {
            return bad("sigma_fraction must be positive");
        }
        if !(s.halting_mean >= 1.0) || s.halting_cap < 1 {
            return bad("halting mean and cap must be at least 1");
        }
        if !(0.0..=1.0).contains(&s.scenario_resample) {
            return bad("scenario_resample must lie in [0, 1]");
        }
        let [lo, hi] = s.pilot_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("pilot band must satisfy 0 < lo < hi < 1");
        }
        if s.checkpoint_every < 1 {
            return bad("checkpoint_every must be at least 1");
        }
        if !(self.calibration.margin > 0.0) {
            return bad("calibration margin must be positive");
        }
        if let ProtectionSetting::Fixed(p) = &self.protection {
            p.validate()?;
        }
        Ok(())
    }
}

/// Loads a case file, or the bundled system for [`BUILTIN_IEEE39`].
pub fn load_case(spec: &str) -> Result<GridCase> {
    if spec == BUILTIN_IEEE39 {
        ieee39::load_reduced()
    } else {
        GridCase::load(spec)
    }
}

/// One step of the splitmix64 generator.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pilot seed followed by one seed per chain: successive splitmix64 outputs
/// starting from the master seed.
pub fn derive_seeds(master: u64, chains: usize) -> (u64, Vec<u64>) {
    let mut s = master;
    let pilot = splitmix64(&mut s);
    (pilot, (0..chains).map(|_| splitmix64(&mut s)).collect())
}

/// Hex SHA-256 of the little-endian bytes of `v`.
pub fn lambda0_digest(v: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in v {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstEvent {
    pub kind: EventKind,
    pub time: f64,
    pub target: u32,
}

/// Oracle output for one attack, in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub attack: AttackVector,
    pub metrics: CascadeMetrics,
    /// Total absolute load change per vulnerable node.
    pub sigma_mw: Vec<f64>,
    pub mu_mw: f64,
    pub nu: f64,
    pub epochs: usize,
    pub first_event: Option<FirstEvent>,
    pub diverged: bool,
}

impl Evaluation {
    pub fn in_a(&self) -> bool {
        self.metrics.counts.total() > 0
    }
}

/// The condition oracle over the attack box.
#[derive(Debug, Clone)]
pub struct Oracle {
    sims: Vec<Simulator>,
    nodes: Vec<usize>,
    protection: ProtectionConfig,
    bounds: AttackBounds,
}

impl Oracle {
    /// Solves the operating point of every scenario once.
    pub fn new(case: &GridCase, protection: ProtectionConfig, dynamics: &DynamicsConfig, bounds: &AttackBounds) -> Result<Self> {
        protection.validate()?;
        let nodes = match &bounds.nodes {
            None => case.load_buses(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    let i = case
                        .bus_index(*id)
                        .ok_or_else(|| Error::Validation(format!("vulnerable bus {id} does not exist")))?;
                    if case.buses[i].p_load > 0.0 {
                        Ok(i)
                    } else {
                        Err(Error::Validation(format!("vulnerable bus {id} carries no load")))
                    }
                })
                .collect::<Result<_>>()?,
        };
        if nodes.is_empty() {
            return Err(Error::Validation("case has no vulnerable loads".into()));
        }
        let sims = SCENARIOS
            .iter()
            .map(|&t| Simulator::new(case.apply_scenario(t)?, *dynamics))
            .collect::<Result<_>>()?;
        Ok(Oracle { sims, nodes, protection, bounds: bounds.clone() })
    }

    /// Vulnerable bus indices.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn protection(&self) -> &ProtectionConfig {
        &self.protection
    }

    pub fn bounds(&self) -> &AttackBounds {
        &self.bounds
    }

    pub fn case(&self) -> &GridCase {
        self.sims[0].case()
    }

    fn l(&self) -> usize {
        self.nodes.len()
    }

    /// Attack encoded by a sampler point. `I` is rounded to whole seconds.
    pub fn decode(&self, x: &[f64]) -> AttackVector {
        let l = self.l();
        AttackVector {
            lambda0: x[..l].to_vec(),
            interval: (x[l].round().max(1.0) as u32).min(self.bounds.t_max_s),
            scenario: x[l + 1].round() as u8,
            gain: x[l + 2],
        }
    }

    pub fn encode(&self, a: &AttackVector) -> Vec<f64> {
        let mut x = a.lambda0.clone();
        x.extend([a.interval as f64, a.scenario as f64, a.gain]);
        x
    }

    /// Reflection interval of the interval coordinate: each whole second
    /// gets the same prior mass after rounding.
    fn interval_box(&self) -> (f64, f64) {
        (0.5, self.bounds.t_max_s as f64 + 0.5)
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        let l = self.l();
        let b = &self.bounds;
        let (ilo, ihi) = self.interval_box();
        x.len() == l + 3
            && x[..l].iter().all(|v| (0.0..=b.lambda0_max_mw).contains(v))
            && (ilo..=ihi).contains(&x[l])
            && SCENARIOS.iter().any(|&t| t as f64 == x[l + 1])
            && (b.c_min..=b.c_max).contains(&x[l + 2])
    }

    /// Full simulation of one attack over the horizon `t_max_s`.
    pub fn simulate(&self, a: &AttackVector) -> Result<SimRecord> {
        let sim = SCENARIOS
            .iter()
            .position(|&t| t == a.scenario)
            .map(|k| &self.sims[k])
            .ok_or_else(|| Error::Validation(format!("scenario {} out of range", a.scenario)))?;
        sim.simulate(Some(a), &self.nodes, &self.protection, self.bounds.t_max_s as f64)
    }

    pub fn evaluate_attack(&self, a: &AttackVector) -> Result<Evaluation> {
        let rec = self.simulate(a)?;
        let case = self.case();
        let schedule = &rec.schedule;
        Ok(Evaluation {
            attack: a.clone(),
            metrics: cascade_size(&rec.events, case.n_areas()),
            sigma_mw: cumulative_attack(schedule),
            mu_mw: avg_network_load_change(schedule, schedule.changes.len())?,
            nu: vulnerability_ratio(schedule)?,
            epochs: schedule.changes.len(),
            first_event: rec.events.first().map(|e| FirstEvent { kind: e.kind, time: e.time, target: e.target }),
            diverged: rec.diverged(),
        })
    }

    /// Skipping kernel with reflection at the box faces and the scenario as
    /// a resampled categorical coordinate.
    pub fn kernel(&self, s: &SamplerSettings) -> ProposalKernel {
        let l = self.l();
        let b = &self.bounds;
        let (ilo, ihi) = self.interval_box();
        let mut k = ProposalKernel::isotropic(l + 3, 0.0).with_halting(Halting::geometric(s.halting_mean, s.halting_cap));
        for i in 0..l {
            k.scales[i] = s.sigma_fraction * b.lambda0_max_mw;
            k = k.with_reflection(i, 0.0, b.lambda0_max_mw);
        }
        k.scales[l] = s.sigma_fraction * (ihi - ilo);
        k = k.with_reflection(l, ilo, ihi);
        k.scales[l + 2] = s.sigma_fraction * (b.c_max - b.c_min);
        if b.c_max > b.c_min {
            k = k.with_reflection(l + 2, b.c_min, b.c_max);
        }
        k.with_discrete(DiscreteCoord {
            index: l + 1,
            levels: SCENARIOS.iter().map(|&t| t as f64).collect(),
            resample_prob: s.scenario_resample,
        })
    }

    /// Coarse grid search for attacks in `A`, strongest first. Returns up to
    /// `want` distinct points.
    pub fn witnesses(&self, want: usize) -> Result<Vec<Vec<f64>>> {
        let b = &self.bounds;
        let t = b.t_max_s;
        let mut intervals = vec![1, 5, 20, t];
        intervals.retain(|&i| i <= t);
        intervals.dedup();
        let mut found = Vec::new();
        for tau in [4u8, 3, 2, 1] {
            for level in [1.0, 0.5] {
                for &interval in &intervals {
                    for gain in [b.c_max, 0.5 * (b.c_min + b.c_max)] {
                        let a = AttackVector {
                            lambda0: vec![level * b.lambda0_max_mw; self.l()],
                            interval,
                            scenario: tau,
                            gain,
                        };
                        if matches!(self.evaluate_attack(&a), Ok(e) if e.in_a()) {
                            let x = self.encode(&a);
                            if !found.contains(&x) {
                                found.push(x);
                            }
                            if found.len() == want {
                                return Ok(found);
                            }
                        }
                    }
                }
            }
        }
        if found.is_empty() {
            return Err(Error::Validation("no attack on the search grid triggers an emergency response".into()));
        }
        Ok(found)
    }
}

impl Target for Oracle {
    type Info = Arc<Evaluation>;

    fn dim(&self) -> usize {
        self.l() + 3
    }

    fn density(&self, x: &[f64]) -> f64 {
        if self.in_box(x) {
            1.0
        } else {
            0.0
        }
    }

    fn evaluate(&self, x: &[f64]) -> Verdict<Arc<Evaluation>> {
        match self.evaluate_attack(&self.decode(x)) {
            Ok(e) if e.in_a() => Verdict::Inside(Arc::new(e)),
            Ok(_) => Verdict::Outside,
            Err(_) => Verdict::Failed,
        }
    }
}

/// One chain state persisted per proposal, in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// `c{chain}p{proposal}`.
    pub id: String,
    /// Id of the record where this state first appeared.
    pub state: String,
    pub chain: usize,
    /// 1-based proposal index within the chain.
    pub proposal: u64,
    /// Chain seed.
    pub seed: u64,
    pub accepted: bool,
    pub unique: bool,
    pub lambda0_digest: String,
    pub lambda0_total_mw: f64,
    pub interval: u32,
    pub scenario: u8,
    pub gain: f64,
    pub x_mw: f64,
    pub by_kind: KindTotals,
    pub by_area: Vec<KindTotals>,
    pub counts: KindCounts,
    pub sigma_mw: Vec<f64>,
    pub mu_mw: f64,
    pub nu: f64,
    pub epochs: usize,
    pub first_event: Option<FirstEvent>,
    pub diverged: bool,
}

/// Sidecar line holding a full initial load-change vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda0Entry {
    pub id: String,
    pub digest: String,
    pub lambda0_mw: Vec<f64>,
}

/// Scalar columns of a [`SampleRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub id: String,
    pub state: String,
    pub chain: usize,
    pub proposal: u64,
    pub accepted: bool,
    pub unique: bool,
    pub interval: u32,
    pub scenario: u8,
    pub gain: f64,
    pub lambda0_total_mw: f64,
    pub mu_mw: f64,
    pub nu: f64,
    pub x_mw: f64,
    pub rigs_mw: f64,
    pub ofgs_mw: f64,
    pub ufls_mw: f64,
    pub n_rigs: usize,
    pub n_ofgs: usize,
    pub n_ufls: usize,
    pub n_line: usize,
    pub first_kind: Option<EventKind>,
    pub first_time: Option<f64>,
    pub diverged: bool,
}

impl From<&SampleRecord> for RecordRow {
    fn from(r: &SampleRecord) -> Self {
        RecordRow {
            id: r.id.clone(),
            state: r.state.clone(),
            chain: r.chain,
            proposal: r.proposal,
            accepted: r.accepted,
            unique: r.unique,
            interval: r.interval,
            scenario: r.scenario,
            gain: r.gain,
            lambda0_total_mw: r.lambda0_total_mw,
            mu_mw: r.mu_mw,
            nu: r.nu,
            x_mw: r.x_mw,
            rigs_mw: r.by_kind.rigs,
            ofgs_mw: r.by_kind.ofgs,
            ufls_mw: r.by_kind.ufls,
            n_rigs: r.counts.rigs,
            n_ofgs: r.counts.ofgs,
            n_ufls: r.counts.ufls,
            n_line: r.counts.line,
            first_kind: r.first_event.map(|f| f.kind),
            first_time: r.first_event.map(|f| f.time),
            diverged: r.diverged,
        }
    }
}

fn make_record(e: &Evaluation, chain: usize, seed: u64, proposal: u64, accepted: bool, state: Option<&str>) -> SampleRecord {
    let id = format!("c{chain}p{proposal}");
    SampleRecord {
        state: state.unwrap_or(&id).to_string(),
        unique: state.is_none(),
        id,
        chain,
        proposal,
        seed,
        accepted,
        lambda0_digest: lambda0_digest(&e.attack.lambda0),
        lambda0_total_mw: e.attack.lambda0.iter().sum(),
        interval: e.attack.interval,
        scenario: e.attack.scenario,
        gain: e.attack.gain,
        x_mw: e.metrics.total,
        by_kind: e.metrics.by_kind,
        by_area: e.metrics.by_area.clone(),
        counts: e.metrics.counts,
        sigma_mw: e.sigma_mw.clone(),
        mu_mw: e.mu_mw,
        nu: e.nu,
        epochs: e.epochs,
        first_event: e.first_event,
        diverged: e.diverged,
    }
}

/// Attack vector of a record, given its sidecar vector.
pub fn record_attack(r: &SampleRecord, lambda0: &[f64]) -> Result<AttackVector> {
    if lambda0_digest(lambda0) != r.lambda0_digest {
        return Err(Error::Validation(format!("lambda0 digest mismatch for record {}", r.id)));
    }
    Ok(AttackVector { lambda0: lambda0.to_vec(), interval: r.interval, scenario: r.scenario, gain: r.gain })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRound {
    pub factor: f64,
    pub proposals: u64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PilotReport {
    pub rounds: Vec<PilotRound>,
    /// Scale multiplier frozen for the main run.
    pub factor: f64,
}

/// Tunes a common multiplier of the kernel scales on a throw-away chain.
/// Each round runs a quarter of the budget; outside the band the multiplier
/// moves by `exp(4 (rate - mid))`. The round closest to the band wins.
pub fn pilot_tune(oracle: &Oracle, kernel: &ProposalKernel, s: &SamplerSettings, init: &[f64], seed: u64) -> Result<PilotReport> {
    if s.pilot_proposals == 0 {
        return Ok(PilotReport { rounds: Vec::new(), factor: 1.0 });
    }
    let [lo, hi] = s.pilot_band;
    let mid = 0.5 * (lo + hi);
    let per_round = s.pilot_proposals.div_ceil(4);
    let mut chain = Chain::new(oracle, init, seed)?;
    let mut factor = 1.0f64;
    let mut rounds = Vec::new();
    let mut used = 0;
    while used < s.pilot_proposals {
        let n = per_round.min(s.pilot_proposals - used);
        let k = kernel.rescaled(factor);
        let mut acc = 0u64;
        for _ in 0..n {
            acc += chain.step(oracle, &k).accepted as u64;
        }
        used += n;
        let rate = acc as f64 / n as f64;
        rounds.push(PilotRound { factor, proposals: n, acceptance_rate: rate });
        if (lo..=hi).contains(&rate) {
            break;
        }
        factor = (factor * (4.0 * (rate - mid)).exp()).clamp(1e-3, 1e3);
    }
    let dist = |r: &PilotRound| (lo - r.acceptance_rate).max(r.acceptance_rate - hi).max(0.0);
    let best = rounds.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))).map(|r| r.factor).unwrap_or(1.0);
    Ok(PilotReport { rounds, factor: best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainProgress {
    chain: usize,
    seed: u64,
    quota: u64,
    done: u64,
    /// Chain state after `done` proposals; `None` before the first one.
    checkpoint: Option<ChainCheckpoint>,
    init: Vec<f64>,
    state_id: Option<String>,
    records_len: u64,
    sidecar_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CampaignCheckpoint {
    schema: String,
    fingerprint: String,
    protection: ProtectionConfig,
    calibration: Option<ScaleFactors>,
    kernel: ProposalKernel,
    pilot: PilotReport,
    setup_time_s: f64,
    chains: Vec<ChainProgress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub seed: u64,
    pub proposals: u64,
    pub diagnostics: ChainDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub schema: String,
    /// False when the run stopped early and can be resumed.
    pub complete: bool,
    pub case: String,
    pub proposals: u64,
    pub acceptance_rate: f64,
    pub diagnostics: ChainDiagnostics,
    pub chains: Vec<ChainSummary>,
    pub records: u64,
    pub unique_records: u64,
    /// Event MW summed over all records.
    pub event_totals: KindTotals,
    pub event_counts: KindCounts,
    pub mean_x_mw: Option<f64>,
    pub protection: ProtectionConfig,
    pub calibration: Option<ScaleFactors>,
    pub kernel: ProposalKernel,
    pub pilot: PilotReport,
    pub setup_time_s: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint.json` in the output directory.
    pub resume: bool,
    /// Stop every chain after this many proposals in this invocation,
    /// without finalizing.
    pub halt_after: Option<u64>,
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const LAMBDA0_FILE: &str = "lambda0.jsonl";
pub const RECORDS_CSV: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

fn fingerprint(cfg: &CampaignConfig) -> String {
    let mut c = cfg.clone();
    c.output = None;
    let json = serde_json::to_string(&c).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn part_paths(out: &Path, chain: usize) -> (PathBuf, PathBuf) {
    let dir = out.join("parts");
    (dir.join(format!("records-{chain}.jsonl")), dir.join(format!("lambda0-{chain}.jsonl")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Opens `path` for appending after truncating it to `len` bytes.
fn open_at(path: &Path, len: u64) -> Result<File> {
    let mut f = OpenOptions::new().create(true).truncate(false).read(true).write(true).open(path).map_err(|e| Error::io(path, e))?;
    f.set_len(len).map_err(|e| Error::io(path, e))?;
    f.seek(std::io::SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
    Ok(f)
}

/// Counts bytes so checkpoints can record file offsets.
struct Sink {
    path: PathBuf,
    w: BufWriter<File>,
    len: u64,
}

impl Sink {
    fn open(path: PathBuf, len: u64) -> Result<Self> {
        let f = open_at(&path, len)?;
        Ok(Sink { path, w: BufWriter::new(f), len })
    }

    fn line<T: Serialize>(&mut self, v: &T) -> Result<()> {
        let mut s = serde_json::to_string(v).expect("serializable");
        s.push('\n');
        self.w.write_all(s.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.len += s.len() as u64;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))?;
        self.w.get_ref().sync_data().map_err(|e| Error::io(&self.path, e))
    }
}

/// Runs (or resumes) a campaign writing into `out`.
pub fn run_campaign(cfg: &CampaignConfig, out: &Path, opts: &RunOptions) -> Result<CampaignSummary> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(out.join("parts")).map_err(|e| Error::io(out, e))?;
    let case = load_case(&cfg.case)?;
    let cp_path = out.join(CHECKPOINT_FILE);

    let (oracle, mut cp) = if opts.resume && cp_path.exists() {
        let s = fs::read_to_string(&cp_path).map_err(|e| Error::io(&cp_path, e))?;
        let cp: CampaignCheckpoint = serde_json::from_str(&s).map_err(Error::from_json)?;
        if cp.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Validation(format!("checkpoint schema '{}' is not '{CHECKPOINT_SCHEMA}'", cp.schema)));
        }
        if cp.fingerprint != fingerprint(cfg) {
            return Err(Error::Validation("checkpoint was written by a different configuration".into()));
        }
        let oracle = Oracle::new(&case, cp.protection.clone(), &cfg.dynamics, &cfg.attack)?;
        (oracle, cp)
    } else {
        let (protection, calibration) = match &cfg.protection {
            ProtectionSetting::Fixed(p) => (p.clone(), None),
            ProtectionSetting::Auto(_) => {
                let c = &cfg.calibration;
                let cal = calibrate(&case, &c.start, &cfg.dynamics, &c.n1, c.margin)?;
                (cal.config, Some(cal.factors))
            }
        };
        let oracle = Oracle::new(&case, protection.clone(), &cfg.dynamics, &cfg.attack)?;
        let s = &cfg.sampler;
        let witnesses = oracle.witnesses(s.chains)?;
        let base = oracle.kernel(s);
        base.validate()?;
        let (pilot_seed, seeds) = derive_seeds(s.seed, s.chains);
        let pilot = pilot_tune(&oracle, &base, s, &witnesses[0], pilot_seed)?;
        let kernel = base.rescaled(pilot.factor);
        let per = s.proposals / s.chains as u64;
        let extra = s.proposals % s.chains as u64;
        let chains = seeds
            .iter()
            .enumerate()
            .map(|(k, &seed)| ChainProgress {
                chain: k,
                seed,
                quota: per + u64::from((k as u64) < extra),
                done: 0,
                checkpoint: None,
                init: witnesses[k % witnesses.len()].clone(),
                state_id: None,
                records_len: 0,
                sidecar_len: 0,
            })
            .collect();
        let cp = CampaignCheckpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            fingerprint: fingerprint(cfg),
            protection,
            calibration,
            kernel,
            pilot,
            setup_time_s: started.elapsed().as_secs_f64(),
            chains,
        };
        write_json(&cp_path, &cp)?;
        (oracle, cp)
    };

    let shared = Mutex::new(cp.clone());
    let every = cfg.sampler.checkpoint_every;
    let results: Vec<Result<ChainDiagnostics>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cp
            .chains
            .iter()
            .map(|p| {
                let (oracle, kernel, shared, cp_path) = (&oracle, &cp.kernel, &shared, &cp_path);
                scope.spawn(move || run_chain(oracle, kernel, p.clone(), out, every, opts.halt_after, shared, cp_path))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut diags = Vec::new();
    for r in results {
        diags.push(r?);
    }
    cp = shared.into_inner().expect("checkpoint lock");

    let complete = cp.chains.iter().all(|c| c.done == c.quota);
    let mut summary = CampaignSummary {
        schema: SUMMARY_SCHEMA.into(),
        complete,
        case: case.name.clone(),
        proposals: cp.chains.iter().map(|c| c.done).sum(),
        acceptance_rate: 0.0,
        diagnostics: ChainDiagnostics::default(),
        chains: cp
            .chains
            .iter()
            .zip(&diags)
            .map(|(c, d)| ChainSummary { chain: c.chain, seed: c.seed, proposals: c.done, diagnostics: d.clone() })
            .collect(),
        records: 0,
        unique_records: 0,
        event_totals: KindTotals::default(),
        event_counts: KindCounts::default(),
        mean_x_mw: None,
        protection: cp.protection.clone(),
        calibration: cp.calibration,
        kernel: cp.kernel.clone(),
        pilot: cp.pilot.clone(),
        setup_time_s: cp.setup_time_s,
        wall_time_s: 0.0,
    };
    for d in &diags {
        summary.diagnostics.merge(d);
    }
    summary.acceptance_rate = summary.diagnostics.acceptance_rate();
    if complete {
        finalize(out, &cp, &mut summary)?;
    }
    summary.wall_time_s = started.elapsed().as_secs_f64();
    if complete {
        write_json(&out.join(SUMMARY_FILE), &summary)?;
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    oracle: &Oracle,
    kernel: &ProposalKernel,
    mut p: ChainProgress,
    out: &Path,
    every: u64,
    halt_after: Option<u64>,
    shared: &Mutex<CampaignCheckpoint>,
    cp_path: &Path,
) -> Result<ChainDiagnostics> {
    let mut chain = match &p.checkpoint {
        Some(c) => Chain::resume(oracle, c)?,
        None => Chain::new(oracle, &p.init, p.seed)?,
    };
    if p.done == p.quota {
        return Ok(chain.diagnostics().clone());
    }
    let (rec_path, side_path) = part_paths(out, p.chain);
    let mut records = Sink::open(rec_path, p.records_len)?;
    let mut sidecar = Sink::open(side_path, p.sidecar_len)?;
    let mut ran = 0u64;
    while p.done < p.quota {
        if halt_after.is_some_and(|h| ran >= h) {
            records.flush()?;
            sidecar.flush()?;
            return Ok(chain.diagnostics().clone());
        }
        let step = chain.step(oracle, kernel);
        p.done += 1;
        ran += 1;
        if step.accepted {
            p.state_id = None;
        }
        if let Some(e) = chain.info() {
            let rec = make_record(e, p.chain, p.seed, p.done, step.accepted, p.state_id.as_deref());
            if rec.unique {
                sidecar.line(&Lambda0Entry {
                    id: rec.id.clone(),
                    digest: rec.lambda0_digest.clone(),
                    lambda0_mw: e.attack.lambda0.clone(),
                })?;
                p.state_id = Some(rec.id.clone());
            }
            records.line(&rec)?;
        }
        if p.done % every == 0 || p.done == p.quota {
            records.flush()?;
            sidecar.flush()?;
            p.records_len = records.len;
            p.sidecar_len = sidecar.len;
            p.checkpoint = Some(chain.checkpoint());
            let mut cp = shared.lock().expect("checkpoint lock");
            cp.chains[p.chain] = p.clone();
            write_json(cp_path, &*cp)?;
        }
    }
    Ok(chain.diagnostics().clone())
}

fn append_file(dst: &mut impl Write, src: &Path, dst_path: &Path) -> Result<()> {
    let mut f = File::open(src).map_err(|e| Error::io(src, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(src, e))?;
    dst.write_all(&buf).map_err(|e| Error::io(dst_path, e))
}

/// Concatenates the chain parts in chain order and writes the CSV projection.
fn finalize(out: &Path, cp: &CampaignCheckpoint, summary: &mut CampaignSummary) -> Result<()> {
    let rec_path = out.join(RECORDS_FILE);
    let side_path = out.join(LAMBDA0_FILE);
    let mut rec = BufWriter::new(File::create(&rec_path).map_err(|e| Error::io(&rec_path, e))?);
    let mut side = BufWriter::new(File::create(&side_path).map_err(|e| Error::io(&side_path, e))?);
    for c in &cp.chains {
        let (r, s) = part_paths(out, c.chain);
        if r.exists() {
            append_file(&mut rec, &r, &rec_path)?;
        }
        if s.exists() {
            append_file(&mut side, &s, &side_path)?;
        }
    }
    rec.flush().map_err(|e| Error::io(&rec_path, e))?;
    side.flush().map_err(|e| Error::io(&side_path, e))?;
    drop(rec);

    let csv_path = out.join(RECORDS_CSV);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    let mut sum_x = 0.0;
    for r in RecordReader::open(&rec_path)? {
        let r = r?;
        summary.records += 1;
        summary.unique_records += r.unique as u64;
        summary.event_totals.rigs += r.by_kind.rigs;
        summary.event_totals.ofgs += r.by_kind.ofgs;
        summary.event_totals.ufls += r.by_kind.ufls;
        summary.event_counts.rigs += r.counts.rigs;
        summary.event_counts.ofgs += r.counts.ofgs;
        summary.event_counts.ufls += r.counts.ufls;
        summary.event_counts.line += r.counts.line;
        sum_x += r.x_mw;
        w.serialize(RecordRow::from(&r)).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    if summary.records > 0 {
        summary.mean_x_mw = Some(sum_x / summary.records as f64);
    }
    Ok(())
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        k => Error::Validation(format!("csv error on {}: {k:?}", path.display())),
    }
}

/// Streams JSON Lines, reporting the file line of parse errors.
pub struct JsonLines<T> {
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
    line: usize,
    _t: std::marker::PhantomData<T>,
}

pub type RecordReader = JsonLines<SampleRecord>;

impl<T: serde::de::DeserializeOwned> JsonLines<T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(JsonLines { lines: BufReader::new(f).lines(), path, line: 0, _t: std::marker::PhantomData })
    }
}

impl<T: serde::de::DeserializeOwned> Iterator for JsonLines<T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Result<T>> {
        loop {
            let l = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line += 1;
            if l.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&l).map_err(|e| Error::Parse {
                line: self.line,
                column: e.column(),
                message: e.to_string(),
            }));
        }
    }
}

/// Reads a whole record file.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    RecordReader::open(path)?.collect()
}

/// Reads a sidecar file into `(id, lambda0)` pairs.
pub fn read_lambda0(path: impl AsRef<Path>) -> Result<Vec<Lambda0Entry>> {
    JsonLines::<Lambda0Entry>::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
        let (pilot, chains) = derive_seeds(0, 2);
        assert_eq!(pilot, 0xE220_A839_7B1D_CDAF);
        assert_eq!(chains[0], 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(derive_seeds(7, 4).1.len(), 4);
    }

    #[test]
    fn digest_is_sha256_of_le_bytes() {
        // sha256 of the empty message.
        assert_eq!(lambda0_digest(&[]), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_ne!(lambda0_digest(&[0.0]), lambda0_digest(&[-0.0]));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = CampaignConfig::from_json_str(r#"{"schema":"cascade-laa-config/1","case":"builtin:ieee39"}"#).unwrap();
        assert_eq!(cfg.attack.lambda0_max_mw, 1000.0);
        assert_eq!(cfg.attack.t_max_s, 60);
        assert_eq!((cfg.attack.c_min, cfg.attack.c_max), (0.5, 5.0));
        assert_eq!(cfg.sampler.proposals, 100_000);
        assert_eq!(cfg.sampler.chains, 4);
        assert_eq!(cfg.protection, ProtectionSetting::default());

        let fixed = r#"{"schema":"cascade-laa-config/1","case":"x","protection":{"rocof_limit":0.1}}"#;
        let cfg = CampaignConfig::from_json_str(fixed).unwrap();
        assert!(matches!(cfg.protection, ProtectionSetting::Fixed(ref p) if p.rocof_limit == 0.1));
        let auto = r#"{"schema":"cascade-laa-config/1","case":"x","protection":"auto-calibrate"}"#;
        assert_eq!(CampaignConfig::from_json_str(auto).unwrap().protection, ProtectionSetting::default());

        for bad in [
            r#"{"schema":"other","case":"x"}"#,
            r#"{"schema":"cascade-laa-config/1","case":"x","sampler":{"proposals":0}}"#,
            r#"{"schema":"cascade-laa-config/1","case":"x","attack":{"c_min":3,"c_max":2}}"#,
            r#"{"schema":"cascade-laa-config/1","case":"x","attack":{"lambda0_max_mw":-1}}"#,
            r#"{"schema":"cascade-laa-config/1","case":"x","protection":"manual"}"#,
        ] {
            assert!(matches!(CampaignConfig::from_json_str(bad), Err(Error::Validation(_) | Error::Parse { .. })), "{bad}");
        }
        assert!(matches!(
            CampaignConfig::from_json_str(r#"{"schema":"cascade-laa-config/1","case":"x","typo":1}"#),
            Err(Error::Parse { .. })
        ));
    }
}
