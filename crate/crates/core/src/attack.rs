//! Dynamic load-altering attacks: the initial load-change vector, the
//! frequency-proportional follow-up changes and the attack-size metrics.
//!
//! All public quantities are in MW and seconds. The attacker's frequency
//! signal is the angular-speed deviation of the victim bus in rad/s, so the
//! gain `C` is in MW per rad/s.

use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::error::{Error, Result};

/// One sampled attack `x = (lambda0, I, tau, C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVector {
    /// Initial load increase per vulnerable node, MW.
    pub lambda0: Vec<f64>,
    /// Seconds between load changes.
    pub interval: u32,
    pub scenario: u8,
    /// MW per rad/s of frequency deviation.
    pub gain: f64,
}

impl AttackVector {
    /// The null attack.
    pub fn zero(nodes: usize, scenario: u8) -> Self {
        AttackVector { lambda0: vec![0.0; nodes], interval: 1, scenario, gain: 0.0 }
    }
}

/// Load change that keeps the new nodal load `chi - c * signal` inside
/// `[0, p_max]`. Load rises when frequency falls.
pub fn next_load_change(chi: f64, signal: f64, c: f64, p_max: f64) -> f64 {
    (chi - c * signal).clamp(0.0, p_max) - chi
}

/// Realized load changes, MW.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackSchedule {
    /// Bus ids of the vulnerable nodes.
    pub nodes: Vec<u32>,
    /// Epoch times in seconds, starting at 0.
    pub epochs: Vec<f64>,
    /// `changes[k][i]`: change at node `i` at epoch `k`.
    pub changes: Vec<Vec<f64>>,
    /// Equilibrium load of each vulnerable node, MW.
    pub base_load: Vec<f64>,
    /// Equilibrium load of the whole network, MW.
    pub total_base_load: f64,
}

impl AttackSchedule {
    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }
}

/// Applies the attack online while the simulation runs. Loads are passed
/// in per-unit of the case base.
#[derive(Debug, Clone)]
pub struct Realizer {
    idx: Vec<usize>,
    /// Gain converted to pu load per pu frequency.
    gain_pu: f64,
    p_max: Vec<f64>,
    base: f64,
    lambda0: Vec<f64>,
    schedule: AttackSchedule,
}

impl Realizer {
    /// `nodes` are bus indices into `case`, matched with `x.lambda0`.
    pub fn new(case: &GridCase, nodes: &[usize], x: &AttackVector) -> Result<Self> {
        if nodes.len() != x.lambda0.len() {
            return Err(Error::Validation(format!(
                "attack vector has {} entries for {} vulnerable nodes",
                x.lambda0.len(),
                nodes.len()
            )));
        }
        if nodes.iter().any(|&i| i >= case.n_buses()) {
            return Err(Error::Validation("vulnerable node index out of range".into()));
        }
        if x.interval == 0 || !(x.gain >= 0.0) || x.lambda0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("attack needs interval >= 1, gain >= 0 and finite lambda0 >= 0".into()));
        }
        let omega_s = 2.0 * std::f64::consts::PI * case.frequency_hz;
        Ok(Realizer {
            idx: nodes.to_vec(),
            gain_pu: x.gain / case.base_mva * omega_s,
            p_max: nodes.iter().map(|&i| case.buses[i].p_load_max).collect(),
            base: case.base_mva,
            lambda0: x.lambda0.iter().map(|v| v / case.base_mva).collect(),
            schedule: AttackSchedule {
                nodes: nodes.iter().map(|&i| case.buses[i].id).collect(),
                epochs: Vec::new(),
                changes: Vec::new(),
                base_load: nodes.iter().map(|&i| case.mw(case.buses[i].p_load)).collect(),
                total_base_load: case.mw(case.total_load()),
            },
        })
    }

    /// Epoch 0: initial increases, clamped to nodal headroom.
    pub fn start(&mut self, load: &mut [f64]) {
        let mut row = Vec::with_capacity(self.idx.len());
        for (k, &i) in self.idx.iter().enumerate() {
            let lam = self.lambda0[k].clamp(0.0, (self.p_max[k] - load[i]).max(0.0));
            load[i] += lam;
            row.push(lam * self.base);
        }
        self.schedule.epochs.push(0.0);
        self.schedule.changes.push(row);
    }

    /// A later epoch at time `t` given per-unit bus frequency deviations.
    pub fn epoch(&mut self, t: f64, omega: &[f64], load: &mut [f64]) {
        let mut row = Vec::with_capacity(self.idx.len());
        for (k, &i) in self.idx.iter().enumerate() {
            let lam = next_load_change(load[i], omega[i], self.gain_pu, self.p_max[k]);
            load[i] += lam;
            row.push(lam * self.base);
        }
        self.schedule.epochs.push(t);
        self.schedule.changes.push(row);
    }

    pub fn schedule(&self) -> &AttackSchedule {
        &self.schedule
    }

    pub fn into_schedule(self) -> AttackSchedule {
        self.schedule
    }
}

/// Realizes a schedule against prescribed per-unit frequencies instead of
/// a simulation. `omega[k]` holds bus frequencies at epoch `k + 1`; epochs
/// are `k * interval` and loads start at the case equilibrium.
pub fn realize_schedule(case: &GridCase, nodes: &[usize], x: &AttackVector, omega: &[Vec<f64>]) -> Result<AttackSchedule> {
    let mut r = Realizer::new(case, nodes, x)?;
    let mut load: Vec<f64> = case.buses.iter().map(|b| b.p_load).collect();
    r.start(&mut load);
    for (k, w) in omega.iter().enumerate() {
        r.epoch(((k + 1) as u64 * x.interval as u64) as f64, w, &mut load);
    }
    Ok(r.into_schedule())
}

/// `Sigma_i`: total absolute change per node over all epochs, MW.
pub fn cumulative_attack(s: &AttackSchedule) -> Vec<f64> {
    let mut out = vec![0.0; s.nodes.len()];
    for row in &s.changes {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v.abs();
        }
    }
    out
}

/// `mu`: mean over the first `h` epochs (the initial change is epoch 1) of
/// the network-total absolute change, MW.
pub fn avg_network_load_change(s: &AttackSchedule, h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::UndefinedMetric("average load change over zero epochs".into()));
    }
    if h > s.changes.len() {
        return Err(Error::UndefinedMetric(format!("{h} epochs requested, {} realized", s.changes.len())));
    }
    let total: f64 = s.changes[..h].iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).sum();
    Ok(total / h as f64)
}

/// `nu`: peak over epochs of the network-total absolute deviation of
/// attacked load from equilibrium, relative to total equilibrium load.
pub fn vulnerability_ratio(s: &AttackSchedule) -> Result<f64> {
    if !(s.total_base_load > 0.0) {
        return Err(Error::UndefinedMetric("vulnerability ratio of a network without load".into()));
    }
    let mut dev = vec![0.0; s.nodes.len()];
    let mut peak = 0.0f64;
    for row in &s.changes {
        for (d, v) in dev.iter_mut().zip(row) {
            *d += v;
        }
        peak = peak.max(dev.iter().map(|d| d.abs()).sum());
    }
    Ok(peak / s.total_base_load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::tests::three_bus_file;
    use proptest::prelude::*;

    #[test]
    fn update_branches() {
        assert!((next_load_change(500.0, -0.4, 1.0, 1000.0) - 0.4).abs() < 1e-12);
        assert_eq!(next_load_change(590.0, -20.0, 1.0, 600.0), 10.0);
        assert_eq!(next_load_change(5.0, 20.0, 1.0, 600.0), -5.0);
    }

    fn schedule(changes: Vec<Vec<f64>>, total: f64) -> AttackSchedule {
        let n = changes[0].len();
        AttackSchedule {
            nodes: (0..n as u32).collect(),
            epochs: (0..changes.len()).map(|k| k as f64).collect(),
            changes,
            base_load: vec![0.0; n],
            total_base_load: total,
        }
    }

    #[test]
    fn metrics_by_hand() {
        let s = schedule(vec![vec![3.0], vec![-2.0], vec![1.0]], 1000.0);
        assert_eq!(cumulative_attack(&s), vec![6.0]);
        let s = schedule(vec![vec![3.0, 4.0]], 1000.0);
        assert_eq!(avg_network_load_change(&s, 1).unwrap(), 7.0);
        let s = schedule(vec![vec![3.0, 4.0], vec![-7.0, 0.0]], 1000.0);
        assert_eq!(avg_network_load_change(&s, 2).unwrap(), 7.0);
        assert!(avg_network_load_change(&s, 0).is_err());
        let s = schedule(vec![vec![100.0, 0.0]], 1000.0);
        assert!((vulnerability_ratio(&s).unwrap() - 0.1).abs() < 1e-15);
        let zero = schedule(vec![vec![0.0, 0.0]], 1000.0);
        assert_eq!(vulnerability_ratio(&zero).unwrap(), 0.0);
        assert_eq!(avg_network_load_change(&zero, 1).unwrap(), 0.0);
        assert!(vulnerability_ratio(&schedule(vec![vec![1.0]], 0.0)).is_err());
    }

    #[test]
    fn doubling_every_load_gives_unit_ratio() {
        let case = GridCase::from_file(three_bus_file()).unwrap();
        let nodes = case.load_buses();
        let x = AttackVector { lambda0: vec![1e6; nodes.len()], interval: 5, scenario: 2, gain: 0.0 };
        let s = realize_schedule(&case, &nodes, &x, &[vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert!((vulnerability_ratio(&s).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.epochs, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn zero_gain_is_static() {
        let case = GridCase::from_file(three_bus_file()).unwrap();
        let nodes = case.load_buses();
        let x = AttackVector { lambda0: vec![30.0, 50.0], interval: 2, scenario: 2, gain: 0.0 };
        let s = realize_schedule(&case, &nodes, &x, &[vec![-0.01; 3], vec![0.02; 3]]).unwrap();
        assert_eq!(s.changes[0], vec![30.0, 50.0]);
        assert!(s.changes[1..].iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn two_node_recursion_by_hand() {
        let case = GridCase::from_file(three_bus_file()).unwrap();
        // Buses 2 and 3 (indices 1 and 2), 80 MW each, 160 MW cap.
        let nodes = vec![1, 2];
        let x = AttackVector { lambda0: vec![50.0, 100.0], interval: 1, scenario: 2, gain: 2.0 };
        let ws = 100.0 * std::f64::consts::PI;
        let omega = vec![vec![0.0, -0.05, 0.02], vec![0.0, -0.1, 0.5]];
        let s = realize_schedule(&case, &nodes, &x, &omega).unwrap();
        // Node 2: 80 + 50 = 130; then 130 + 2*0.05*ws = 161.4 -> 160; then 160 + 2*0.1*ws -> 160.
        // Node 3: 80 + 80 (clamped) = 160; then 160 - 2*0.02*ws = 147.43; then -> 0.
        let l3 = 160.0 - 2.0 * 0.02 * ws;
        let expected = [vec![50.0, 80.0], vec![30.0, l3 - 160.0], vec![0.0, -l3]];
        for (row, exp) in s.changes.iter().zip(&expected) {
            for (a, b) in row.iter().zip(exp) {
                assert!((a - b).abs() < 1e-9, "{row:?} vs {exp:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn clamping_and_direction(p_max in 0.0f64..2000.0, frac in 0.0f64..=1.0, omega in -0.2f64..0.2, c in 0.0f64..10.0) {
            let chi = frac * p_max;
            let lam = next_load_change(chi, omega, c, p_max);
            let new = chi + lam;
            prop_assert!(new >= 0.0 && new <= p_max * (1.0 + 1e-15) + 1e-12);
            let raw = chi - c * omega;
            if raw > 0.0 && raw < p_max && lam != 0.0 {
                prop_assert_eq!(lam.signum(), -omega.signum());
            }
        }

        #[test]
        fn cumulative_dominates_net(rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 1..20)) {
            let s = schedule(rows.clone(), 1000.0);
            let sigma = cumulative_attack(&s);
            for i in 0..3 {
                let net: f64 = rows.iter().map(|r| r[i]).sum();
                prop_assert!(sigma[i] + 1e-9 >= net.abs());
            }
            let h = rows.len();
            let mu = avg_network_load_change(&s, h).unwrap();
            prop_assert!((mu * h as f64 - sigma.iter().sum::<f64>()).abs() < 1e-9);
        }
    }
}
