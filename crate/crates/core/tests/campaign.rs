mod common;

use std::path::Path;

use cascade_core::analysis::{analyze, trends, write_tables};
use cascade_core::attack::AttackVector;
use cascade_core::campaign::{
    read_lambda0, read_records, record_attack, run_campaign, CampaignConfig, Oracle, ProtectionSetting, RunOptions,
    SampleRecord, LAMBDA0_FILE, RECORDS_CSV, RECORDS_FILE,
};
use cascade_core::dynamics::DynamicsConfig;
use cascade_core::protection::{KindCounts, KindTotals, ProtectionConfig};
use cascade_core::Error;
use proptest::prelude::*;
use skipping::{Target, Verdict};

fn toy_config(dir: &Path, proposals: u64) -> CampaignConfig {
    let case_path = dir.join("three_bus.json");
    std::fs::write(&case_path, common::three_bus().to_json_string()).unwrap();
    let mut cfg = CampaignConfig::new(case_path.to_str().unwrap());
    cfg.attack.lambda0_max_mw = 60.0;
    cfg.attack.t_max_s = 10;
    cfg.calibration.n1.horizon = 10.0;
    cfg.sampler.proposals = proposals;
    cfg.sampler.seed = 11;
    cfg.sampler.pilot_proposals = 40;
    cfg.sampler.checkpoint_every = 10;
    cfg
}

fn toy_oracle() -> Oracle {
    let mut cfg = CampaignConfig::new("unused");
    cfg.attack.lambda0_max_mw = 60.0;
    cfg.attack.t_max_s = 10;
    Oracle::new(&common::three_bus(), ProtectionConfig::default(), &DynamicsConfig::default(), &cfg.attack).unwrap()
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn null_attack_is_outside() {
    let o = toy_oracle();
    let zero = AttackVector { lambda0: vec![0.0; o.nodes().len()], interval: 1, scenario: 2, gain: 0.0 };
    let e = o.evaluate_attack(&zero).unwrap();
    assert!(!e.in_a());
    assert_eq!(e.metrics.total, 0.0);
    // Gain 0 lies below the box.
    assert_eq!(o.density(&o.encode(&zero)), 0.0);
    let x = o.encode(&AttackVector { gain: 0.5, ..zero });
    assert_eq!(o.density(&x), 1.0);
    assert!(matches!(o.evaluate(&x), Verdict::Outside));
}

#[test]
fn witness_is_inside_and_deterministic() {
    let o = toy_oracle();
    let w = o.witnesses(2).unwrap();
    assert!(!w.is_empty());
    for x in &w {
        let a = o.decode(x);
        let e1 = o.evaluate_attack(&a).unwrap();
        let e2 = o.evaluate_attack(&a).unwrap();
        assert!(e1.in_a());
        assert_eq!(serde_json::to_string(&e1).unwrap(), serde_json::to_string(&e2).unwrap());
    }
}

#[test]
fn decode_rounds_the_interval_and_respects_the_box() {
    let o = toy_oracle();
    let l = o.nodes().len();
    let mut x = vec![10.0; l];
    x.extend([3.49, 4.0, 1.0]);
    assert_eq!(o.decode(&x).interval, 3);
    x[l] = 10.5;
    assert_eq!(o.decode(&x).interval, 10);
    assert_eq!(o.density(&x), 1.0);
    x[l] = 10.6;
    assert_eq!(o.density(&x), 0.0);
    x[l] = 5.0;
    x[0] = 60.5;
    assert_eq!(o.density(&x), 0.0);
}

#[test]
fn smoke_campaign_on_three_buses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), 100);
    let out = dir.path().join("run");
    let s = run_campaign(&cfg, &out, &RunOptions::default()).unwrap();
    assert!(s.complete);
    assert_eq!(s.proposals, 100);
    assert_eq!(s.diagnostics.proposals, 100);
    assert!((0.0..=1.0).contains(&s.acceptance_rate));
    assert!(s.calibration.is_some());
    let summary: serde_json::Value = serde_json::from_slice(&bytes(out.join("summary.json"))).unwrap();
    assert_eq!(summary["schema"], "cascade-laa-summary/1");

    let records = read_records(out.join(RECORDS_FILE)).unwrap();
    assert_eq!(records.len() as u64, s.records);
    assert!(!records.is_empty());
    let side = read_lambda0(out.join(LAMBDA0_FILE)).unwrap();
    assert_eq!(side.len() as u64, s.unique_records);
    assert_eq!(bytes(out.join(RECORDS_CSV)).iter().filter(|&&b| b == b'\n').count(), records.len() + 1);

    let case = common::three_bus();
    let oracle = Oracle::new(&case, s.protection.clone(), &cfg.dynamics, &cfg.attack).unwrap();
    let mut per_chain = vec![0u64; cfg.sampler.chains];
    for r in &records {
        assert!(r.counts.total() > 0, "{}", r.id);
        assert!(r.x_mw >= 0.0);
        assert!(r.chain < cfg.sampler.chains && r.proposal >= 1);
        assert!(r.proposal > per_chain[r.chain], "records are in proposal order per chain");
        per_chain[r.chain] = r.proposal;
        let entry = side.iter().find(|e| e.id == r.state).expect("state has a sidecar entry");
        assert_eq!(r.unique, r.id == r.state);
        let a = record_attack(r, &entry.lambda0_mw).unwrap();
        let e = oracle.evaluate_attack(&a).unwrap();
        assert_eq!(e.metrics.counts, r.counts);
        assert_eq!(e.metrics.total, r.x_mw);
    }
    // A unique state is followed by repeats exactly while proposals are rejected.
    for w in records.windows(2) {
        if w[1].chain == w[0].chain && w[1].proposal == w[0].proposal + 1 && !w[1].accepted {
            assert_eq!(w[1].state, w[0].state);
            assert_eq!(w[1].lambda0_digest, w[0].lambda0_digest);
        }
    }
}

#[test]
fn campaigns_are_byte_identical_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), 80);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run_campaign(&cfg, &a, &RunOptions::default()).unwrap();
    run_campaign(&cfg, &b, &RunOptions::default()).unwrap();

    let halted = run_campaign(&cfg, &c, &RunOptions { resume: false, halt_after: Some(13) }).unwrap();
    assert!(!halted.complete);
    assert!(!c.join(RECORDS_FILE).exists());
    let resumed = run_campaign(&cfg, &c, &RunOptions { resume: true, halt_after: None }).unwrap();
    assert!(resumed.complete);

    for f in [RECORDS_FILE, LAMBDA0_FILE, RECORDS_CSV] {
        assert_eq!(bytes(a.join(f)), bytes(b.join(f)), "{f} differs between runs");
        assert_eq!(bytes(a.join(f)), bytes(c.join(f)), "{f} differs after resume");
    }

    let mut other = cfg.clone();
    other.sampler.seed += 1;
    assert!(matches!(
        run_campaign(&other, &c, &RunOptions { resume: true, halt_after: None }),
        Err(Error::Validation(_))
    ));
}

#[test]
fn fixed_protection_skips_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(dir.path(), 8);
    cfg.protection = ProtectionSetting::Fixed(ProtectionConfig::default());
    cfg.sampler.chains = 3;
    let s = run_campaign(&cfg, &dir.path().join("run"), &RunOptions::default()).unwrap();
    assert!(s.calibration.is_none());
    assert_eq!(s.protection, ProtectionConfig::default());
    let quotas: Vec<u64> = s.chains.iter().map(|c| c.proposals).collect();
    assert_eq!(quotas, vec![3, 3, 2]);
}

#[test]
fn missing_case_is_an_io_error() {
    let cfg = CampaignConfig::new("/nonexistent/case.json");
    let dir = tempfile::tempdir().unwrap();
    let err = run_campaign(&cfg, dir.path(), &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

fn rec(nu: f64, interval: u32, mu: f64, tau: u8, area: [KindTotals; 3]) -> SampleRecord {
    let mut by_kind = KindTotals::default();
    for a in &area {
        by_kind.rigs += a.rigs;
        by_kind.ofgs += a.ofgs;
        by_kind.ufls += a.ufls;
    }
    SampleRecord {
        id: "c0p1".into(),
        state: "c0p1".into(),
        chain: 0,
        proposal: 1,
        seed: 0,
        accepted: true,
        unique: true,
        lambda0_digest: String::new(),
        lambda0_total_mw: 0.0,
        interval,
        scenario: tau,
        gain: 1.0,
        x_mw: by_kind.total(),
        by_kind,
        by_area: area.to_vec(),
        counts: KindCounts { rigs: 1, ..Default::default() },
        sigma_mw: vec![],
        mu_mw: mu,
        nu,
        epochs: 1,
        first_event: None,
        diverged: false,
    }
}

fn kt(rigs: f64, ofgs: f64, ufls: f64) -> KindTotals {
    KindTotals { rigs, ofgs, ufls }
}

#[test]
fn synthetic_tables_match_hand_means() {
    let z = KindTotals::default();
    let records = vec![
        rec(0.05, 3, 500.0, 1, [kt(100.0, 0.0, 0.0), z, z]),
        rec(0.15, 12, 1500.0, 4, [kt(0.0, 0.0, 40.0), kt(200.0, 0.0, 0.0), z]),
        rec(0.17, 15, 1700.0, 4, [z, z, kt(0.0, 30.0, 20.0)]),
        rec(1.7, 60, 2500.0, 4, [kt(300.0, 0.0, 0.0), z, z]),
    ];
    let t = analyze(&records).unwrap();

    // Areas: sums over four records.
    assert_eq!(t.area.len(), 3);
    assert_eq!((t.area[0].rigs_mw, t.area[0].ufls_mw, t.area[0].x_mw), (100.0, 10.0, 110.0));
    assert_eq!((t.area[1].rigs_mw, t.area[1].x_mw), (50.0, 50.0));
    assert_eq!((t.area[2].ofgs_mw, t.area[2].ufls_mw, t.area[2].x_mw), (7.5, 5.0, 12.5));
    assert!(t.area.iter().all(|a| a.n == 4));

    let nu: Vec<(usize, usize, f64)> = t.nu.iter().map(|r| (r.bin, r.n, r.x_mw)).collect();
    assert_eq!(nu, vec![(0, 1, 100.0), (1, 2, 145.0), (10, 1, 300.0)]);
    assert_eq!(t.nu[2].nu_hi, None);
    assert_eq!(t.nu[1].nu_hi, Some(0.2));

    let grid: Vec<(u32, f64, usize, f64)> = t.heatmap.iter().map(|r| (r.i_lo_s, r.mu_lo_gw, r.n, r.x_mw)).collect();
    assert_eq!(grid, vec![(0, 0.0, 1, 100.0), (10, 1.0, 2, 145.0), (60, 2.0, 1, 300.0)]);

    assert_eq!(t.tau.len(), 2);
    assert_eq!((t.tau[0].tau, t.tau[0].n, t.tau[0].x_mw, t.tau[0].ufls_share), (1, 1, 100.0, 0.0));
    let t4 = &t.tau[1];
    assert_eq!((t4.n, t4.x_mw, t4.rigs_mw, t4.ofgs_mw, t4.ufls_mw), (3, 590.0 / 3.0, 500.0 / 3.0, 10.0, 20.0));
    assert!((t4.ufls_share - 60.0 / 590.0).abs() < 1e-15);

    let tr = trends(&records).unwrap();
    assert_eq!((tr.low_nu_n, tr.low_nu_x_mw), (1, Some(100.0)));
    assert_eq!(tr.mid_nu_bins, 1);
    assert_eq!(tr.mid_nu_spearman, None);
    assert_eq!(tr.min_mu_mw, vec![Some(500.0), Some(1500.0), Some(2500.0)]);
    assert_eq!(tr.min_mu_increasing(), Some(true));

    let dir = tempfile::tempdir().unwrap();
    write_tables(&t, dir.path()).unwrap();
    let nu_csv = std::fs::read_to_string(dir.path().join("nu.csv")).unwrap();
    assert_eq!(nu_csv.lines().next().unwrap(), "bin,nu_lo,nu_hi,n,rigs_mw,ofgs_mw,ufls_mw,x_mw");
    assert_eq!(nu_csv.lines().nth(3).unwrap(), "10,1.0,,1,300.0,0.0,0.0,300.0");
}

#[test]
fn single_record_tables_hold_its_values() {
    let r = rec(0.42, 7, 3200.0, 3, [kt(10.0, 0.0, 5.0), kt(0.0, 2.0, 0.0), KindTotals::default()]);
    let t = analyze(std::slice::from_ref(&r)).unwrap();
    assert_eq!(t.nu.len(), 1);
    assert_eq!((t.nu[0].bin, t.nu[0].x_mw, t.nu[0].ufls_mw), (4, 17.0, 5.0));
    assert_eq!(t.heatmap.len(), 1);
    assert_eq!((t.heatmap[0].i_lo_s, t.heatmap[0].mu_lo_gw, t.heatmap[0].x_mw), (0, 3.0, 17.0));
    assert_eq!(t.tau.len(), 1);
    assert_eq!((t.tau[0].tau, t.tau[0].x_mw, t.tau[0].ofgs_mw), (3, 17.0, 2.0));
    assert_eq!(t.area[0].x_mw, 15.0);
    assert_eq!(t.area[1].x_mw, 2.0);
    assert_eq!(t.area[2].x_mw, 0.0);
}

#[test]
fn empty_input_is_rejected() {
    assert!(matches!(analyze(&[]), Err(Error::Empty(_))));
    assert!(matches!(trends(&[]), Err(Error::Empty(_))));
}

proptest! {
    #[test]
    fn tables_partition_the_records(
        rows in prop::collection::vec(
            (0.0..2.0f64, 1u32..=60, 0.0..20_000.0f64, 1u8..=4, prop::array::uniform3((0.0..500.0f64, 0.0..500.0f64, 0.0..500.0f64))),
            1..40,
        )
    ) {
        let records: Vec<SampleRecord> = rows
            .iter()
            .map(|&(nu, i, mu, tau, a)| rec(nu, i, mu, tau, a.map(|(r, o, u)| kt(r, o, u))))
            .collect();
        let n = records.len();
        let mean_x = records.iter().map(|r| r.x_mw).sum::<f64>() / n as f64;
        let t = analyze(&records).unwrap();
        let tol = 1e-9 * (1.0 + mean_x);
        let area_sum: f64 = t.area.iter().map(|a| a.x_mw).sum();
        prop_assert!((area_sum - mean_x).abs() < tol);
        for tab in [
            t.nu.iter().map(|r| (r.n, r.x_mw)).collect::<Vec<_>>(),
            t.heatmap.iter().map(|r| (r.n, r.x_mw)).collect(),
            t.tau.iter().map(|r| (r.n, r.x_mw)).collect(),
        ] {
            prop_assert_eq!(tab.iter().map(|r| r.0).sum::<usize>(), n);
            let weighted: f64 = tab.iter().map(|(k, x)| *k as f64 * x).sum::<f64>() / n as f64;
            prop_assert!((weighted - mean_x).abs() < tol);
        }
        for r in &t.tau {
            prop_assert!((r.rigs_mw + r.ofgs_mw + r.ufls_mw - r.x_mw).abs() < 1e-9 * (1.0 + r.x_mw));
        }
    }
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ieee39.json");
    let cfg = CampaignConfig::load(path).unwrap();
    assert_eq!(cfg.protection, ProtectionSetting::default());
    assert_eq!(cfg.sampler.proposals, 10_000);
    assert_eq!(cfg.attack, CampaignConfig::new("x").attack);
}
