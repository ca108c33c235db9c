//! Aggregate tables over campaign records and the trend statistics checked
//! at desk scale. All means are path averages: a state repeated by rejected
//! proposals counts once per repetition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::{csv_error, SampleRecord};
use crate::error::{Error, Result};

/// Vulnerability-ratio bins per unit ratio (bins of width 0.1).
pub const NU_PER_UNIT: f64 = 10.0;
/// Ratios at or above `NU_BINS / NU_PER_UNIT` share the last, open bin.
pub const NU_BINS: usize = 10;
/// Attack-interval bin width of the heatmap, s.
pub const I_BIN_S: u32 = 10;
/// Average load change bin width of the heatmap, GW.
pub const MU_BIN_GW: f64 = 1.0;

pub const AREA_CSV: &str = "area.csv";
pub const NU_CSV: &str = "nu.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const TAU_CSV: &str = "tau.csv";

/// Mean MW by event kind over all records, for one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRow {
    pub area: u8,
    pub n: usize,
    pub rigs_mw: f64,
    pub ofgs_mw: f64,
    pub ufls_mw: f64,
    pub x_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuRow {
    pub bin: usize,
    pub nu_lo: f64,
    /// Empty for the open last bin.
    pub nu_hi: Option<f64>,
    pub n: usize,
    pub rigs_mw: f64,
    pub ofgs_mw: f64,
    pub ufls_mw: f64,
    pub x_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub i_lo_s: u32,
    pub i_hi_s: u32,
    pub mu_lo_gw: f64,
    pub mu_hi_gw: f64,
    pub n: usize,
    pub x_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub tau: u8,
    pub n: usize,
    pub rigs_mw: f64,
    pub ofgs_mw: f64,
    pub ufls_mw: f64,
    pub x_mw: f64,
    /// UFLS fraction of the mean cascade; 0 when the mean is 0.
    pub ufls_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub area: Vec<AreaRow>,
    pub nu: Vec<NuRow>,
    pub heatmap: Vec<HeatmapRow>,
    pub tau: Vec<TauRow>,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    rigs: f64,
    ofgs: f64,
    ufls: f64,
    x: f64,
}

impl Acc {
    fn add(&mut self, r: &SampleRecord) {
        self.n += 1;
        self.rigs += r.by_kind.rigs;
        self.ofgs += r.by_kind.ofgs;
        self.ufls += r.by_kind.ufls;
        self.x += r.x_mw;
    }

    fn mean(&self) -> [f64; 4] {
        let n = self.n as f64;
        [self.rigs / n, self.ofgs / n, self.ufls / n, self.x / n]
    }
}

pub fn nu_bin(nu: f64) -> usize {
    ((nu * NU_PER_UNIT + 1e-9).floor().max(0.0) as usize).min(NU_BINS)
}

fn i_bin(i: u32) -> u32 {
    i / I_BIN_S
}

fn mu_bin(mu_mw: f64) -> i64 {
    (mu_mw / 1000.0 / MU_BIN_GW).floor() as i64
}

/// The four tables. Rows appear only for populated bins, in ascending order.
pub fn analyze(records: &[SampleRecord]) -> Result<Tables> {
    if records.is_empty() {
        return Err(Error::Empty("no accepted samples to analyze".into()));
    }
    let n = records.len();
    let n_areas = records.iter().map(|r| r.by_area.len()).max().unwrap_or(0);
    let mut area = vec![Acc { n, ..Acc::default() }; n_areas];
    let mut nu = vec![Acc::default(); NU_BINS + 1];
    let mut grid: std::collections::BTreeMap<(u32, i64), Acc> = Default::default();
    let mut tau: std::collections::BTreeMap<u8, Acc> = Default::default();
    for r in records {
        for (a, t) in area.iter_mut().zip(&r.by_area) {
            a.rigs += t.rigs;
            a.ofgs += t.ofgs;
            a.ufls += t.ufls;
            a.x += t.total();
        }
        nu[nu_bin(r.nu)].add(r);
        grid.entry((i_bin(r.interval), mu_bin(r.mu_mw))).or_default().add(r);
        tau.entry(r.scenario).or_default().add(r);
    }
    let area = area
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let [rigs_mw, ofgs_mw, ufls_mw, x_mw] = a.mean();
            AreaRow { area: k as u8 + 1, n: a.n, rigs_mw, ofgs_mw, ufls_mw, x_mw }
        })
        .collect();
    let nu = nu
        .iter()
        .enumerate()
        .filter(|(_, a)| a.n > 0)
        .map(|(k, a)| {
            let [rigs_mw, ofgs_mw, ufls_mw, x_mw] = a.mean();
            NuRow {
                bin: k,
                nu_lo: k as f64 / NU_PER_UNIT,
                nu_hi: (k < NU_BINS).then(|| (k + 1) as f64 / NU_PER_UNIT),
                n: a.n,
                rigs_mw,
                ofgs_mw,
                ufls_mw,
                x_mw,
            }
        })
        .collect();
    let heatmap = grid
        .iter()
        .map(|(&(i, m), a)| HeatmapRow {
            i_lo_s: i * I_BIN_S,
            i_hi_s: (i + 1) * I_BIN_S,
            mu_lo_gw: m as f64 * MU_BIN_GW,
            mu_hi_gw: (m + 1) as f64 * MU_BIN_GW,
            n: a.n,
            x_mw: a.mean()[3],
        })
        .collect();
    let tau = tau
        .iter()
        .map(|(&t, a)| {
            let [rigs_mw, ofgs_mw, ufls_mw, x_mw] = a.mean();
            TauRow {
                tau: t,
                n: a.n,
                rigs_mw,
                ofgs_mw,
                ufls_mw,
                x_mw,
                ufls_share: if x_mw > 0.0 { ufls_mw / x_mw } else { 0.0 },
            }
        })
        .collect();
    Ok(Tables { area, nu, heatmap, tau })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `area.csv`, `nu.csv`, `heatmap.csv` and `tau.csv` into `dir`.
pub fn write_tables(t: &Tables, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join(AREA_CSV), &t.area)?;
    write_csv(&dir.join(NU_CSV), &t.nu)?;
    write_csv(&dir.join(HEATMAP_CSV), &t.heatmap)?;
    write_csv(&dir.join(TAU_CSV), &t.tau)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` with fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Interval bins of the threshold trend, s: `[1, 10)`, `[10, 30)`, `[30, 60]`.
pub const TREND_I_BINS: [(u32, u32); 3] = [(1, 10), (10, 30), (30, u32::MAX)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTrend {
    pub tau: u8,
    pub n: usize,
    pub x_mw: f64,
    pub ufls_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trends {
    /// Records with `nu <= 0.1` and their mean cascade, MW.
    pub low_nu_n: usize,
    pub low_nu_x_mw: Option<f64>,
    /// Spearman correlation of bin index against mean X over the bins
    /// covering `nu` in `[0.1, 0.6)`.
    pub mid_nu_spearman: Option<f64>,
    pub mid_nu_bins: usize,
    /// Smallest average load change per [`TREND_I_BINS`] entry, MW.
    pub min_mu_mw: Vec<Option<f64>>,
    pub tau: Vec<TauTrend>,
}

impl Trends {
    pub fn min_mu_increasing(&self) -> Option<bool> {
        let v: Option<Vec<f64>> = self.min_mu_mw.iter().copied().collect();
        v.map(|v| v.windows(2).all(|w| w[1] > w[0]))
    }

    pub fn tau_row(&self, t: u8) -> Option<&TauTrend> {
        self.tau.iter().find(|r| r.tau == t)
    }
}

pub fn trends(records: &[SampleRecord]) -> Result<Trends> {
    let t = analyze(records)?;
    let low: Vec<&SampleRecord> = records.iter().filter(|r| r.nu <= 0.1).collect();
    let low_nu_x_mw = (!low.is_empty()).then(|| low.iter().map(|r| r.x_mw).sum::<f64>() / low.len() as f64);
    let mid: Vec<&NuRow> = t.nu.iter().filter(|r| (1..6).contains(&r.bin)).collect();
    let xs: Vec<f64> = mid.iter().map(|r| r.bin as f64).collect();
    let ys: Vec<f64> = mid.iter().map(|r| r.x_mw).collect();
    let min_mu_mw = TREND_I_BINS
        .iter()
        .map(|&(lo, hi)| {
            records
                .iter()
                .filter(|r| r.interval >= lo && r.interval < hi)
                .map(|r| r.mu_mw)
                .min_by(f64::total_cmp)
        })
        .collect();
    Ok(Trends {
        low_nu_n: low.len(),
        low_nu_x_mw,
        mid_nu_spearman: spearman(&xs, &ys),
        mid_nu_bins: mid.len(),
        min_mu_mw,
        tau: t.tau.iter().map(|r| TauTrend { tau: r.tau, n: r.n, x_mw: r.x_mw, ufls_share: r.ufls_share }).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 30.0, 20.0, 20.0]), vec![1.0, 4.0, 2.5, 2.5]);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 50.0, 500.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        // d = (0, 1, -1, 0): 1 - 6 * 2 / (4 * 15) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[4.0, 4.0]), None);
    }

    #[test]
    fn nu_bins_are_closed_below() {
        assert_eq!(nu_bin(0.0), 0);
        assert_eq!(nu_bin(0.1), 1);
        assert_eq!(nu_bin(0.3), 3);
        assert_eq!(nu_bin(0.0999), 0);
        assert_eq!(nu_bin(7.0), NU_BINS);
    }
}
