use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{SamplerError, Target, Verdict};

/// Distribution of the distance increments along the skipping direction,
/// expressed in units of the kernel's per-coordinate scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Radial {
    /// `|N(0, 1)|` in scaled coordinates.
    HalfNormal,
    /// Constant increment (used for deterministic walks).
    Fixed { step: f64 },
}

/// Halting distribution `K_phi` over `{1, 2, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Halting {
    /// Geometric on `{1, 2, ...}` with the given mean, truncated at `cap`.
    Geometric { mean: f64, cap: usize },
    Fixed { k: usize },
}

impl Halting {
    pub fn geometric(mean: f64, cap: usize) -> Self {
        Halting::Geometric { mean, cap }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        match *self {
            Halting::Geometric { mean, cap } if mean >= 1.0 && cap >= 1 => Ok(()),
            Halting::Fixed { k } if k >= 1 => Ok(()),
            other => Err(SamplerError::Kernel(format!("bad halting distribution {other:?}"))),
        }
    }

    pub fn cap(&self) -> usize {
        match *self {
            Halting::Geometric { cap, .. } => cap,
            Halting::Fixed { k } => k,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            Halting::Fixed { k } => k,
            Halting::Geometric { mean, cap } => {
                if mean <= 1.0 {
                    return 1;
                }
                let geo = Geometric::new(1.0 / mean).expect("validated success probability");
                let failures = geo.sample(rng);
                (failures.saturating_add(1) as usize).min(cap)
            }
        }
    }
}

/// A categorical coordinate that does not take part in the random walk.
/// With probability `resample_prob` it is redrawn uniformly from `levels`
/// at the start of a proposal, which keeps the proposal symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCoord {
    pub index: usize,
    pub levels: Vec<f64>,
    pub resample_prob: f64,
}

/// Symmetric skipping proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalKernel {
    /// Random-walk scale per coordinate; zero excludes the coordinate.
    pub scales: Vec<f64>,
    pub radial: Radial,
    pub halting: Halting,
    /// Optional reflecting box per coordinate. Candidates are folded back
    /// into `[lo, hi]` before the target sees them.
    pub reflect: Vec<Option<(f64, f64)>>,
    pub discrete: Vec<DiscreteCoord>,
}

impl ProposalKernel {
    /// Plain random-walk Metropolis kernel (`K = 1`) with a common scale.
    pub fn isotropic(dim: usize, scale: f64) -> Self {
        ProposalKernel {
            scales: vec![scale; dim],
            radial: Radial::HalfNormal,
            halting: Halting::Fixed { k: 1 },
            reflect: vec![None; dim],
            discrete: Vec::new(),
        }
    }

    pub fn with_halting(mut self, halting: Halting) -> Self {
        self.halting = halting;
        self
    }

    pub fn with_radial(mut self, radial: Radial) -> Self {
        self.radial = radial;
        self
    }

    pub fn with_reflection(mut self, index: usize, lo: f64, hi: f64) -> Self {
        self.reflect[index] = Some((lo, hi));
        self
    }

    pub fn with_discrete(mut self, coord: DiscreteCoord) -> Self {
        self.scales[coord.index] = 0.0;
        self.discrete.push(coord);
        self
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Multiplies every continuous scale by `factor` (pilot tuning).
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut k = self.clone();
        k.scales.iter_mut().for_each(|s| *s *= factor);
        k
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let d = self.dim();
        if self.reflect.len() != d {
            return Err(SamplerError::Kernel("reflect length differs from scales".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(SamplerError::Kernel("scales must be finite and non-negative".into()));
        }
        if !self.scales.iter().any(|s| *s > 0.0) {
            return Err(SamplerError::Kernel("at least one continuous coordinate required".into()));
        }
        if let Radial::Fixed { step } = self.radial {
            if !(step > 0.0) {
                return Err(SamplerError::Kernel("fixed increment must be positive".into()));
            }
        }
        for (lo, hi) in self.reflect.iter().flatten() {
            if !(hi > lo) {
                return Err(SamplerError::Kernel(format!("empty reflecting interval [{lo}, {hi}]")));
            }
        }
        for c in &self.discrete {
            if c.index >= d || c.levels.is_empty() || !(0.0..=1.0).contains(&c.resample_prob) {
                return Err(SamplerError::Kernel(format!("bad discrete coordinate {}", c.index)));
            }
            if self.scales[c.index] != 0.0 {
                return Err(SamplerError::Kernel(format!(
                    "discrete coordinate {} must have zero scale",
                    c.index
                )));
            }
        }
        self.halting.validate()
    }

    fn fold(&self, z: &[f64], out: &mut [f64]) {
        for ((o, &v), b) in out.iter_mut().zip(z).zip(&self.reflect) {
            *o = match b {
                Some((lo, hi)) => fold_into(v, *lo, *hi),
                None => v,
            };
        }
    }

    fn radial_increment<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.radial {
            Radial::Fixed { step } => step,
            Radial::HalfNormal => {
                let r: f64 = StandardNormal.sample(rng);
                r.abs()
            }
        }
    }

    /// Draws a full skipping proposal from `u`.
    pub fn propose<T: Target, R: Rng + ?Sized>(
        &self,
        target: &T,
        u: &[f64],
        rng: &mut R,
    ) -> Proposal<T::Info> {
        let mut start = u.to_vec();
        for c in &self.discrete {
            if rng.random::<f64>() < c.resample_prob {
                start[c.index] = c.levels[rng.random_range(0..c.levels.len())];
            }
        }
        // Zero-length first steps have probability zero; redraw if one occurs.
        let mut xi = vec![0.0; u.len()];
        loop {
            let mut norm2 = 0.0;
            for (x, &s) in xi.iter_mut().zip(&self.scales) {
                *x = if s > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
                norm2 += *x * *x;
            }
            if norm2 > 0.0 {
                break;
            }
        }
        let z1: Vec<f64> = start
            .iter()
            .zip(&xi)
            .zip(&self.scales)
            .map(|((&s0, &x), &s)| s0 + s * x)
            .collect();
        let halt = self.halting.sample(rng);
        propose_from(self, target, &start, &z1, halt, || self.radial_increment(rng))
    }
}

/// Result of one skipping proposal.
#[derive(Debug, Clone)]
pub struct Proposal<I> {
    /// Candidate, folded into the reflecting box.
    pub point: Vec<f64>,
    /// `pi(Z) = rho(Z) 1_A(Z)` at the candidate.
    pub pi: f64,
    pub verdict: Verdict<I>,
    /// Number of distance increments taken after the initial step.
    pub skips: usize,
    pub oracle_calls: u64,
    pub oracle_failures: u64,
}

/// Skipping walk with a given initial step `z1` and halting index.
///
/// Exposed separately so the deterministic mechanics (direction, skip
/// loop, halting) can be exercised without randomness. `increment` is
/// called once per skip and returns the distance in scaled units.
pub fn propose_from<T: Target>(
    kernel: &ProposalKernel,
    target: &T,
    start: &[f64],
    z1: &[f64],
    halt: usize,
    mut increment: impl FnMut() -> f64,
) -> Proposal<T::Info> {
    let d = start.len();
    // Direction in scaled coordinates, mapped back to raw coordinates so
    // that one unit of increment equals one scale length along it.
    let mut dir = vec![0.0; d];
    let mut norm2 = 0.0;
    for i in 0..d {
        let s = kernel.scales[i];
        if s > 0.0 {
            let y = (z1[i] - start[i]) / s;
            dir[i] = y;
            norm2 += y * y;
        }
    }
    let norm = norm2.sqrt();
    for i in 0..d {
        dir[i] = if norm > 0.0 { dir[i] / norm * kernel.scales[i] } else { 0.0 };
    }

    let mut calls = 0u64;
    let mut failures = 0u64;
    let mut z = z1.to_vec();
    let mut folded = vec![0.0; d];
    let mut k = 1usize;
    loop {
        kernel.fold(&z, &mut folded);
        let rho = target.density(&folded);
        let verdict = if rho > 0.0 {
            calls += 1;
            let v = target.evaluate(&folded);
            if matches!(v, Verdict::Failed) {
                failures += 1;
            }
            v
        } else {
            Verdict::Outside
        };
        let inside = verdict.is_inside();
        if inside || k >= halt {
            return Proposal {
                point: folded,
                pi: if inside { rho } else { 0.0 },
                verdict,
                skips: k - 1,
                oracle_calls: calls,
                oracle_failures: failures,
            };
        }
        let r = increment();
        for (zi, di) in z.iter_mut().zip(&dir) {
            *zi += di * r;
        }
        k += 1;
    }
}

/// Acceptance probability `alpha(u, z)` for unnormalised `pi` values.
pub fn accept_probability(pi_u: f64, pi_z: f64) -> f64 {
    if pi_u != 0.0 {
        (pi_z / pi_u).min(1.0)
    } else {
        1.0
    }
}

/// Folds `x` into `[lo, hi]` by repeated reflection at the endpoints.
pub fn fold_into(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let period = 2.0 * w;
    let mut y = (x - lo) % period;
    if y < 0.0 {
        y += period;
    }
    if y > w {
        y = period - y;
    }
    lo + y
}
