use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::accept_probability;
use crate::{ProposalKernel, SamplerError, Target, Verdict};

/// Running counters for one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub proposals: u64,
    pub accepts: u64,
    /// `skip_histogram[k]` counts proposals that took `k` skips.
    pub skip_histogram: Vec<u64>,
    pub oracle_calls: u64,
    pub oracle_failures: u64,
}

impl ChainDiagnostics {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepts as f64 / self.proposals as f64
        }
    }

    pub fn merge(&mut self, other: &ChainDiagnostics) {
        self.proposals += other.proposals;
        self.accepts += other.accepts;
        self.oracle_calls += other.oracle_calls;
        self.oracle_failures += other.oracle_failures;
        if self.skip_histogram.len() < other.skip_histogram.len() {
            self.skip_histogram.resize(other.skip_histogram.len(), 0);
        }
        for (a, b) in self.skip_histogram.iter_mut().zip(&other.skip_histogram) {
            *a += b;
        }
    }
}

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed: [u8; 32] = rng.get_seed();
        RngState {
            seed: seed.iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, SamplerError> {
        let bad = |m: &str| SamplerError::Checkpoint(m.to_string());
        if self.seed.len() != 64 {
            return Err(bad("seed must be 64 hex characters"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad("seed is not hex"))?;
        }
        let word_pos: u128 = self.word_pos.parse().map_err(|_| bad("word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Everything needed to continue a chain bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub point: Vec<f64>,
    pub pi: f64,
    pub diagnostics: ChainDiagnostics,
    pub rng: RngState,
}

/// Outcome of one Metropolis step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub accepted: bool,
    pub skips: usize,
}

/// A single skipping-sampler chain.
#[derive(Debug, Clone)]
pub struct Chain<I> {
    point: Vec<f64>,
    pi: f64,
    info: Option<I>,
    diag: ChainDiagnostics,
    rng: ChaCha8Rng,
}

impl<I: Clone> Chain<I> {
    /// Starts a chain at `init`, evaluating the target there once.
    pub fn new<T: Target<Info = I>>(target: &T, init: &[f64], seed: u64) -> Result<Self, SamplerError> {
        Self::with_rng(target, init, ChaCha8Rng::seed_from_u64(seed), ChainDiagnostics::default())
    }

    /// Rebuilds a chain from a checkpoint. The oracle is re-run at the
    /// checkpointed point to recover its side information; this extra call
    /// is not counted.
    pub fn resume<T: Target<Info = I>>(target: &T, cp: &ChainCheckpoint) -> Result<Self, SamplerError> {
        let rng = cp.rng.restore()?;
        let mut chain = Self::with_rng(target, &cp.point, rng, cp.diagnostics.clone())?;
        if chain.pi.to_bits() != cp.pi.to_bits() {
            return Err(SamplerError::Checkpoint(format!(
                "target value at checkpoint changed: {} vs {}",
                chain.pi, cp.pi
            )));
        }
        chain.diag = cp.diagnostics.clone();
        Ok(chain)
    }

    fn with_rng<T: Target<Info = I>>(
        target: &T,
        init: &[f64],
        rng: ChaCha8Rng,
        diag: ChainDiagnostics,
    ) -> Result<Self, SamplerError> {
        if init.len() != target.dim() {
            return Err(SamplerError::Dimension { expected: target.dim(), got: init.len() });
        }
        let rho = target.density(init);
        let (pi, info) = if rho > 0.0 {
            match target.evaluate(init) {
                Verdict::Inside(info) => (rho, Some(info)),
                _ => (0.0, None),
            }
        } else {
            (0.0, None)
        };
        Ok(Chain { point: init.to_vec(), pi, info, diag, rng })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// Unnormalised conditional density at the current point.
    pub fn pi(&self) -> f64 {
        self.pi
    }

    /// Oracle side information for the current point, if it lies in the set.
    pub fn info(&self) -> Option<&I> {
        self.info.as_ref()
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diag
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        ChainCheckpoint {
            point: self.point.clone(),
            pi: self.pi,
            diagnostics: self.diag.clone(),
            rng: RngState::capture(&self.rng),
        }
    }

    /// One iteration: skipping proposal followed by accept/reject.
    pub fn step<T: Target<Info = I>>(&mut self, target: &T, kernel: &ProposalKernel) -> Step {
        let prop = kernel.propose(target, &self.point, &mut self.rng);
        let alpha = accept_probability(self.pi, prop.pi);
        let v: f64 = self.rng.random();
        let accepted = v <= alpha;

        let d = &mut self.diag;
        d.proposals += 1;
        d.oracle_calls += prop.oracle_calls;
        d.oracle_failures += prop.oracle_failures;
        if d.skip_histogram.len() <= prop.skips {
            d.skip_histogram.resize(prop.skips + 1, 0);
        }
        d.skip_histogram[prop.skips] += 1;

        if accepted {
            d.accepts += 1;
            self.point = prop.point;
            self.pi = prop.pi;
            self.info = match prop.verdict {
                Verdict::Inside(info) => Some(info),
                _ => None,
            };
        }
        Step { accepted, skips: prop.skips }
    }
}

/// Full output of [`run_chain`].
#[derive(Debug, Clone)]
pub struct ChainRun {
    /// Chain position after each proposal (the Markov chain path).
    pub path: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
    pub diagnostics: ChainDiagnostics,
}

impl ChainRun {
    pub fn acceptance_rate(&self) -> f64 {
        self.diagnostics.acceptance_rate()
    }
}

/// Runs `n` skipping-sampler iterations from `init`.
pub fn run_chain<T: Target>(
    target: &T,
    kernel: &ProposalKernel,
    n: usize,
    init: &[f64],
    seed: u64,
) -> Result<ChainRun, SamplerError> {
    if n == 0 {
        return Err(SamplerError::NoProposals);
    }
    kernel.validate()?;
    if kernel.dim() != target.dim() {
        return Err(SamplerError::Dimension { expected: target.dim(), got: kernel.dim() });
    }
    let mut chain = Chain::new(target, init, seed)?;
    let mut path = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    for _ in 0..n {
        let s = chain.step(target, kernel);
        path.push(chain.point().to_vec());
        accepted.push(s.accepted);
    }
    Ok(ChainRun { path, accepted, diagnostics: chain.diag })
}
