//! Skipping sampler: a Metropolis-class MCMC for drawing from a density
//! conditioned on a (possibly rare, possibly disconnected) set `A`.
//!
//! A proposal starts as an ordinary random-walk step `Z1 ~ q(. - u)`. While
//! the current candidate lies outside `C = {x : rho(x) 1_A(x) > 0}` and fewer
//! than `K ~ K_phi` points have been generated, the candidate keeps moving
//! along the initial direction by random distance increments. The final
//! candidate is accepted with the usual Metropolis ratio of `pi = rho 1_A`.
//!
//! The crate is generic over the target: the expensive membership oracle is
//! only consulted at points where the prior density is positive.
//!
//! ```
//! use skipping::{run_chain, Halting, ProposalKernel, Target, Verdict};
//!
//! struct HalfLine;
//! impl Target for HalfLine {
//!     type Info = ();
//!     fn dim(&self) -> usize { 1 }
//!     fn density(&self, x: &[f64]) -> f64 { (-0.5 * x[0] * x[0]).exp() }
//!     fn evaluate(&self, x: &[f64]) -> Verdict<()> {
//!         if x[0] >= 2.0 { Verdict::Inside(()) } else { Verdict::Outside }
//!     }
//! }
//!
//! let kernel = ProposalKernel::isotropic(1, 0.5).with_halting(Halting::geometric(10.0, 100));
//! let run = run_chain(&HalfLine, &kernel, 1_000, &[2.5], 7).unwrap();
//! assert!(run.path.iter().all(|x| x[0] >= 2.0));
//! ```

mod chain;
mod kernel;

pub use chain::{run_chain, Chain, ChainCheckpoint, ChainDiagnostics, ChainRun, RngState, Step};
pub use kernel::{
    accept_probability, fold_into, propose_from, DiscreteCoord, Halting, Proposal, ProposalKernel,
    Radial,
};

use thiserror::Error;

/// Outcome of the condition oracle at one point.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<I> {
    /// The point belongs to the conditioning set; `I` carries whatever the
    /// oracle computed on the way (e.g. a simulation record).
    Inside(I),
    Outside,
    /// The oracle could not decide (numerical failure). Treated as outside
    /// and counted separately in the diagnostics.
    Failed,
}

impl<I> Verdict<I> {
    pub fn is_inside(&self) -> bool {
        matches!(self, Verdict::Inside(_))
    }
}

/// A prior density together with a membership oracle for the conditioning set.
pub trait Target {
    /// Side information returned by the oracle for points inside the set.
    type Info: Clone;

    fn dim(&self) -> usize;

    /// Unnormalised prior density `rho(x) >= 0`.
    fn density(&self, x: &[f64]) -> f64;

    /// Membership oracle `1_A(x)`. Must be deterministic in `x`.
    fn evaluate(&self, x: &[f64]) -> Verdict<Self::Info>;
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("number of proposals must be at least 1")]
    NoProposals,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}
