//! Weak adversarial training of neural networks for 1D scalar conservation
//! laws.
//!
//! The library approximates entropy solutions of `u_t + f(u)_x = 0` on a
//! space-time slab by training a feed-forward network against an adversarial
//! test function on a Kruzkhov entropy residual. It ships the pieces needed
//! end to end: jet-propagating networks with reverse-mode parameter
//! gradients ([`net`]), the entropy residual and boundary mismatches
//! ([`residual`]), cut-off and mollifier test functions ([`testfn`]),
//! collocation samplers ([`sample`]), closed-form and finite-volume reference
//! solutions ([`oracle`]), the min-max training loop with ensembling
//! ([`train`]), and error reporting ([`report`]).

pub mod net;
pub mod oracle;
pub mod report;
pub mod residual;
pub mod sample;
pub mod testfn;
pub mod train;

/// A space-time location `(x, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub t: f64,
}

impl Point {
    pub fn new(x: f64, t: f64) -> Self {
        Point { x, t }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("every run of every configuration diverged")]
    AllRunsDiverged,
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("low-discrepancy stream exhausted")]
    Exhausted,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
