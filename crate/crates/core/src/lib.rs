//! Randomized signature codes for decentralized interference networks.
//!
//! A signature is the element-wise product of a spreading vector (i.i.d. symbols from a
//! sign-symmetric integer alphabet) and a Bernoulli masking vector. The modules below cover
//! the ensemble itself, exact span/rank kernels, sum multiplexing gain, the achievable-rate
//! lower bound, Rayleigh-fading parameter design, blind gain inference, the masking-vs-spreading
//! comparison, and mixed-Gaussian entropy bounds.
//!
//! All entropies and rates are in bits.

pub mod codebook;
pub mod design;
pub mod inference;
pub mod mixent;
pub mod optimality;
pub mod rate;
pub mod sigspace;
pub mod smg;

mod numeric;

pub use codebook::{PowerNormalization, SignatureDistribution, SupportAtom};
pub use rate::{ChannelDraw, RateBreakdown};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("support too large, use sampling ({size} atoms exceeds cap {cap})")]
    SupportTooLarge { size: u128, cap: u128 },

    #[error("enumeration too large, use Monte Carlo ({size} evaluations exceeds cap {cap})")]
    EnumerationTooLarge { size: u128, cap: u128 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent observation: {0}")]
    Inconsistent(String),

    #[error("linear system inconsistent (residual {residual:e})")]
    Residual { residual: f64 },

    #[error("case not covered by the closed-form power cases: {0}")]
    CaseNotCovered(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Default cap on enumerated support atoms.
pub const SUPPORT_CAP: u128 = 1_000_000;
/// Default cap on enumeration work (rank evaluations or interferer tuples).
pub const ENUMERATION_CAP: u128 = 10_000_000;
/// Default cap on the size of a deterministic code set.
pub const CODE_SET_CAP: usize = 20;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Converts SNR in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
