//! Revealed-preference detection of a cognitive radar and the radar's
//! countermeasures.
//!
//! An adversary probes a radar with state-noise spectra `alpha_k` and
//! observes the radar's responses `beta_k` (inverse observation-noise
//! spectra). It tests whether the responses are consistent with utility
//! maximization under the budgets `alpha_k'beta <= 1`, deterministically
//! ([`revealed`]) or from noisy measurements ([`detector`]). The radar in
//! turn perturbs its responses to pass or fail that test on its own terms
//! ([`masking`]).

// `!(x > 0.0)` style checks reject NaN on purpose; dense numerics index by position
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod detector;
pub mod error;
mod lp;
pub mod harness;
pub mod masking;
pub mod radar;
pub mod revealed;
pub mod rng;
pub mod utility;

pub use dataset::ProbeResponseDataset;
pub use error::{Error, Result};
pub use rng::SeedStream;
pub use utility::{UtilityFamily, UtilityModel};
