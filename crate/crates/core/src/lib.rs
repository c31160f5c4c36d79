//! Exact analysis of logit dynamics on finite potential games: transition
//! matrices, Gibbs measures, spectra, mixing and hitting times, metastability
//! certificates and the bottleneck-driven partition procedure, all at desk
//! scale where every quantity can be computed exactly.

pub mod chain;
pub mod convergence;
pub mod dist;
pub mod error;
pub mod exec;
pub mod game;
pub mod metastability;
pub mod partition;
pub mod profile;
pub mod sim;
pub mod spectral;
pub mod subset;
#[cfg(test)]
pub(crate) mod test_util;
pub mod zoo;

pub use dist::Dist;
pub use error::{Error, Result};
pub use game::GameSpec;
pub use profile::ProfileIndex;
pub use subset::SubsetMask;
