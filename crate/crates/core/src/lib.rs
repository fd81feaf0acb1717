//! Discrete potential theory on recurrent weighted networks.
//!
//! Every computation runs on an explicit finite [`network::Region`] of a
//! possibly infinite network exposed through a neighbor oracle. Limits over
//! growing regions always come with a convergence certificate.

pub mod error;
pub mod green;
pub mod hmeasure;
pub mod hprocess;
pub mod minimax;
pub mod network;
pub mod potential;
#[cfg(test)]
mod property_tests;
pub mod rng;
pub mod stats;
pub mod ust;
pub mod verify;

pub use error::{Error, Result};
pub use network::{Network, NetworkSpec, Region, VertexId};

/// Configure the global rayon pool from `RECURNET_THREADS`, if set.
///
/// Safe to call more than once; only the first successful call has effect.
pub fn configure_threads() {
    if let Some(n) = std::env::var("RECURNET_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
