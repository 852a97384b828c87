//! Shared fixtures for the benchmarks.

use polymer_core::env::{DisorderLaw, SeededEnvironment};
use polymer_core::lattice::PolymerConfig;

pub fn reference_law() -> DisorderLaw {
    DisorderLaw::TwoPoint { p: 0.1, lo: -1.0, hi: 1.0 }
}

/// A point-started configuration with the exact box and a seeded environment.
pub fn fixture(d: usize, n: i64, beta: f64) -> (PolymerConfig, SeededEnvironment) {
    let law = reference_law();
    (PolymerConfig::new(d, n, beta, law), SeededEnvironment::new(17, law))
}
