//! Replica moments of the partition function: exact recursions and Monte Carlo estimators.

mod exact;
mod mc;
mod phase;

pub use exact::*;
pub use mc::*;
pub use phase::*;
