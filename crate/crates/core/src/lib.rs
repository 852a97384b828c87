pub mod env;
pub mod error;
pub mod lattice;
pub mod localization;
pub mod martingale;
pub mod moments;
pub mod oracle;
pub mod rng;
pub mod sites;
pub mod stats;
pub mod testfn;

pub use env::{DisorderLaw, Environment, EnvironmentBox, SeededEnvironment};
pub use error::{Error, Result};
pub use lattice::{FieldSlice, PolymerConfig};
pub use localization::{LocalizationTable, OverlapTrace, StochasticIntegralTrace};
pub use martingale::MartingaleTrace;
pub use moments::{MomentCurve, PhasePoint};
pub use sites::{GridSpec, SiteReport};
pub use stats::Estimate;
pub use testfn::TestFunction;
