//! Numeraire portfolios in constant-coefficient markets: construction, exact
//! simulation of the overall minimum and its time, the enlargement objects
//! built on them, and statistical verification of the associated identities.

pub mod enlarge;
pub mod error;
pub mod functional;
pub mod market;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use market::{
    check_na1, growth_integral, solve_numeraire_strategy, MarketSpec, NumeraireStrategy, ViabilityReport,
};
pub use simulate::{simulate_ensemble, simulate_path, Ensemble, PathBundle, SimConfig, Strategy, SummaryPlan};
pub use verify::{run_suite, TestReport, Verdict, VerifyConfig};
