//! Stochastic supply-chain optimization for chip firms.
//!
//! The crate models a firm that orders produced goods (dies, chiplets) from
//! foundries, turns what it obtains into demanded goods through a set of
//! mappings (identity, composition, adaptation), and sells them into an
//! uncertain market. Order quantities are chosen before supply and demand are
//! known; mapping usage is a recourse decision taken after supply is known,
//! or after both supply and demand are known.
//!
//! The core is `no_std` (it needs `alloc`). Enable the `parallel` feature to
//! evaluate scenarios on a rayon thread pool; results do not depend on the
//! number of threads.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod chipcost;
pub mod closed_form;
pub mod engine;
pub mod lp;
pub mod market;
pub mod math;
pub mod order;
pub mod recourse;
pub mod uncertainty;

pub use engine::{
    evaluate_scenario, expected_profit, report, BaselineRef, DecisionPolicy, Lambda, Model,
    Prepared, ProfitBreakdown, ProfitReport,
};
pub use market::{
    DemandCurve, DemandedGood, Mapping, MarketSpec, OrderConstraint, ProducedGood, RecourseStage,
};
pub use order::{constrained_rerun, optimize, OptimizationResult, OptimizerConfig, SearchMethod};
pub use uncertainty::{sample, Distribution, ScenarioSet, Strategy, UncertaintyConfig};

/// Relative tolerance used when checking `used <= obtained` on a policy.
pub const USAGE_TOLERANCE: f64 = 1e-6;

/// Order quantities at or below this are treated as "not ordered".
pub const ORDER_EPSILON: f64 = 1e-9;
