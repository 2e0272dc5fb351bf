//! Customer value management analytics: value trees, survey samples,
//! hierarchical least squares, profile tables, loyalty curves, value maps,
//! Net-Promoter Score and seeded synthetic markets.

pub mod cli;
pub mod cvm_analytics;
pub mod isotonic;
pub mod ls_engine;
pub mod market_sim;
pub mod nps_metrics;
pub mod report;
pub mod rounding;
pub mod survey_store;
pub mod value_tree;
