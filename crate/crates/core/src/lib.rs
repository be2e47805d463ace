//! Deterministic simulator for liquid staking derivative markets.

pub mod amm;
pub mod analytics;
pub mod arbitrage;
pub mod fixedmath;
pub mod lsd;
pub mod scenario;
