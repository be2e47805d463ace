//! Arbitrage between an LSD's primary market (stake/unstake at the protocol
//! rate) and a secondary pool.
//!
//! Strategies are registered by name (`stake-swap`, `flash-loan`,
//! `swap-unstake`) and run against a [`World`]; every transaction is atomic.

mod sizing;
mod strategies;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedmath::{Amount, MathError, SignedAmount};
use crate::scenario::world::{TxError, World};

pub use sizing::{marginal_profit, optimal_size, SizeChoice};
pub use strategies::{
    arb_flash_loan, arb_stake_swap, arb_swap_unstake, arb_with_prerequisite, idealized_unstake_revenue, swap_leg,
    unstake_leg, FlashLoanStrategy, PrerequisiteOutcome, StakeSwapStrategy, SwapUnstakeStrategy,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArbError {
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("strategy {strategy} needs {what}")]
    MissingContext { strategy: &'static str, what: &'static str },
}

impl From<MathError> for ArbError {
    fn from(e: MathError) -> Self {
        ArbError::Tx(TxError::Math(e))
    }
}

/// Gas and validator bribe charged once per arbitrage transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxCostModel {
    #[serde(default)]
    pub gas_per_arb: u64,
    #[serde(default, rename = "gas_price_wei")]
    pub gas_price: Amount,
    #[serde(default, rename = "bribe_wei")]
    pub bribe: Amount,
}

impl TxCostModel {
    pub fn cost(&self) -> Result<Amount, MathError> {
        let gas = self.gas_price.as_u256().checked_mul(crate::fixedmath::U256::from(self.gas_per_arb));
        let gas = gas.ok_or(MathError::Overflow)?;
        Amount::from_u256(gas).checked_add(self.bribe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    StakeSwap,
    SwapUnstake,
}

/// Result of one executed arbitrage. `cost` includes any flash-loan fee,
/// so `profit = gross_out - size_in - cost` always.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArbOutcome {
    pub direction: Direction,
    pub size_in: Amount,
    pub gross_out: Amount,
    pub cost: Amount,
    pub flash_fee: Amount,
    pub profit: SignedAmount,
    pub used_flash_loan: bool,
    pub prerequisite_stake: Amount,
    /// Pre-cost revenue at the pre-trade pool price with no slippage or fee.
    pub idealized_revenue: Option<SignedAmount>,
    pub tx_hashes: Vec<String>,
}

impl ArbOutcome {
    pub(crate) fn new(direction: Direction, size_in: Amount, gross_out: Amount, cost: Amount) -> Result<Self, MathError> {
        Ok(ArbOutcome {
            direction,
            size_in,
            gross_out,
            cost,
            flash_fee: Amount::ZERO,
            profit: SignedAmount::diff(gross_out, size_in).sub_amount(cost)?,
            used_flash_loan: false,
            prerequisite_stake: Amount::ZERO,
            idealized_revenue: None,
            tx_hashes: Vec::new(),
        })
    }
}

/// Who trades, and where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArbContext {
    pub sender: String,
    pub protocol: String,
    pub pool: String,
    #[serde(default)]
    pub lender: Option<String>,
    #[serde(default)]
    pub cost: TxCostModel,
}

pub trait ArbStrategy: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn direction(&self) -> Direction;

    /// Executes the arbitrage for `x0` against live state.
    fn execute(&self, world: &mut World, ctx: &ArbContext, x0: Amount) -> Result<ArbOutcome, ArbError>;
}

pub struct StrategyFactory {
    pub name: &'static str,
    pub build: fn() -> Box<dyn ArbStrategy>,
}

static REGISTRY: &[StrategyFactory] = &[
    StrategyFactory {
        name: "stake-swap",
        build: || Box::new(StakeSwapStrategy),
    },
    StrategyFactory {
        name: "flash-loan",
        build: || Box::new(FlashLoanStrategy),
    },
    StrategyFactory {
        name: "swap-unstake",
        build: || Box::new(SwapUnstakeStrategy),
    },
];

pub fn registry() -> &'static [StrategyFactory] {
    REGISTRY
}

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|f| f.name).collect()
}

pub fn build(name: &str) -> Result<Box<dyn ArbStrategy>, ArbError> {
    REGISTRY
        .iter()
        .find(|f| f.name == name)
        .map(|f| (f.build)())
        .ok_or_else(|| ArbError::UnknownStrategy(name.to_string()))
}
