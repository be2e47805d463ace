//! Secondary-market pools trading an LSD (token 0) against ETH (token 1).
//!
//! Every pool kind implements [`Pool`] and is registered by name; scenario
//! files select a kind with `"kind": "stableswap"` and friends.

mod concentrated;
mod stableswap;
mod weighted;

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::fixedmath::{Amount, MathError, Rounding, Wad};

pub use concentrated::{sqrt_price_of, ConcentratedPool, Position, SQRT_ONE};
pub use stableswap::{get_d, get_y, StableswapPool, MAX_ITERATIONS};
pub use weighted::WeightedPool;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmmError {
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("pool has no liquidity")]
    NotBootstrapped,
    #[error("solver did not converge within {0} iterations")]
    NoConvergence(u32),
    #[error("pool cannot pay {needed} (reserve {reserve})")]
    InsufficientLiquidity { needed: Amount, reserve: Amount },
    #[error("swap would move the price outside the liquidity range")]
    PriceOutOfRange,
    #[error("deposit yields zero liquidity")]
    ZeroLiquidity,
    #[error("position of {0} has nothing to collect")]
    NothingToCollect(String),
    #[error("{owner} holds {available} LP units but {needed} is required")]
    InsufficientBalance {
        owner: String,
        needed: Amount,
        available: Amount,
    },
    #[error("{0} is not supported by this pool")]
    Unsupported(&'static str),
    #[error("unknown pool kind {0:?}")]
    UnknownKind(String),
    #[error("invalid pool parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Token {
    Lsd,
    Eth,
}

impl Token {
    pub fn index(self) -> usize {
        match self {
            Token::Lsd => 0,
            Token::Eth => 1,
        }
    }

    pub fn other(self) -> Token {
        match self {
            Token::Lsd => Token::Eth,
            Token::Eth => Token::Lsd,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Token::Lsd => "LSD",
            Token::Eth => "ETH",
        }
    }
}

/// Result of a deposit: LP units minted and the token amounts actually taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deposit {
    pub minted: Amount,
    pub used: [Amount; 2],
}

pub trait Pool: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    fn fee_bps(&self) -> u32;

    /// Token balances the pool owns, LSD first; excludes uncollected fees
    /// only where the pool keeps them apart.
    fn reserves(&self) -> [Amount; 2];

    /// Every unit of each token held, fees included.
    fn holdings(&self) -> [Amount; 2] {
        self.reserves()
    }

    fn swap(&mut self, token_in: Token, amount_in: Amount) -> Result<Amount, AmmError>;

    /// Marginal ETH price of one LSD, fee excluded.
    fn spot_price(&self) -> Result<Wad, AmmError>;

    fn add_liquidity(&mut self, owner: &str, amounts: [Amount; 2]) -> Result<Deposit, AmmError>;

    /// Burns `units` of the owner's LP claim; returns tokens paid out.
    fn remove_liquidity(&mut self, owner: &str, units: Amount) -> Result<[Amount; 2], AmmError>;

    fn lp_balance(&self, owner: &str) -> Amount;

    fn lp_supply(&self) -> Amount;

    /// Replaces the LSD reserve with the pool's current token balance after
    /// a rebase.
    fn sync_lsd_reserve(&mut self, _balance: Amount) -> Result<(), AmmError> {
        Err(AmmError::Unsupported("rebasing reserves"))
    }

    fn snapshot(&self) -> Value;

    fn clone_box(&self) -> Box<dyn Pool>;

    fn as_any(&self) -> &dyn Any;
}

impl Clone for Box<dyn Pool> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

type BuildFn = fn(&Value) -> Result<Box<dyn Pool>, AmmError>;
type RestoreFn = fn(Value) -> Result<Box<dyn Pool>, AmmError>;

pub struct PoolFactory {
    pub kind: &'static str,
    pub build: BuildFn,
    pub restore: RestoreFn,
}

static REGISTRY: &[PoolFactory] = &[
    PoolFactory {
        kind: "stableswap",
        build: StableswapPool::from_params,
        restore: StableswapPool::from_snapshot,
    },
    PoolFactory {
        kind: "concentrated",
        build: ConcentratedPool::from_params,
        restore: ConcentratedPool::from_snapshot,
    },
    PoolFactory {
        kind: "weighted",
        build: WeightedPool::from_params,
        restore: WeightedPool::from_snapshot,
    },
];

pub fn registry() -> &'static [PoolFactory] {
    REGISTRY
}

pub fn kinds() -> Vec<&'static str> {
    REGISTRY.iter().map(|f| f.kind).collect()
}

fn factory(kind: &str) -> Result<&'static PoolFactory, AmmError> {
    REGISTRY
        .iter()
        .find(|f| f.kind == kind)
        .ok_or_else(|| AmmError::UnknownKind(kind.to_string()))
}

/// Builds an empty pool of the named kind.
pub fn build(kind: &str, params: &Value) -> Result<Box<dyn Pool>, AmmError> {
    (factory(kind)?.build)(params)
}

pub fn restore(kind: &str, state: Value) -> Result<Box<dyn Pool>, AmmError> {
    (factory(kind)?.restore)(state)
}

pub(crate) fn parse_value<T: DeserializeOwned>(v: Value) -> Result<T, AmmError> {
    serde_path_to_error::deserialize(v).map_err(|e| AmmError::InvalidParams(format!("{}: {}", e.path(), e.inner())))
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("pool state serializes")
}

pub(crate) fn check_fee(fee_bps: u32) -> Result<(), AmmError> {
    if fee_bps >= 10_000 {
        return Err(AmmError::InvalidParams(format!("fee_bps {fee_bps} must be below 10000")));
    }
    Ok(())
}

/// Splits `amount_in` into (fee, remainder); the fee rounds up.
pub(crate) fn take_fee(amount_in: Amount, fee_bps: u32) -> Result<(Amount, Amount), AmmError> {
    let fee = amount_in.mul_div(Amount::from_wei(fee_bps as u128), Amount::from_wei(10_000), Rounding::Up)?;
    Ok((fee, amount_in.checked_sub(fee)?))
}

/// LP-token bookkeeping shared by the fungible-share pools.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpLedger {
    pub supply: Amount,
    pub balances: BTreeMap<String, Amount>,
}

impl LpLedger {
    pub fn balance(&self, owner: &str) -> Amount {
        self.balances.get(owner).copied().unwrap_or(Amount::ZERO)
    }

    pub fn mint(&mut self, owner: &str, amount: Amount) -> Result<(), AmmError> {
        self.supply = self.supply.checked_add(amount)?;
        let e = self.balances.entry(owner.to_string()).or_insert(Amount::ZERO);
        *e = e.checked_add(amount)?;
        Ok(())
    }

    pub fn burn(&mut self, owner: &str, amount: Amount) -> Result<(), AmmError> {
        let have = self.balance(owner);
        if amount.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        if have < amount {
            return Err(AmmError::InsufficientBalance {
                owner: owner.to_string(),
                needed: amount,
                available: have,
            });
        }
        let left = have.checked_sub(amount)?;
        if left.is_zero() {
            self.balances.remove(owner);
        } else {
            self.balances.insert(owner.to_string(), left);
        }
        self.supply = self.supply.checked_sub(amount)?;
        Ok(())
    }

    pub fn check(&self) -> Result<(), AmmError> {
        let mut sum = Amount::ZERO;
        for v in self.balances.values() {
            sum = sum.checked_add(*v)?;
        }
        if sum != self.supply {
            return Err(AmmError::InvalidParams("LP balances do not sum to supply".into()));
        }
        Ok(())
    }
}

/// Pro-rata share of each reserve for `units` of `supply`, rounded down.
pub(crate) fn pro_rata(reserves: [Amount; 2], units: Amount, supply: Amount) -> Result<[Amount; 2], AmmError> {
    Ok([
        reserves[0].mul_div(units, supply, Rounding::Down)?,
        reserves[1].mul_div(units, supply, Rounding::Down)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn registry_builds_each_kind() {
        assert_eq!(kinds(), vec!["stableswap", "concentrated", "weighted"]);
        build("stableswap", &json!({"amp": 100, "fee_bps": 4})).unwrap();
        build(
            "concentrated",
            &json!({"fee_bps": 30, "price": "1", "price_lower": "0.5", "price_upper": "2"}),
        )
        .unwrap();
        build("weighted", &json!({"fee_bps": 4})).unwrap();
        assert_eq!(build("orderbook", &json!({})).unwrap_err(), AmmError::UnknownKind("orderbook".into()));
    }

    #[test]
    fn bad_params_name_the_field() {
        let err = build("stableswap", &json!({"amp": "lots", "fee_bps": 4})).unwrap_err();
        assert!(err.to_string().contains("amp"), "{err}");
        assert!(build("weighted", &json!({"fee_bps": 10_000})).is_err());
    }

    #[test]
    fn fee_split_rounds_against_the_trader() {
        let (fee, rest) = take_fee(Amount::from_wei(10_001), 4).unwrap();
        assert_eq!(fee, Amount::from_wei(5));
        assert_eq!(rest, Amount::from_wei(9_996));
    }
}
