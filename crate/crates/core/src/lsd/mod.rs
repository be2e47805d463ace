//! Primary-market state machines for liquid staking tokens.
//!
//! Tradeable mechanisms implement [`LsdProtocol`] and are looked up by kind
//! name through [`build`] and [`restore`], so a scenario can pick one from
//! configuration. The dual-token model is mint/accrue only and lives outside
//! the registry.

mod dual;
mod rebasing;
mod reward_bearing;

use std::any::Any;
use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::fixedmath::{Amount, MathError, Wad};

pub use dual::DualTokenLsd;
pub use rebasing::RebasingLsd;
pub use reward_bearing::{DepositPool, RewardBearingLsd};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LsdError {
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("protocol is paused")]
    Paused,
    #[error("protocol has no stake yet")]
    NotBootstrapped,
    #[error("withdrawals are disabled before the Shapella upgrade")]
    WithdrawalsDisabled,
    #[error("{holder} holds {available} but {needed} is required")]
    InsufficientBalance {
        holder: String,
        needed: Amount,
        available: Amount,
    },
    #[error("protocol cannot pay {needed} (liquid {available})")]
    InsufficientProtocolLiquidity { needed: Amount, available: Amount },
    #[error("deposit pool full: balance {balance} + {amount} exceeds capacity {capacity}")]
    DepositPoolFull {
        balance: Amount,
        amount: Amount,
        capacity: Amount,
    },
    #[error("cannot assign {amount} from a deposit pool holding {balance}")]
    AssignExceedsBalance { amount: Amount, balance: Amount },
    #[error("loss {loss} exceeds pooled ETH {pooled}")]
    LossExceedsPooledEth { loss: Amount, pooled: Amount },
    #[error("{0} is not supported by this mechanism")]
    Unsupported(&'static str),
    #[error("unknown protocol kind {0:?}")]
    UnknownKind(String),
    #[error("invalid protocol state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

pub type AccountId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    Rebasing,
    RewardBearing,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Rebasing => "rebasing",
            Mechanism::RewardBearing => "reward-bearing",
        }
    }

    pub fn parse(s: &str) -> Option<Mechanism> {
        match s {
            "rebasing" => Some(Mechanism::Rebasing),
            "reward-bearing" => Some(Mechanism::RewardBearing),
            _ => None,
        }
    }
}

/// A staking protocol issuing a tradeable LSD against ETH.
pub trait LsdProtocol: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    fn mechanism(&self) -> Mechanism;

    /// ETH paid or received per LSD unit in the primary market.
    fn primary_rate(&self) -> Wad;

    /// The quantity the hold-strategy analysis tracks over time: the share
    /// price for rebasing tokens, the exchange rate for reward-bearing ones.
    fn accounting_rate(&self) -> Wad;

    /// Stakes `eth` for `holder`; returns the LSD balance credited.
    fn stake(&mut self, holder: &str, eth: Amount) -> Result<Amount, LsdError>;

    /// Fails exactly when [`LsdProtocol::stake`] would fail for capacity or
    /// pause reasons, without touching state.
    fn check_stake(&self, eth: Amount) -> Result<(), LsdError>;

    /// Redeems `lsd` in the primary market; returns ETH paid out.
    fn redeem(&mut self, holder: &str, lsd: Amount, shapella_enabled: bool) -> Result<Amount, LsdError>;

    fn balance_of(&self, holder: &str) -> Amount;

    fn transfer(&mut self, from: &str, to: &str, amount: Amount) -> Result<(), LsdError>;

    /// Injects consensus-layer rewards; returns the new accounting rate.
    fn distribute_rewards(&mut self, rewards: Amount) -> Result<Wad, LsdError>;

    /// Removes ETH from the backing (negative rebase).
    fn slash(&mut self, _loss: Amount) -> Result<Wad, LsdError> {
        Err(LsdError::Unsupported("slash"))
    }

    /// Node-operator style deposit that bypasses the deposit pool and
    /// assigns the same amount of queued user ETH.
    fn prerequisite_stake(&mut self, _holder: &str, _eth: Amount) -> Result<Amount, LsdError> {
        Err(LsdError::Unsupported("prerequisite stake"))
    }

    /// All ETH the protocol accounts for.
    fn eth_held(&self) -> Amount;

    /// Total LSD in circulation (balance units).
    fn lsd_supply(&self) -> Amount;

    fn snapshot(&self) -> Value;

    fn clone_box(&self) -> Box<dyn LsdProtocol>;

    fn as_any(&self) -> &dyn Any;

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl Clone for Box<dyn LsdProtocol> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

type BuildFn = fn(&Value) -> Result<Box<dyn LsdProtocol>, LsdError>;
type RestoreFn = fn(Value) -> Result<Box<dyn LsdProtocol>, LsdError>;

pub struct ProtocolFactory {
    pub kind: &'static str,
    pub build: BuildFn,
    pub restore: RestoreFn,
}

static REGISTRY: &[ProtocolFactory] = &[
    ProtocolFactory {
        kind: "rebasing",
        build: RebasingLsd::from_params,
        restore: RebasingLsd::from_snapshot,
    },
    ProtocolFactory {
        kind: "reward-bearing",
        build: RewardBearingLsd::from_params,
        restore: RewardBearingLsd::from_snapshot,
    },
];

pub fn registry() -> &'static [ProtocolFactory] {
    REGISTRY
}

pub fn kinds() -> Vec<&'static str> {
    REGISTRY.iter().map(|f| f.kind).collect()
}

fn factory(kind: &str) -> Result<&'static ProtocolFactory, LsdError> {
    REGISTRY
        .iter()
        .find(|f| f.kind == kind)
        .ok_or_else(|| LsdError::UnknownKind(kind.to_string()))
}

/// Builds a fresh protocol of the named kind from its parameter object.
pub fn build(kind: &str, params: &Value) -> Result<Box<dyn LsdProtocol>, LsdError> {
    (factory(kind)?.build)(params)
}

/// Rebuilds a protocol from [`LsdProtocol::snapshot`] output.
pub fn restore(kind: &str, state: Value) -> Result<Box<dyn LsdProtocol>, LsdError> {
    (factory(kind)?.restore)(state)
}

pub(crate) fn parse_value<T: DeserializeOwned>(v: Value) -> Result<T, LsdError> {
    serde_path_to_error::deserialize(v).map_err(|e| LsdError::InvalidState(format!("{}: {}", e.path(), e.inner())))
}

pub(crate) fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("protocol state serializes")
}
