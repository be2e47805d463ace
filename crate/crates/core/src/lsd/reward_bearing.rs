use std::any::Any;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_value, to_value, LsdError, LsdProtocol, Mechanism};
use crate::fixedmath::{Amount, Rounding, Wad};

/// Queue of user deposits waiting for node operators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepositPool {
    pub balance: Amount,
    pub max_capacity: Amount,
}

impl DepositPool {
    pub fn new(max_capacity: Amount) -> Self {
        DepositPool {
            balance: Amount::ZERO,
            max_capacity,
        }
    }

    pub fn room(&self) -> Amount {
        self.max_capacity.saturating_sub(self.balance)
    }

    pub fn deposit(&mut self, amount: Amount) -> Result<(), LsdError> {
        let next = self.balance.checked_add(amount)?;
        if next > self.max_capacity {
            return Err(LsdError::DepositPoolFull {
                balance: self.balance,
                amount,
                capacity: self.max_capacity,
            });
        }
        self.balance = next;
        Ok(())
    }

    /// Node operators absorb `amount` of queued ETH.
    pub fn assign(&mut self, amount: Amount) -> Result<(), LsdError> {
        self.balance = self.balance.checked_sub(amount).map_err(|_| LsdError::AssignExceedsBalance {
            amount,
            balance: self.balance,
        })?;
        Ok(())
    }
}

/// Exchange-rate token (rETH style): balances are fixed and the ETH value of
/// one unit grows with rewards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardBearingLsd {
    pub total_eth_staked: Amount,
    pub staking_reward_in_eth: Amount,
    pub total_supply: Amount,
    pub balances: BTreeMap<String, Amount>,
    pub deposit_pool: DepositPool,
    /// Liquid ETH outside the deposit pool available to pay burns.
    pub collateral: Amount,
    pub paused: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    deposit_pool_capacity: String,
    #[serde(default)]
    genesis_staked: Option<String>,
    #[serde(default)]
    genesis_reward: Option<String>,
    #[serde(default)]
    genesis_supply: Option<String>,
    #[serde(default)]
    collateral: Option<String>,
}

fn opt_eth(s: &Option<String>) -> Result<Amount, LsdError> {
    match s {
        Some(s) => Ok(Amount::parse_eth(s)?),
        None => Ok(Amount::ZERO),
    }
}

impl RewardBearingLsd {
    pub fn new(max_capacity: Amount) -> Self {
        RewardBearingLsd {
            total_eth_staked: Amount::ZERO,
            staking_reward_in_eth: Amount::ZERO,
            total_supply: Amount::ZERO,
            balances: BTreeMap::new(),
            deposit_pool: DepositPool::new(max_capacity),
            collateral: Amount::ZERO,
            paused: false,
        }
    }

    /// Existing state whose whole supply belongs to `holder`.
    pub fn with_state(
        staked: Amount,
        reward: Amount,
        supply: Amount,
        holder: &str,
        max_capacity: Amount,
    ) -> Result<Self, LsdError> {
        if supply.is_zero() && !(staked.is_zero() && reward.is_zero()) {
            return Err(LsdError::InvalidState("backing without supply".into()));
        }
        let mut s = Self::new(max_capacity);
        s.total_eth_staked = staked;
        s.staking_reward_in_eth = reward;
        s.total_supply = supply;
        if !supply.is_zero() {
            s.balances.insert(holder.to_string(), supply);
        }
        Ok(s)
    }

    pub(crate) fn from_params(v: &Value) -> Result<Box<dyn LsdProtocol>, LsdError> {
        let p: Params = parse_value(v.clone())?;
        let cap = Amount::parse_eth(&p.deposit_pool_capacity)?;
        let staked = opt_eth(&p.genesis_staked)?;
        let supply = match &p.genesis_supply {
            Some(_) => opt_eth(&p.genesis_supply)?,
            None => staked,
        };
        let mut s = Self::with_state(staked, opt_eth(&p.genesis_reward)?, supply, "genesis", cap)?;
        s.collateral = opt_eth(&p.collateral)?;
        s.check_invariants()?;
        Ok(Box::new(s))
    }

    pub(crate) fn from_snapshot(v: Value) -> Result<Box<dyn LsdProtocol>, LsdError> {
        let s: RewardBearingLsd = parse_value(v)?;
        s.check_invariants()?;
        Ok(Box::new(s))
    }

    pub fn check_invariants(&self) -> Result<(), LsdError> {
        let mut sum = Amount::ZERO;
        for v in self.balances.values() {
            sum = sum.checked_add(*v)?;
        }
        if sum != self.total_supply {
            return Err(LsdError::InvalidState("balance sum differs from supply".into()));
        }
        if self.deposit_pool.balance > self.deposit_pool.max_capacity {
            return Err(LsdError::InvalidState("deposit pool over capacity".into()));
        }
        if self.liquidity()? > self.total_eth()? {
            return Err(LsdError::InvalidState("liquid ETH exceeds backing".into()));
        }
        Ok(())
    }

    fn total_eth(&self) -> Result<Amount, LsdError> {
        Ok(self.total_eth_staked.checked_add(self.staking_reward_in_eth)?)
    }

    /// ETH that can be paid out right now.
    pub fn liquidity(&self) -> Result<Amount, LsdError> {
        Ok(self.collateral.checked_add(self.deposit_pool.balance)?)
    }

    /// `(staked + reward) / supply`, rounded down; 1 before any mint.
    pub fn exchange_rate(&self) -> Wad {
        if self.total_supply.is_zero() {
            return Wad::ONE;
        }
        match self.total_eth() {
            Ok(t) => Wad::from_ratio(t, self.total_supply, Rounding::Down).unwrap_or(Wad::ONE),
            Err(_) => Wad::ONE,
        }
    }

    fn mint_for(&self, m: Amount) -> Result<Amount, LsdError> {
        if self.total_supply.is_zero() {
            return Ok(m);
        }
        Ok(m.mul_div(self.total_supply, self.total_eth()?, Rounding::Down)?)
    }

    fn credit(&mut self, holder: &str, amount: Amount) -> Result<(), LsdError> {
        if amount.is_zero() {
            return Ok(());
        }
        let e = self.balances.entry(holder.to_string()).or_insert(Amount::ZERO);
        *e = e.checked_add(amount)?;
        Ok(())
    }

    fn debit(&mut self, holder: &str, amount: Amount) -> Result<(), LsdError> {
        let have = self.balance_of(holder);
        let left = have.checked_sub(amount).map_err(|_| LsdError::InsufficientBalance {
            holder: holder.to_string(),
            needed: amount,
            available: have,
        })?;
        if left.is_zero() {
            self.balances.remove(holder);
        } else {
            self.balances.insert(holder.to_string(), left);
        }
        Ok(())
    }

    pub fn rb_stake(&mut self, holder: &str, m: Amount) -> Result<Amount, LsdError> {
        self.check_stake(m)?;
        let minted = self.mint_for(m)?;
        if minted.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        self.deposit_pool.deposit(m)?;
        self.total_eth_staked = self.total_eth_staked.checked_add(m)?;
        self.total_supply = self.total_supply.checked_add(minted)?;
        self.credit(holder, minted)?;
        Ok(minted)
    }

    pub fn rb_accrue(&mut self, reward: Amount) -> Result<Wad, LsdError> {
        self.staking_reward_in_eth = self.staking_reward_in_eth.checked_add(reward)?;
        self.collateral = self.collateral.checked_add(reward)?;
        Ok(self.exchange_rate())
    }

    /// Pays `lsd · (staked + reward) / supply` ETH, rounded down, and shrinks
    /// staked and reward in proportion to their share of the backing.
    pub fn rb_burn(&mut self, holder: &str, lsd: Amount) -> Result<Amount, LsdError> {
        if lsd.is_zero() {
            return Ok(Amount::ZERO);
        }
        let have = self.balance_of(holder);
        if have < lsd {
            return Err(LsdError::InsufficientBalance {
                holder: holder.to_string(),
                needed: lsd,
                available: have,
            });
        }
        let total = self.total_eth()?;
        let payout = lsd.mul_div(total, self.total_supply, Rounding::Down)?;
        let liquid = self.liquidity()?;
        if payout > liquid {
            return Err(LsdError::InsufficientProtocolLiquidity {
                needed: payout,
                available: liquid,
            });
        }
        let from_reward = if total.is_zero() {
            Amount::ZERO
        } else {
            payout.mul_div(self.staking_reward_in_eth, total, Rounding::Down)?
        };
        let from_staked = payout.checked_sub(from_reward)?;
        self.staking_reward_in_eth = self.staking_reward_in_eth.checked_sub(from_reward)?;
        self.total_eth_staked = self.total_eth_staked.checked_sub(from_staked)?;
        self.debit(holder, lsd)?;
        self.total_supply = self.total_supply.checked_sub(lsd)?;
        let from_collateral = payout.min(self.collateral);
        self.collateral = self.collateral.checked_sub(from_collateral)?;
        self.deposit_pool.balance = self.deposit_pool.balance.checked_sub(payout.checked_sub(from_collateral)?)?;
        Ok(payout)
    }

    pub fn deposit_pool_assign(&mut self, amount: Amount) -> Result<(), LsdError> {
        self.deposit_pool.assign(amount)
    }
}

impl LsdProtocol for RewardBearingLsd {
    fn kind(&self) -> &'static str {
        "reward-bearing"
    }

    fn mechanism(&self) -> Mechanism {
        Mechanism::RewardBearing
    }

    fn primary_rate(&self) -> Wad {
        self.exchange_rate()
    }

    fn accounting_rate(&self) -> Wad {
        self.exchange_rate()
    }

    fn stake(&mut self, holder: &str, eth: Amount) -> Result<Amount, LsdError> {
        self.rb_stake(holder, eth)
    }

    fn check_stake(&self, eth: Amount) -> Result<(), LsdError> {
        if eth.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        if self.paused {
            return Err(LsdError::Paused);
        }
        if self.deposit_pool.balance.checked_add(eth)? > self.deposit_pool.max_capacity {
            return Err(LsdError::DepositPoolFull {
                balance: self.deposit_pool.balance,
                amount: eth,
                capacity: self.deposit_pool.max_capacity,
            });
        }
        Ok(())
    }

    fn redeem(&mut self, holder: &str, lsd: Amount, _shapella_enabled: bool) -> Result<Amount, LsdError> {
        self.rb_burn(holder, lsd)
    }

    fn balance_of(&self, holder: &str) -> Amount {
        self.balances.get(holder).copied().unwrap_or(Amount::ZERO)
    }

    fn transfer(&mut self, from: &str, to: &str, amount: Amount) -> Result<(), LsdError> {
        if amount.is_zero() || from == to {
            return Ok(());
        }
        self.debit(from, amount)?;
        self.credit(to, amount)
    }

    fn distribute_rewards(&mut self, rewards: Amount) -> Result<Wad, LsdError> {
        self.rb_accrue(rewards)
    }

    /// Node-operator deposit of `eth`: minted at the current rate, sent
    /// straight to a validator, and matched by assigning the same amount of
    /// queued user ETH.
    fn prerequisite_stake(&mut self, holder: &str, eth: Amount) -> Result<Amount, LsdError> {
        if eth.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        if self.paused {
            return Err(LsdError::Paused);
        }
        if eth > self.deposit_pool.balance {
            return Err(LsdError::AssignExceedsBalance {
                amount: eth,
                balance: self.deposit_pool.balance,
            });
        }
        let minted = self.mint_for(eth)?;
        self.deposit_pool.assign(eth)?;
        self.total_eth_staked = self.total_eth_staked.checked_add(eth)?;
        self.total_supply = self.total_supply.checked_add(minted)?;
        self.credit(holder, minted)?;
        Ok(minted)
    }

    fn eth_held(&self) -> Amount {
        self.total_eth().unwrap_or(self.total_eth_staked)
    }

    fn lsd_supply(&self) -> Amount {
        self.total_supply
    }

    fn snapshot(&self) -> Value {
        to_value(self)
    }

    fn clone_box(&self) -> Box<dyn LsdProtocol> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
