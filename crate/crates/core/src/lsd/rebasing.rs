use std::any::Any;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_value, to_value, LsdError, LsdProtocol, Mechanism};
use crate::fixedmath::{div_round, narrow, widen, Amount, Rounding, Wad};

/// Share-based rebasing token (stETH style).
///
/// Holders own shares; a balance is `shares * total_eth / total_shares`.
/// Rewards raise `total_eth`, so every balance grows without a transfer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebasingLsd {
    pub total_eth: Amount,
    pub total_shares: Amount,
    pub shares: BTreeMap<String, Amount>,
    pub protocol_fee: Wad,
    pub paused: bool,
    pub treasury: String,
    /// ETH left behind when the last share is burned with rounding dust.
    pub unowned_eth: Amount,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    protocol_fee: String,
    #[serde(default = "default_treasury")]
    treasury: String,
    #[serde(default)]
    genesis_eth: Option<String>,
    #[serde(default)]
    genesis_shares: Option<String>,
}

fn default_treasury() -> String {
    "treasury".to_string()
}

impl RebasingLsd {
    pub fn new(protocol_fee: Wad, treasury: impl Into<String>) -> Result<Self, LsdError> {
        if protocol_fee >= Wad::ONE {
            return Err(LsdError::InvalidState("protocol fee must be below 1".into()));
        }
        Ok(RebasingLsd {
            total_eth: Amount::ZERO,
            total_shares: Amount::ZERO,
            shares: BTreeMap::new(),
            protocol_fee,
            paused: false,
            treasury: treasury.into(),
            unowned_eth: Amount::ZERO,
        })
    }

    /// Starts from an existing pooled state owned entirely by `holder`.
    pub fn with_state(
        total_eth: Amount,
        total_shares: Amount,
        holder: &str,
        protocol_fee: Wad,
    ) -> Result<Self, LsdError> {
        if total_eth.is_zero() != total_shares.is_zero() {
            return Err(LsdError::InvalidState("eth and shares must bootstrap together".into()));
        }
        let mut s = Self::new(protocol_fee, "treasury")?;
        s.total_eth = total_eth;
        s.total_shares = total_shares;
        if !total_shares.is_zero() {
            s.shares.insert(holder.to_string(), total_shares);
        }
        Ok(s)
    }

    pub(crate) fn from_params(v: &Value) -> Result<Box<dyn LsdProtocol>, LsdError> {
        let p: Params = parse_value(v.clone())?;
        let fee = Wad::parse_decimal(&p.protocol_fee)?;
        let mut lsd = Self::new(fee, p.treasury)?;
        if let Some(e) = p.genesis_eth {
            let e = Amount::parse_eth(&e)?;
            let s = match p.genesis_shares {
                Some(s) => Amount::parse_eth(&s)?,
                None => e,
            };
            let treasury = lsd.treasury.clone();
            lsd = Self::with_state(e, s, "genesis", fee)?;
            lsd.treasury = treasury;
        }
        Ok(Box::new(lsd))
    }

    pub(crate) fn from_snapshot(v: Value) -> Result<Box<dyn LsdProtocol>, LsdError> {
        let s: RebasingLsd = parse_value(v)?;
        s.check_invariants()?;
        Ok(Box::new(s))
    }

    pub fn check_invariants(&self) -> Result<(), LsdError> {
        let mut sum = Amount::ZERO;
        for v in self.shares.values() {
            sum = sum.checked_add(*v)?;
        }
        if sum != self.total_shares {
            return Err(LsdError::InvalidState("share sum differs from total".into()));
        }
        if self.total_eth.is_zero() != self.total_shares.is_zero() {
            return Err(LsdError::InvalidState("eth and shares out of step".into()));
        }
        if self.protocol_fee >= Wad::ONE {
            return Err(LsdError::InvalidState("protocol fee must be below 1".into()));
        }
        Ok(())
    }

    /// ETH per share; 1 before the first stake.
    pub fn share_price(&self) -> Wad {
        if self.total_shares.is_zero() {
            return Wad::ONE;
        }
        Wad::from_ratio(self.total_eth, self.total_shares, Rounding::Down).unwrap_or(Wad::ONE)
    }

    pub fn shares_of(&self, holder: &str) -> Amount {
        self.shares.get(holder).copied().unwrap_or(Amount::ZERO)
    }

    fn value_of_shares(&self, shares: Amount) -> Amount {
        if self.total_shares.is_zero() {
            return Amount::ZERO;
        }
        shares
            .mul_div(self.total_eth, self.total_shares, Rounding::Down)
            .unwrap_or(Amount::ZERO)
    }

    fn credit(&mut self, holder: &str, shares: Amount) -> Result<(), LsdError> {
        if shares.is_zero() {
            return Ok(());
        }
        let e = self.shares.entry(holder.to_string()).or_insert(Amount::ZERO);
        *e = e.checked_add(shares)?;
        Ok(())
    }

    fn debit(&mut self, holder: &str, shares: Amount) -> Result<(), LsdError> {
        let have = self.shares_of(holder);
        let left = have.checked_sub(shares).map_err(|_| LsdError::InsufficientBalance {
            holder: holder.to_string(),
            needed: shares,
            available: have,
        })?;
        if left.is_zero() {
            self.shares.remove(holder);
        } else {
            self.shares.insert(holder.to_string(), left);
        }
        Ok(())
    }

    /// Shares covering `amount` of balance, rounded up so the sender pays
    /// any rounding.
    fn shares_for(&self, amount: Amount) -> Result<Amount, LsdError> {
        Ok(amount.mul_div(self.total_shares, self.total_eth, Rounding::Up)?)
    }

    fn require_balance(&self, holder: &str, amount: Amount) -> Result<(), LsdError> {
        let bal = self.balance_of(holder);
        if bal < amount {
            return Err(LsdError::InsufficientBalance {
                holder: holder.to_string(),
                needed: amount,
                available: bal,
            });
        }
        Ok(())
    }

    /// Mints shares for `m` ETH at the current share price.
    pub fn rebasing_stake(&mut self, holder: &str, m: Amount) -> Result<Amount, LsdError> {
        self.check_stake(m)?;
        let minted_shares = if self.total_shares.is_zero() {
            m
        } else {
            m.mul_div(self.total_shares, self.total_eth, Rounding::Down)?
        };
        if minted_shares.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        self.total_eth = self.total_eth.checked_add(m)?;
        self.total_shares = self.total_shares.checked_add(minted_shares)?;
        self.credit(holder, minted_shares)?;
        Ok(self.value_of_shares(minted_shares))
    }

    /// Applies a positive rebase.
    ///
    /// The fee is taken by minting shares to the treasury such that their
    /// value at the new share price equals `rewards * protocol_fee`:
    /// `shares2mint = rewards·fee·totalShares / (totalEthWithRewards − rewards·fee)`.
    /// The numerator is formed in full before the single rounding-down division.
    pub fn rebasing_rebase(&mut self, rewards: Amount) -> Result<Wad, LsdError> {
        if self.total_shares.is_zero() {
            return Err(LsdError::NotBootstrapped);
        }
        let with_rewards = self.total_eth.checked_add(rewards)?;
        // Both sides scaled by 1e18 so the fee product is never rounded early.
        let fee_num = widen(rewards.as_u256()) * widen(self.protocol_fee.as_u256());
        let num = fee_num * widen(self.total_shares.as_u256());
        let den = widen(with_rewards.as_u256()) * widen(Wad::ONE.as_u256()) - fee_num;
        let shares2mint = Amount::from_u256(narrow(div_round(num, den, Rounding::Down)?)?);
        self.total_eth = with_rewards;
        self.total_shares = self.total_shares.checked_add(shares2mint)?;
        let treasury = self.treasury.clone();
        self.credit(&treasury, shares2mint)?;
        Ok(self.share_price())
    }

    /// Negative rebase: pooled ETH shrinks, no shares are minted.
    pub fn rebasing_slash(&mut self, loss: Amount) -> Result<Wad, LsdError> {
        if self.total_shares.is_zero() {
            return Err(LsdError::NotBootstrapped);
        }
        if loss >= self.total_eth {
            return Err(LsdError::LossExceedsPooledEth {
                loss,
                pooled: self.total_eth,
            });
        }
        self.total_eth = self.total_eth.checked_sub(loss)?;
        Ok(self.share_price())
    }

    /// Redeems at the fixed primary rate of 1.
    pub fn rebasing_unstake(&mut self, holder: &str, amount: Amount, shapella_enabled: bool) -> Result<Amount, LsdError> {
        if !shapella_enabled {
            return Err(LsdError::WithdrawalsDisabled);
        }
        if amount.is_zero() {
            return Ok(Amount::ZERO);
        }
        self.require_balance(holder, amount)?;
        let burn = self.shares_for(amount)?.min(self.shares_of(holder));
        self.debit(holder, burn)?;
        self.total_shares = self.total_shares.checked_sub(burn)?;
        self.total_eth = self.total_eth.checked_sub(amount)?;
        if self.total_shares.is_zero() {
            self.unowned_eth = self.unowned_eth.checked_add(self.total_eth)?;
            self.total_eth = Amount::ZERO;
        }
        Ok(amount)
    }
}

impl LsdProtocol for RebasingLsd {
    fn kind(&self) -> &'static str {
        "rebasing"
    }

    fn mechanism(&self) -> Mechanism {
        Mechanism::Rebasing
    }

    fn primary_rate(&self) -> Wad {
        Wad::ONE
    }

    fn accounting_rate(&self) -> Wad {
        self.share_price()
    }

    fn stake(&mut self, holder: &str, eth: Amount) -> Result<Amount, LsdError> {
        self.rebasing_stake(holder, eth)
    }

    fn check_stake(&self, eth: Amount) -> Result<(), LsdError> {
        if eth.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        if self.paused {
            return Err(LsdError::Paused);
        }
        Ok(())
    }

    fn redeem(&mut self, holder: &str, lsd: Amount, shapella_enabled: bool) -> Result<Amount, LsdError> {
        self.rebasing_unstake(holder, lsd, shapella_enabled)
    }

    fn balance_of(&self, holder: &str) -> Amount {
        self.value_of_shares(self.shares_of(holder))
    }

    fn transfer(&mut self, from: &str, to: &str, amount: Amount) -> Result<(), LsdError> {
        if amount.is_zero() || from == to {
            return Ok(());
        }
        self.require_balance(from, amount)?;
        let moved = self.shares_for(amount)?.min(self.shares_of(from));
        self.debit(from, moved)?;
        self.credit(to, moved)
    }

    fn distribute_rewards(&mut self, rewards: Amount) -> Result<Wad, LsdError> {
        self.rebasing_rebase(rewards)
    }

    fn slash(&mut self, loss: Amount) -> Result<Wad, LsdError> {
        self.rebasing_slash(loss)
    }

    fn eth_held(&self) -> Amount {
        self.total_eth.checked_add(self.unowned_eth).unwrap_or(self.total_eth)
    }

    fn lsd_supply(&self) -> Amount {
        self.total_eth
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
