use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LsdError;
use crate::fixedmath::{Amount, Rounding, Wad};

/// Base token minted 1:1 against ETH plus a vault that holds base tokens and
/// issues appreciating shares (frxETH / sfrxETH style).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualTokenLsd {
    pub base_supply: Amount,
    pub vault_shares: Amount,
    pub vault_assets: Amount,
    pub base_balances: BTreeMap<String, Amount>,
    pub share_balances: BTreeMap<String, Amount>,
}

fn add(map: &mut BTreeMap<String, Amount>, who: &str, amount: Amount) -> Result<(), LsdError> {
    let e = map.entry(who.to_string()).or_insert(Amount::ZERO);
    *e = e.checked_add(amount)?;
    Ok(())
}

fn sub(map: &mut BTreeMap<String, Amount>, who: &str, amount: Amount) -> Result<(), LsdError> {
    let have = map.get(who).copied().unwrap_or(Amount::ZERO);
    let left = have.checked_sub(amount).map_err(|_| LsdError::InsufficientBalance {
        holder: who.to_string(),
        needed: amount,
        available: have,
    })?;
    if left.is_zero() {
        map.remove(who);
    } else {
        map.insert(who.to_string(), left);
    }
    Ok(())
}

impl DualTokenLsd {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn base_of(&self, who: &str) -> Amount {
        self.base_balances.get(who).copied().unwrap_or(Amount::ZERO)
    }

    pub fn shares_of(&self, who: &str) -> Amount {
        self.share_balances.get(who).copied().unwrap_or(Amount::ZERO)
    }

    /// Base tokens per vault share; 1 while the vault is empty.
    pub fn share_price(&self) -> Wad {
        if self.vault_shares.is_zero() {
            return Wad::ONE;
        }
        Wad::from_ratio(self.vault_assets, self.vault_shares, Rounding::Down).unwrap_or(Wad::ONE)
    }

    pub fn dual_stake(&mut self, who: &str, m: Amount) -> Result<Amount, LsdError> {
        if m.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        self.base_supply = self.base_supply.checked_add(m)?;
        add(&mut self.base_balances, who, m)?;
        Ok(m)
    }

    pub fn dual_enter_vault(&mut self, who: &str, base: Amount) -> Result<Amount, LsdError> {
        if base.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        let shares = if self.vault_shares.is_zero() {
            base
        } else {
            base.mul_div(self.vault_shares, self.vault_assets, Rounding::Down)?
        };
        if shares.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        sub(&mut self.base_balances, who, base)?;
        self.vault_assets = self.vault_assets.checked_add(base)?;
        self.vault_shares = self.vault_shares.checked_add(shares)?;
        add(&mut self.share_balances, who, shares)?;
        Ok(shares)
    }

    pub fn dual_exit_vault(&mut self, who: &str, shares: Amount) -> Result<Amount, LsdError> {
        if shares.is_zero() {
            return Err(LsdError::ZeroAmount);
        }
        let base = shares.mul_div(self.vault_assets, self.vault_shares, Rounding::Down)?;
        sub(&mut self.share_balances, who, shares)?;
        self.vault_shares = self.vault_shares.checked_sub(shares)?;
        self.vault_assets = self.vault_assets.checked_sub(base)?;
        if self.vault_shares.is_zero() {
            // Leftover dust would break the empty-vault pairing.
            self.base_supply = self.base_supply.checked_sub(self.vault_assets)?;
            self.vault_assets = Amount::ZERO;
        }
        add(&mut self.base_balances, who, base)?;
        Ok(base)
    }

    /// Rewards arrive as freshly minted base tokens held by the vault.
    pub fn dual_vault_accrue(&mut self, reward: Amount) -> Result<Wad, LsdError> {
        if reward.is_zero() {
            return Ok(self.share_price());
        }
        if self.vault_shares.is_zero() {
            return Err(LsdError::NotBootstrapped);
        }
        self.base_supply = self.base_supply.checked_add(reward)?;
        self.vault_assets = self.vault_assets.checked_add(reward)?;
        Ok(self.share_price())
    }
}
