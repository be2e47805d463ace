use std::any::Any;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_fee, parse_value, pro_rata, take_fee, to_value, AmmError, Deposit, LpLedger, Pool, Token};
use crate::fixedmath::{isqrt512, narrow, widen, Amount, Rounding, Wad};

/// Balancer-style pool with weights fixed at 50/50, which reduces to
/// constant product with the fee taken on input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedPool {
    pub fee_bps: u32,
    pub balances: [Amount; 2],
    pub lp: LpLedger,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    #[serde(default = "default_fee")]
    fee_bps: u32,
}

fn default_fee() -> u32 {
    4
}

impl WeightedPool {
    pub fn new(fee_bps: u32) -> Result<Self, AmmError> {
        check_fee(fee_bps)?;
        Ok(WeightedPool {
            fee_bps,
            balances: [Amount::ZERO; 2],
            lp: LpLedger::default(),
        })
    }

    pub(crate) fn from_params(v: &Value) -> Result<Box<dyn Pool>, AmmError> {
        let p: Params = parse_value(v.clone())?;
        Ok(Box::new(Self::new(p.fee_bps)?))
    }

    pub(crate) fn from_snapshot(v: Value) -> Result<Box<dyn Pool>, AmmError> {
        let s: WeightedPool = parse_value(v)?;
        check_fee(s.fee_bps)?;
        s.lp.check()?;
        Ok(Box::new(s))
    }

    pub fn quote(&self, token_in: Token, amount_in: Amount) -> Result<Amount, AmmError> {
        if amount_in.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        if self.balances[0].is_zero() || self.balances[1].is_zero() {
            return Err(AmmError::NotBootstrapped);
        }
        let i = token_in.index();
        let b_in = self.balances[i];
        let b_out = self.balances[1 - i];
        let (_, net) = take_fee(amount_in, self.fee_bps)?;
        let out = b_out.mul_div(net, b_in.checked_add(net)?, Rounding::Down)?;
        if out.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        Ok(out)
    }
}

impl Pool for WeightedPool {
    fn kind(&self) -> &'static str {
        "weighted"
    }

    fn fee_bps(&self) -> u32 {
        self.fee_bps
    }

    fn reserves(&self) -> [Amount; 2] {
        self.balances
    }

    fn swap(&mut self, token_in: Token, amount_in: Amount) -> Result<Amount, AmmError> {
        let out = self.quote(token_in, amount_in)?;
        let i = token_in.index();
        let j = 1 - i;
        if out >= self.balances[j] {
            return Err(AmmError::InsufficientLiquidity {
                needed: out,
                reserve: self.balances[j],
            });
        }
        self.balances[i] = self.balances[i].checked_add(amount_in)?;
        self.balances[j] = self.balances[j].checked_sub(out)?;
        Ok(out)
    }

    fn spot_price(&self) -> Result<Wad, AmmError> {
        if self.balances[0].is_zero() {
            return Err(AmmError::NotBootstrapped);
        }
        Ok(Wad::from_ratio(self.balances[1], self.balances[0], Rounding::Down)?)
    }

    fn add_liquidity(&mut self, owner: &str, amounts: [Amount; 2]) -> Result<Deposit, AmmError> {
        if amounts[0].is_zero() || amounts[1].is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        let supply = self.lp.supply;
        let (minted, used) = if supply.is_zero() {
            let g = isqrt512(widen(amounts[0].as_u256()) * widen(amounts[1].as_u256()));
            (Amount::from_u256(narrow(g)?), amounts)
        } else {
            let m0 = supply.mul_div(amounts[0], self.balances[0], Rounding::Down)?;
            let m1 = supply.mul_div(amounts[1], self.balances[1], Rounding::Down)?;
            let minted = m0.min(m1);
            let used = [
                self.balances[0].mul_div(minted, supply, Rounding::Up)?,
                self.balances[1].mul_div(minted, supply, Rounding::Up)?,
            ];
            (minted, used)
        };
        if minted.is_zero() {
            return Err(AmmError::ZeroLiquidity);
        }
        self.balances[0] = self.balances[0].checked_add(used[0])?;
        self.balances[1] = self.balances[1].checked_add(used[1])?;
        self.lp.mint(owner, minted)?;
        Ok(Deposit { minted, used })
    }

    fn remove_liquidity(&mut self, owner: &str, units: Amount) -> Result<[Amount; 2], AmmError> {
        let supply = self.lp.supply;
        self.lp.burn(owner, units)?;
        let out = pro_rata(self.balances, units, supply)?;
        self.balances[0] = self.balances[0].checked_sub(out[0])?;
        self.balances[1] = self.balances[1].checked_sub(out[1])?;
        Ok(out)
    }

    fn lp_balance(&self, owner: &str) -> Amount {
        self.lp.balance(owner)
    }

    fn lp_supply(&self) -> Amount {
        self.lp.supply
    }

    fn sync_lsd_reserve(&mut self, balance: Amount) -> Result<(), AmmError> {
        self.balances[0] = balance;
        Ok(())
    }

    fn snapshot(&self) -> Value {
        to_value(self)
    }

    fn clone_box(&self) -> Box<dyn Pool> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
