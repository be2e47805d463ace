use std::any::Any;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_fee, parse_value, pro_rata, take_fee, to_value, AmmError, Deposit, LpLedger, Pool, Token};
use crate::fixedmath::{div_round, narrow, widen, Amount, Rounding, Wad, U512};

pub const MAX_ITERATIONS: u32 = 255;

/// Probe size for the marginal price.
const PROBE_WEI: u64 = 1_000_000;
/// The invariant is homogeneous, so balances scaled by this factor solve
/// the same curve at 10^-12 wei resolution. With a 10^6-wei probe the scaled
/// output is the price in wad directly.
const PROBE_SCALE: u64 = 1_000_000_000_000;
/// Budget for the unit steps that pin a Newton estimate to the exact root.
const MAX_REFINE_STEPS: u32 = 10_000;

/// Two-token Curve-style pool: LSD at index 0, ETH at index 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableswapPool {
    pub amp: u64,
    pub fee_bps: u32,
    pub balances: [Amount; 2],
    pub lp: LpLedger,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    amp: u64,
    #[serde(default = "default_fee")]
    fee_bps: u32,
}

fn default_fee() -> u32 {
    4
}

fn one() -> U512 {
    U512::from(1u8)
}

fn ann_of(amp: u64) -> U512 {
    U512::from(amp) * U512::from(4u8)
}

fn abs_diff(a: U512, b: U512) -> U512 {
    if a > b {
        a - b
    } else {
        b - a
    }
}

/// `D` satisfies the invariant with slack: 4xy(Ann(x+y) + D) ≥ 4xy·Ann·D + D³.
fn d_feasible(x: U512, y: U512, ann: U512, d: U512) -> bool {
    let xy4 = x * y * U512::from(4u8);
    xy4 * (ann * (x + y) + d) >= xy4 * ann * d + d * d * d
}

/// `y` is at or above the root of 4xy(Ann(x+y) + D − Ann·D) = D³.
fn y_feasible(x: U512, d: U512, ann: U512, y: U512) -> bool {
    let xy4 = x * y * U512::from(4u8);
    xy4 * (ann * x + ann * y + d) >= xy4 * ann * d + d * d * d
}

/// Largest integer `D` satisfying the invariant for balances `(x, y)`.
pub(crate) fn d_wide(x: U512, y: U512, ann: U512) -> Result<U512, AmmError> {
    let s = x + y;
    if s.is_zero() {
        return Ok(U512::ZERO);
    }
    if x.is_zero() || y.is_zero() {
        return Err(AmmError::NotBootstrapped);
    }
    let two = U512::from(2u8);
    let three = U512::from(3u8);
    let mut d = s;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut d_p = d;
        d_p = d_p * d / (x * two);
        d_p = d_p * d / (y * two);
        let prev = d;
        d = (ann * s + d_p * two) * d / ((ann - one()) * d + d_p * three);
        if abs_diff(d, prev) <= one() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AmmError::NoConvergence(MAX_ITERATIONS));
    }
    let mut steps = 0;
    while !d_feasible(x, y, ann, d) {
        d -= one();
        steps += 1;
        if steps > MAX_REFINE_STEPS {
            return Err(AmmError::NoConvergence(MAX_ITERATIONS));
        }
    }
    while d_feasible(x, y, ann, d + one()) {
        d += one();
        steps += 1;
        if steps > MAX_REFINE_STEPS {
            return Err(AmmError::NoConvergence(MAX_ITERATIONS));
        }
    }
    Ok(d)
}

/// Smallest integer `y` keeping `(x, y)` on or above the invariant `D`.
pub(crate) fn y_wide(x: U512, d: U512, ann: U512) -> Result<U512, AmmError> {
    if x.is_zero() {
        return Err(AmmError::NotBootstrapped);
    }
    let two = U512::from(2u8);
    let c = d * d / (x * two) * d / (ann * two);
    let b = x + d / ann;
    let mut y = d;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let prev = y;
        let den = (two * y + b).checked_sub(d).filter(|v| !v.is_zero());
        let Some(den) = den else {
            return Err(AmmError::NoConvergence(MAX_ITERATIONS));
        };
        y = (y * y + c) / den;
        if abs_diff(y, prev) <= one() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AmmError::NoConvergence(MAX_ITERATIONS));
    }
    if y.is_zero() {
        y = one();
    }
    let mut steps = 0;
    while !y_feasible(x, d, ann, y) {
        y += one();
        steps += 1;
        if steps > MAX_REFINE_STEPS {
            return Err(AmmError::NoConvergence(MAX_ITERATIONS));
        }
    }
    while y > one() && y_feasible(x, d, ann, y - one()) {
        y -= one();
        steps += 1;
        if steps > MAX_REFINE_STEPS {
            return Err(AmmError::NoConvergence(MAX_ITERATIONS));
        }
    }
    Ok(y)
}

/// Invariant `D` of a two-token pool, rounded down.
pub fn get_d(x: Amount, y: Amount, amp: u64) -> Result<Amount, AmmError> {
    let d = d_wide(widen(x.as_u256()), widen(y.as_u256()), ann_of(amp))?;
    Ok(Amount::from_u256(narrow(d)?))
}

/// Balance of the other token that keeps `D` when this token's balance is `x`,
/// rounded up.
pub fn get_y(x: Amount, d: Amount, amp: u64) -> Result<Amount, AmmError> {
    let y = y_wide(widen(x.as_u256()), widen(d.as_u256()), ann_of(amp))?;
    Ok(Amount::from_u256(narrow(y)?))
}

impl StableswapPool {
    pub fn new(amp: u64, fee_bps: u32) -> Result<Self, AmmError> {
        if amp == 0 {
            return Err(AmmError::InvalidParams("amp must be at least 1".into()));
        }
        check_fee(fee_bps)?;
        Ok(StableswapPool {
            amp,
            fee_bps,
            balances: [Amount::ZERO; 2],
            lp: LpLedger::default(),
        })
    }

    pub(crate) fn from_params(v: &Value) -> Result<Box<dyn Pool>, AmmError> {
        let p: Params = parse_value(v.clone())?;
        Ok(Box::new(Self::new(p.amp, p.fee_bps)?))
    }

    pub(crate) fn from_snapshot(v: Value) -> Result<Box<dyn Pool>, AmmError> {
        let s: StableswapPool = parse_value(v)?;
        if s.amp == 0 {
            return Err(AmmError::InvalidParams("amp must be at least 1".into()));
        }
        check_fee(s.fee_bps)?;
        s.lp.check()?;
        Ok(Box::new(s))
    }

    pub fn invariant(&self) -> Result<Amount, AmmError> {
        get_d(self.balances[0], self.balances[1], self.amp)
    }

    fn bootstrapped(&self) -> bool {
        !self.balances[0].is_zero() && !self.balances[1].is_zero()
    }

    /// Output for a swap without committing it.
    pub fn quote(&self, token_in: Token, amount_in: Amount) -> Result<Amount, AmmError> {
        if amount_in.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        if !self.bootstrapped() {
            return Err(AmmError::NotBootstrapped);
        }
        let i = token_in.index();
        let j = 1 - i;
        let (_, net) = take_fee(amount_in, self.fee_bps)?;
        // Solved below wei resolution so the floor of D never lets the
        // payout exceed the exact curve.
        let k = U512::from(PROBE_SCALE);
        let ann = ann_of(self.amp);
        let d = d_wide(widen(self.balances[0].as_u256()) * k, widen(self.balances[1].as_u256()) * k, ann)?;
        let y_scaled = y_wide(widen(self.balances[i].checked_add(net)?.as_u256()) * k, d, ann)?;
        let y_new = Amount::from_u256(narrow(div_round(y_scaled, k, Rounding::Up)?)?);
        let keep = y_new.checked_add(Amount::from_wei(1))?;
        let out = self.balances[j].saturating_sub(keep);
        if out.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        Ok(out)
    }
}

impl Pool for StableswapPool {
    fn kind(&self) -> &'static str {
        "stableswap"
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
        if !self.bootstrapped() {
            return Err(AmmError::NotBootstrapped);
        }
        let k = U512::from(PROBE_SCALE);
        let ann = ann_of(self.amp);
        let x = widen(self.balances[0].as_u256()) * k;
        let y = widen(self.balances[1].as_u256()) * k;
        let d = d_wide(x, y, ann)?;
        let y_new = y_wide(x + U512::from(PROBE_WEI) * k, d, ann)?;
        Ok(Wad::from_u256(narrow(y.saturating_sub(y_new))?))
    }

    fn add_liquidity(&mut self, owner: &str, amounts: [Amount; 2]) -> Result<Deposit, AmmError> {
        if amounts[0].is_zero() && amounts[1].is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        let supply = self.lp.supply;
        let minted = if supply.is_zero() {
            if amounts[0].is_zero() || amounts[1].is_zero() {
                return Err(AmmError::ZeroLiquidity);
            }
            get_d(amounts[0], amounts[1], self.amp)?
        } else {
            let a = [widen(amounts[0].as_u256()), widen(amounts[1].as_u256())];
            let b = [widen(self.balances[0].as_u256()), widen(self.balances[1].as_u256())];
            if a[0] * b[1] == a[1] * b[0] && !b[0].is_zero() {
                supply.mul_div(amounts[0], self.balances[0], Rounding::Down)?
            } else {
                let d0 = self.invariant()?;
                let d1 = get_d(
                    self.balances[0].checked_add(amounts[0])?,
                    self.balances[1].checked_add(amounts[1])?,
                    self.amp,
                )?;
                supply.mul_div(d1.saturating_sub(d0), d0, Rounding::Down)?
            }
        };
        if minted.is_zero() {
            return Err(AmmError::ZeroLiquidity);
        }
        self.balances[0] = self.balances[0].checked_add(amounts[0])?;
        self.balances[1] = self.balances[1].checked_add(amounts[1])?;
        self.lp.mint(owner, minted)?;
        Ok(Deposit { minted, used: amounts })
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
