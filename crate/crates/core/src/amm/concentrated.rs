use std::any::Any;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_fee, parse_value, take_fee, to_value, AmmError, Deposit, Pool, Token};
use crate::fixedmath::{div_round, isqrt512, narrow, widen, Amount, Rounding, Wad, U256, U512};

/// Fixed-point scale of the stored square-root price.
pub const SQRT_ONE: u128 = 1_000_000_000_000_000_000_000_000_000_000_000_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub liquidity: Amount,
    pub fee_growth_last: [Amount; 2],
    pub owed: [Amount; 2],
}

/// Uniswap-V3 style pool with one active range. Prices are LSD in ETH, so
/// token 0 is the LSD and token 1 is ETH.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentratedPool {
    pub fee_bps: u32,
    /// √P scaled by 10^36.
    pub sqrt_price: Amount,
    pub sqrt_lower: Amount,
    pub sqrt_upper: Amount,
    pub liquidity: Amount,
    /// Principal backing the active liquidity.
    pub reserves: [Amount; 2],
    /// Swap fees held for positions.
    pub fees: [Amount; 2],
    /// Cumulative fee per unit of liquidity, scaled by 10^36.
    pub fee_growth: [Amount; 2],
    pub positions: BTreeMap<String, Position>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    #[serde(default = "default_fee")]
    fee_bps: u32,
    price: String,
    price_lower: String,
    price_upper: String,
}

fn default_fee() -> u32 {
    30
}

fn q() -> U512 {
    U512::from(SQRT_ONE)
}

fn w(a: Amount) -> U512 {
    widen(a.as_u256())
}

fn amt(v: U512) -> Result<Amount, AmmError> {
    Ok(Amount::from_u256(narrow(v)?))
}

/// √P at 10^36 scale for a wad price, rounded down.
pub fn sqrt_price_of(price: Wad) -> Amount {
    let v = widen(price.as_u256()) * U512::from(10u8).pow(U512::from(54u8));
    Amount::from_u256(narrow(isqrt512(v)).unwrap_or(U256::MAX))
}

impl ConcentratedPool {
    pub fn new(fee_bps: u32, sqrt_price: Amount, sqrt_lower: Amount, sqrt_upper: Amount) -> Result<Self, AmmError> {
        check_fee(fee_bps)?;
        if !(sqrt_lower < sqrt_price && sqrt_price < sqrt_upper) || sqrt_lower.is_zero() {
            return Err(AmmError::InvalidParams("price must lie strictly inside the range".into()));
        }
        Ok(ConcentratedPool {
            fee_bps,
            sqrt_price,
            sqrt_lower,
            sqrt_upper,
            liquidity: Amount::ZERO,
            reserves: [Amount::ZERO; 2],
            fees: [Amount::ZERO; 2],
            fee_growth: [Amount::ZERO; 2],
            positions: BTreeMap::new(),
        })
    }

    pub(crate) fn from_params(v: &Value) -> Result<Box<dyn Pool>, AmmError> {
        let p: Params = parse_value(v.clone())?;
        let price = Wad::parse_decimal(&p.price)?;
        let lower = Wad::parse_decimal(&p.price_lower)?;
        let upper = Wad::parse_decimal(&p.price_upper)?;
        Ok(Box::new(Self::new(
            p.fee_bps,
            sqrt_price_of(price),
            sqrt_price_of(lower),
            sqrt_price_of(upper),
        )?))
    }

    pub(crate) fn from_snapshot(v: Value) -> Result<Box<dyn Pool>, AmmError> {
        let s: ConcentratedPool = parse_value(v)?;
        check_fee(s.fee_bps)?;
        let sum = s
            .positions
            .values()
            .try_fold(Amount::ZERO, |acc, p| acc.checked_add(p.liquidity))?;
        if sum != s.liquidity {
            return Err(AmmError::InvalidParams("position liquidity does not sum to pool".into()));
        }
        Ok(Box::new(s))
    }

    /// Virtual reserves `(L/√P, L·√P)`, rounded down.
    pub fn virtual_reserves(&self) -> Result<[Amount; 2], AmmError> {
        let l = w(self.liquidity);
        let s = w(self.sqrt_price);
        Ok([amt(l * q() / s)?, amt(l * s / q())?])
    }

    /// Principal owed to `units` of liquidity at the current price.
    fn principal(&self, units: Amount, rounding: Rounding) -> Result<[Amount; 2], AmmError> {
        let l = w(units);
        let s = w(self.sqrt_price);
        let a = w(self.sqrt_lower);
        let b = w(self.sqrt_upper);
        let x = div_round(l * q() * (b - s), s * b, rounding)?;
        let y = div_round(l * (s - a), q(), rounding)?;
        Ok([amt(x)?, amt(y)?])
    }

    fn settle(&mut self, owner: &str) -> Result<(), AmmError> {
        let growth = self.fee_growth;
        if let Some(p) = self.positions.get_mut(owner) {
            for i in 0..2 {
                let delta = growth[i].checked_sub(p.fee_growth_last[i])?;
                let earned = div_round(w(delta) * w(p.liquidity), q(), Rounding::Down)?;
                p.owed[i] = p.owed[i].checked_add(amt(earned)?)?;
                p.fee_growth_last[i] = growth[i];
            }
        }
        Ok(())
    }

    pub fn position(&self, owner: &str) -> Option<&Position> {
        self.positions.get(owner)
    }

    /// Output and next √P for a swap, without committing.
    pub fn quote(&self, token_in: Token, amount_in: Amount) -> Result<(Amount, Amount, Amount), AmmError> {
        if amount_in.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        if self.liquidity.is_zero() {
            return Err(AmmError::NotBootstrapped);
        }
        let (fee, net) = take_fee(amount_in, self.fee_bps)?;
        if net.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        let l = w(self.liquidity);
        let s = w(self.sqrt_price);
        let d = w(net);
        let (out, next) = match token_in {
            Token::Lsd => {
                let den = l * q() + d * s;
                let next = div_round(l * s * q(), den, Rounding::Up)?;
                if next <= w(self.sqrt_lower) {
                    return Err(AmmError::PriceOutOfRange);
                }
                (l * d * s * s / (q() * den), next)
            }
            Token::Eth => {
                let next = s + d * q() / l;
                if next >= w(self.sqrt_upper) {
                    return Err(AmmError::PriceOutOfRange);
                }
                (l * d * q() * q() / (s * (l * s + d * q())), next)
            }
        };
        let out = amt(out)?;
        if out.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        Ok((out, amt(next)?, fee))
    }
}

impl Pool for ConcentratedPool {
    fn kind(&self) -> &'static str {
        "concentrated"
    }

    fn fee_bps(&self) -> u32 {
        self.fee_bps
    }

    fn reserves(&self) -> [Amount; 2] {
        self.reserves
    }

    fn holdings(&self) -> [Amount; 2] {
        [
            self.reserves[0].checked_add(self.fees[0]).unwrap_or(self.reserves[0]),
            self.reserves[1].checked_add(self.fees[1]).unwrap_or(self.reserves[1]),
        ]
    }

    fn swap(&mut self, token_in: Token, amount_in: Amount) -> Result<Amount, AmmError> {
        let (out, next, fee) = self.quote(token_in, amount_in)?;
        let i = token_in.index();
        let j = 1 - i;
        if out > self.reserves[j] {
            return Err(AmmError::InsufficientLiquidity {
                needed: out,
                reserve: self.reserves[j],
            });
        }
        let growth = div_round(w(fee) * q(), w(self.liquidity), Rounding::Down)?;
        self.reserves[i] = self.reserves[i].checked_add(amount_in.checked_sub(fee)?)?;
        self.reserves[j] = self.reserves[j].checked_sub(out)?;
        self.fees[i] = self.fees[i].checked_add(fee)?;
        self.fee_growth[i] = self.fee_growth[i].checked_add(amt(growth)?)?;
        self.sqrt_price = next;
        Ok(out)
    }

    fn spot_price(&self) -> Result<Wad, AmmError> {
        let s = w(self.sqrt_price);
        let p = s * s / U512::from(10u8).pow(U512::from(54u8));
        Ok(Wad::from_u256(narrow(p)?))
    }

    fn add_liquidity(&mut self, owner: &str, amounts: [Amount; 2]) -> Result<Deposit, AmmError> {
        if amounts[0].is_zero() && amounts[1].is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        let s = w(self.sqrt_price);
        let a = w(self.sqrt_lower);
        let b = w(self.sqrt_upper);
        let l0 = w(amounts[0]) * s * b / (q() * (b - s));
        let l1 = w(amounts[1]) * q() / (s - a);
        let l = amt(l0.min(l1))?;
        if l.is_zero() {
            return Err(AmmError::ZeroLiquidity);
        }
        let used = self.principal(l, Rounding::Up)?;
        if used[0] > amounts[0] || used[1] > amounts[1] {
            return Err(AmmError::ZeroLiquidity);
        }
        self.settle(owner)?;
        let growth = self.fee_growth;
        let p = self.positions.entry(owner.to_string()).or_insert_with(|| Position {
            fee_growth_last: growth,
            ..Position::default()
        });
        p.liquidity = p.liquidity.checked_add(l)?;
        self.liquidity = self.liquidity.checked_add(l)?;
        self.reserves[0] = self.reserves[0].checked_add(used[0])?;
        self.reserves[1] = self.reserves[1].checked_add(used[1])?;
        Ok(Deposit { minted: l, used })
    }

    /// Burns `units` of the owner's liquidity and collects everything owed,
    /// fees included. `units = 0` collects fees only.
    fn remove_liquidity(&mut self, owner: &str, units: Amount) -> Result<[Amount; 2], AmmError> {
        self.settle(owner)?;
        let Some(pos) = self.positions.get(owner).cloned() else {
            return Err(AmmError::NothingToCollect(owner.to_string()));
        };
        if units > pos.liquidity {
            return Err(AmmError::InsufficientBalance {
                owner: owner.to_string(),
                needed: units,
                available: pos.liquidity,
            });
        }
        if units.is_zero() && pos.owed == [Amount::ZERO; 2] {
            return Err(AmmError::NothingToCollect(owner.to_string()));
        }
        let mut principal = if units == self.liquidity {
            self.reserves
        } else {
            self.principal(units, Rounding::Down)?
        };
        for i in 0..2 {
            principal[i] = principal[i].min(self.reserves[i]);
        }
        let owed = [pos.owed[0].min(self.fees[0]), pos.owed[1].min(self.fees[1])];
        for i in 0..2 {
            self.reserves[i] = self.reserves[i].checked_sub(principal[i])?;
            self.fees[i] = self.fees[i].checked_sub(owed[i])?;
        }
        self.liquidity = self.liquidity.checked_sub(units)?;
        let left = pos.liquidity.checked_sub(units)?;
        if left.is_zero() {
            self.positions.remove(owner);
        } else if let Some(p) = self.positions.get_mut(owner) {
            p.liquidity = left;
            p.owed = [Amount::ZERO; 2];
        }
        Ok([principal[0].checked_add(owed[0])?, principal[1].checked_add(owed[1])?])
    }

    fn lp_balance(&self, owner: &str) -> Amount {
        self.positions.get(owner).map(|p| p.liquidity).unwrap_or(Amount::ZERO)
    }

    fn lp_supply(&self) -> Amount {
        self.liquidity
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedmath::WAD;

    fn eth(n: u128) -> Amount {
        Amount::from_wei(n * WAD)
    }

    fn at_par(fee: u32) -> ConcentratedPool {
        ConcentratedPool::new(
            fee,
            Amount::from_wei(SQRT_ONE),
            Amount::from_wei(SQRT_ONE / 2),
            Amount::from_wei(SQRT_ONE * 2),
        )
        .unwrap()
    }

    #[test]
    fn swap_matches_virtual_reserves() {
        let mut p = at_par(0);
        p.liquidity = eth(1000);
        p.reserves = [eth(1000), eth(1000)];
        p.positions.insert(
            "lp".into(),
            Position {
                liquidity: eth(1000),
                ..Position::default()
            },
        );
        let out = p.swap(Token::Lsd, eth(10)).unwrap();
        // (1010)(1000 - dy) = 1e6  =>  dy = 10000/1010.
        assert_eq!(out, Amount::from_wei(9_900_990_099_009_900_990));
        let expect = SQRT_ONE / 1010 * 1000 + (SQRT_ONE % 1010) * 1000 / 1010;
        let got = p.sqrt_price.as_u256();
        assert!(got >= U256::from(expect) && got <= U256::from(expect + 1));
    }

    #[test]
    fn zero_and_out_of_range() {
        let mut p = at_par(30);
        p.add_liquidity("lp", [eth(100), eth(100)]).unwrap();
        assert_eq!(p.swap(Token::Lsd, Amount::ZERO), Err(AmmError::ZeroAmount));
        let before = p.clone();
        assert_eq!(p.swap(Token::Lsd, eth(10_000)), Err(AmmError::PriceOutOfRange));
        assert_eq!(p.swap(Token::Eth, eth(10_000)), Err(AmmError::PriceOutOfRange));
        assert_eq!(p, before);
    }

    #[test]
    fn spot_is_square_of_sqrt_price() {
        let mut p = at_par(30);
        p.sqrt_price = Amount::from_u256(U256::from(1_024_700_000_000_000_000_000_000_000_000_000_000u128));
        let s = p.spot_price().unwrap().to_f64();
        assert!((s - 1.05).abs() < 1e-4, "{s}");
        assert_eq!(sqrt_price_of(Wad::ONE), Amount::from_wei(SQRT_ONE));
    }

    #[test]
    fn mint_then_collect_round_trip() {
        let mut p = ConcentratedPool::from_params(&serde_json::json!({
            "fee_bps": 30, "price": "1", "price_lower": "0.5", "price_upper": "2"
        }))
        .unwrap();
        let d = p.add_liquidity("lp", [eth(1000), eth(1000)]).unwrap();
        // Symmetric range: L = 1000 / (1 - 1/sqrt 2).
        let k = 1.0 / (1.0 - 1.0 / 2f64.sqrt());
        assert!((d.minted.to_f64() / (1000e18 * k) - 1.0).abs() < 1e-12);
        let back = p.remove_liquidity("lp", d.minted).unwrap();
        assert_eq!(back, d.used);
        assert!(eth(1000).checked_sub(back[0]).unwrap() <= Amount::from_wei(2));
    }

    #[test]
    fn fees_accrue_to_positions() {
        let mut p = at_par(30);
        let a = p.add_liquidity("a", [eth(100), eth(100)]).unwrap();
        let b = p.add_liquidity("b", [eth(300), eth(300)]).unwrap();
        p.swap(Token::Eth, eth(10)).unwrap();
        let fee = eth(10).mul_div(Amount::from_wei(30), Amount::from_wei(10_000), Rounding::Up).unwrap();
        let got_a = p.remove_liquidity("a", a.minted).unwrap();
        let got_b = p.remove_liquidity("b", b.minted).unwrap();
        let fee_total = got_a[1].checked_add(got_b[1]).unwrap();
        assert!(got_a[1] > a.used[1] || got_a[0] < a.used[0]);
        let paid_in = a.used[1].checked_add(b.used[1]).unwrap().checked_add(eth(10)).unwrap();
        assert_eq!(fee_total, paid_in.checked_sub(p.holdings()[1]).unwrap());
        assert!(fee <= eth(10));
        assert_eq!(
            p.remove_liquidity("a", Amount::ZERO),
            Err(AmmError::NothingToCollect("a".into()))
        );
    }

    #[test]
    fn collector_earns_fee_share() {
        let mut p = at_par(30);
        let a = p.add_liquidity("a", [eth(100), eth(100)]).unwrap();
        p.swap(Token::Eth, eth(1)).unwrap();
        p.swap(Token::Lsd, eth(1)).unwrap();
        let fee0 = p.fees[0];
        let fee1 = p.fees[1];
        let got = p.remove_liquidity("a", a.minted).unwrap();
        // Sole LP: gets everything the pool holds, fees included.
        assert!(fee0 > Amount::ZERO && fee1 > Amount::ZERO);
        assert!(got[0] >= fee0 && got[1] >= fee1);
        assert_eq!(p.holdings(), [Amount::ZERO, Amount::ZERO]);
    }
}
