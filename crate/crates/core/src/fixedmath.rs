//! Wide-integer fixed-point arithmetic.
//!
//! Token quantities are [`Amount`]s in wei and ratios are [`Wad`]s scaled by
//! 10^18. Both wrap a 256-bit unsigned integer; products are formed in 512
//! bits so that only a result which does not fit in 256 bits overflows.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use ruint::aliases::{U256, U512};

/// 10^18 as a plain integer.
pub const WAD: u128 = 1_000_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("arithmetic overflow")]
    Overflow,
    #[error("arithmetic underflow")]
    Underflow,
    #[error("division by zero")]
    DivideByZero,
    #[error("cannot parse {0:?} as a fixed-point number")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    Down,
    Up,
}

pub(crate) fn wad_u256() -> U256 {
    U256::from(WAD)
}

/// `a * b / d` with a 512-bit intermediate.
pub fn mul_div(a: U256, b: U256, d: U256, rounding: Rounding) -> Result<U256, MathError> {
    if d.is_zero() {
        return Err(MathError::DivideByZero);
    }
    let prod = U512::from(a) * U512::from(b);
    let d = U512::from(d);
    let mut q = prod / d;
    if rounding == Rounding::Up && !(prod % d).is_zero() {
        q += U512::from(1u8);
    }
    narrow(q)
}

/// Narrow a 512-bit intermediate back to 256 bits.
#[allow(deprecated)]
pub fn narrow(v: U512) -> Result<U256, MathError> {
    U256::checked_from_uint(v).ok_or(MathError::Overflow)
}

pub fn widen(v: U256) -> U512 {
    U512::from(v)
}

/// Division of 512-bit values with explicit rounding.
pub fn div_round(n: U512, d: U512, rounding: Rounding) -> Result<U512, MathError> {
    if d.is_zero() {
        return Err(MathError::DivideByZero);
    }
    let q = n / d;
    if rounding == Rounding::Up && !(n % d).is_zero() {
        Ok(q + U512::from(1u8))
    } else {
        Ok(q)
    }
}

/// Converts a 256-bit integer to `f64` (nearest representable).
pub fn u256_to_f64(v: U256) -> f64 {
    f64::from(v)
}

/// Parses a non-negative decimal like `"12.5"` into an integer scaled by 10^18.
fn parse_scaled(s: &str) -> Result<U256, MathError> {
    let err = || MathError::Parse(s.to_string());
    let t = s.trim().replace('_', "");
    if t.is_empty() {
        return Err(err());
    }
    let (int_part, frac_part) = match t.split_once('.') {
        Some((i, f)) => (i, f),
        None => (t.as_str(), ""),
    };
    if frac_part.len() > 18
        || !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
        || (int_part.is_empty() && frac_part.is_empty())
    {
        return Err(err());
    }
    let int_v = if int_part.is_empty() {
        U256::ZERO
    } else {
        U256::from_str_radix(int_part, 10).map_err(|_| err())?
    };
    let mut frac = frac_part.to_string();
    while frac.len() < 18 {
        frac.push('0');
    }
    let frac_v = U256::from_str_radix(&frac, 10).map_err(|_| err())?;
    int_v
        .checked_mul(wad_u256())
        .and_then(|v| v.checked_add(frac_v))
        .ok_or(MathError::Overflow)
}

fn format_scaled(v: U256) -> String {
    let int = v / wad_u256();
    let frac = v % wad_u256();
    if frac.is_zero() {
        return int.to_string();
    }
    let f = format!("{:0>18}", frac.to_string());
    format!("{}.{}", int, f.trim_end_matches('0'))
}

/// Anything stored as a 10^18-scaled or wei integer.
pub trait FixedPoint: Copy {
    fn raw(self) -> U256;
    fn from_raw(raw: U256) -> Self;
}

/// `floor(a * b / 10^18)` or the ceiling, keeping the kind of `a`.
pub fn wad_mul<T: FixedPoint>(a: T, b: Wad, rounding: Rounding) -> Result<T, MathError> {
    mul_div(a.raw(), b.0, wad_u256(), rounding).map(T::from_raw)
}

/// `floor(a * 10^18 / b)` or the ceiling, keeping the kind of `a`.
pub fn wad_div<T: FixedPoint>(a: T, b: Wad, rounding: Rounding) -> Result<T, MathError> {
    mul_div(a.raw(), wad_u256(), b.0, rounding).map(T::from_raw)
}

/// Token quantity in wei.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(U256);

impl Amount {
    pub const ZERO: Amount = Amount(U256::ZERO);

    pub fn from_wei(wei: u128) -> Self {
        Amount(U256::from(wei))
    }

    /// Whole tokens, i.e. `n * 10^18` wei.
    pub fn from_eth(n: u64) -> Self {
        Amount(U256::from(n) * wad_u256())
    }

    /// Decimal token units, e.g. `"0.25"` is `2.5e17` wei.
    pub fn parse_eth(s: &str) -> Result<Self, MathError> {
        parse_scaled(s).map(Amount)
    }

    pub fn to_eth_string(self) -> String {
        format_scaled(self.0)
    }

    pub fn as_u256(self) -> U256 {
        self.0
    }

    pub fn from_u256(v: U256) -> Self {
        Amount(v)
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn checked_add(self, rhs: Amount) -> Result<Amount, MathError> {
        self.0.checked_add(rhs.0).map(Amount).ok_or(MathError::Overflow)
    }

    pub fn checked_sub(self, rhs: Amount) -> Result<Amount, MathError> {
        self.0.checked_sub(rhs.0).map(Amount).ok_or(MathError::Underflow)
    }

    pub fn saturating_sub(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_sub(rhs.0))
    }

    /// `self * num / den` with explicit rounding.
    pub fn mul_div(self, num: Amount, den: Amount, rounding: Rounding) -> Result<Amount, MathError> {
        mul_div(self.0, num.0, den.0, rounding).map(Amount)
    }

    pub fn wad_mul(self, w: Wad, rounding: Rounding) -> Result<Amount, MathError> {
        wad_mul(self, w, rounding)
    }

    pub fn wad_div(self, w: Wad, rounding: Rounding) -> Result<Amount, MathError> {
        wad_div(self, w, rounding)
    }

    pub fn to_f64(self) -> f64 {
        u256_to_f64(self.0)
    }
}

impl FixedPoint for Amount {
    fn raw(self) -> U256 {
        self.0
    }
    fn from_raw(raw: U256) -> Self {
        Amount(raw)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}wei", self.0)
    }
}

impl FromStr for Amount {
    type Err = MathError;

    /// Parses an integer wei quantity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || !t.chars().all(|c| c.is_ascii_digit()) {
            return Err(MathError::Parse(s.to_string()));
        }
        U256::from_str_radix(t, 10)
            .map(Amount)
            .map_err(|_| MathError::Parse(s.to_string()))
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ratio scaled by 10^18.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Wad(U256);

impl Wad {
    pub const ZERO: Wad = Wad(U256::ZERO);
    pub const ONE: Wad = Wad(U256::from_limbs([WAD as u64, 0, 0, 0]));

    pub fn from_raw(v: u128) -> Self {
        Wad(U256::from(v))
    }

    pub fn from_u256(v: U256) -> Self {
        Wad(v)
    }

    pub fn as_u256(self) -> U256 {
        self.0
    }

    /// Decimal ratio, e.g. `"1.05"`.
    pub fn parse_decimal(s: &str) -> Result<Self, MathError> {
        parse_scaled(s).map(Wad)
    }

    pub fn to_decimal_string(self) -> String {
        format_scaled(self.0)
    }

    /// `num / den` as a Wad.
    pub fn from_ratio(num: Amount, den: Amount, rounding: Rounding) -> Result<Self, MathError> {
        mul_div(num.0, wad_u256(), den.0, rounding).map(Wad)
    }

    /// Basis points as a Wad fraction (`4` is 0.0004).
    pub fn from_bps(bps: u32) -> Self {
        Wad(U256::from(bps as u128 * (WAD / 10_000)))
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn wad_mul(self, w: Wad, rounding: Rounding) -> Result<Wad, MathError> {
        wad_mul(self, w, rounding)
    }

    pub fn wad_div(self, w: Wad, rounding: Rounding) -> Result<Wad, MathError> {
        wad_div(self, w, rounding)
    }

    pub fn checked_add(self, rhs: Wad) -> Result<Wad, MathError> {
        self.0.checked_add(rhs.0).map(Wad).ok_or(MathError::Overflow)
    }

    pub fn checked_sub(self, rhs: Wad) -> Result<Wad, MathError> {
        self.0.checked_sub(rhs.0).map(Wad).ok_or(MathError::Underflow)
    }

    pub fn to_f64(self) -> f64 {
        u256_to_f64(self.0) / 1e18
    }
}

impl FixedPoint for Wad {
    fn raw(self) -> U256 {
        self.0
    }
    fn from_raw(raw: U256) -> Self {
        Wad(raw)
    }
}

impl fmt::Display for Wad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Wad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Wad({})", format_scaled(self.0))
    }
}

impl FromStr for Wad {
    type Err = MathError;

    /// Parses the raw scaled integer.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Amount>().map(|a| Wad(a.0))
    }
}

impl Serialize for Wad {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Wad {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Signed wei quantity, used for profits and PnL.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SignedAmount {
    negative: bool,
    magnitude: Amount,
}

impl SignedAmount {
    pub const ZERO: SignedAmount = SignedAmount {
        negative: false,
        magnitude: Amount::ZERO,
    };

    pub fn new(negative: bool, magnitude: Amount) -> Self {
        SignedAmount {
            negative: negative && !magnitude.is_zero(),
            magnitude,
        }
    }

    pub fn positive(a: Amount) -> Self {
        Self::new(false, a)
    }

    pub fn negative(a: Amount) -> Self {
        Self::new(true, a)
    }

    /// `a - b`, never overflowing.
    pub fn diff(a: Amount, b: Amount) -> Self {
        if a >= b {
            Self::positive(Amount(a.0 - b.0))
        } else {
            Self::negative(Amount(b.0 - a.0))
        }
    }

    pub fn is_negative(self) -> bool {
        self.negative
    }

    pub fn is_positive(self) -> bool {
        !self.negative && !self.magnitude.is_zero()
    }

    pub fn magnitude(self) -> Amount {
        self.magnitude
    }

    pub fn checked_add(self, rhs: SignedAmount) -> Result<SignedAmount, MathError> {
        match (self.negative, rhs.negative) {
            (false, false) => Ok(Self::positive(self.magnitude.checked_add(rhs.magnitude)?)),
            (true, true) => Ok(Self::negative(self.magnitude.checked_add(rhs.magnitude)?)),
            (false, true) => Ok(Self::diff(self.magnitude, rhs.magnitude)),
            (true, false) => Ok(Self::diff(rhs.magnitude, self.magnitude)),
        }
    }

    pub fn checked_sub(self, rhs: SignedAmount) -> Result<SignedAmount, MathError> {
        self.checked_add(Self::new(!rhs.negative, rhs.magnitude))
    }

    pub fn sub_amount(self, rhs: Amount) -> Result<SignedAmount, MathError> {
        self.checked_sub(Self::positive(rhs))
    }

    pub fn to_f64(self) -> f64 {
        let m = self.magnitude.to_f64();
        if self.negative {
            -m
        } else {
            m
        }
    }
}

impl PartialOrd for SignedAmount {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SignedAmount {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.negative, other.negative) {
            (false, false) => self.magnitude.cmp(&other.magnitude),
            (true, true) => other.magnitude.cmp(&self.magnitude),
            (false, true) => Ordering::Greater,
            (true, false) => Ordering::Less,
        }
    }
}

impl fmt::Display for SignedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-{}", self.magnitude)
        } else {
            write!(f, "{}", self.magnitude)
        }
    }
}

impl fmt::Debug for SignedAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}wei", self)
    }
}

impl FromStr for SignedAmount {
    type Err = MathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.strip_prefix('-') {
            Some(rest) => Ok(Self::negative(rest.parse()?)),
            None => Ok(Self::positive(t.parse()?)),
        }
    }
}

impl Serialize for SignedAmount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SignedAmount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Integer square root (floor) of a 512-bit value.
pub fn isqrt512(v: U512) -> U512 {
    if v.is_zero() {
        return v;
    }
    let mut x = v.root(2);
    // `root` is already floor; guard against off-by-one at the boundary.
    while x * x > v {
        x -= U512::from(1u8);
    }
    while (x + U512::from(1u8)) * (x + U512::from(1u8)) <= v {
        x += U512::from(1u8);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: u128) -> Wad {
        Wad::from_raw(v)
    }

    #[test]
    fn wad_mul_examples() {
        assert_eq!(wad_mul(w(WAD), w(WAD), Rounding::Down).unwrap(), w(WAD));
        assert_eq!(
            wad_mul(w(3 * WAD), w(15 * WAD / 10), Rounding::Down).unwrap(),
            w(45 * WAD / 10)
        );
        assert_eq!(wad_mul(w(1), w(1), Rounding::Down).unwrap(), w(0));
        assert_eq!(wad_mul(w(1), w(1), Rounding::Up).unwrap(), w(1));
    }

    #[test]
    fn wad_div_examples() {
        assert_eq!(wad_div(w(WAD), w(WAD), Rounding::Down).unwrap(), w(WAD));
        assert_eq!(wad_div(w(WAD), w(2 * WAD), Rounding::Down).unwrap(), w(WAD / 2));
        assert_eq!(wad_div(Amount::from_wei(1), w(3 * WAD), Rounding::Up).unwrap(), Amount::from_wei(1));
        assert_eq!(wad_div(w(1), w(0), Rounding::Down), Err(MathError::DivideByZero));
    }

    #[test]
    fn overflow_is_an_error() {
        let max = Amount::from_u256(U256::MAX);
        assert_eq!(wad_mul(max, w(2 * WAD), Rounding::Down), Err(MathError::Overflow));
        assert_eq!(max.checked_add(Amount::from_wei(1)), Err(MathError::Overflow));
        assert_eq!(Amount::ZERO.checked_sub(Amount::from_wei(1)), Err(MathError::Underflow));
        // 512-bit intermediate: the product overflows 256 bits but the quotient does not.
        let big = Amount::from_u256(U256::MAX / U256::from(2u8));
        assert!(wad_mul(big, w(WAD), Rounding::Down).is_ok());
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(Amount::parse_eth("1.5").unwrap(), Amount::from_wei(15 * WAD / 10));
        assert_eq!(Amount::parse_eth("0.000000000000000001").unwrap(), Amount::from_wei(1));
        assert_eq!(Amount::parse_eth("100").unwrap(), Amount::from_eth(100));
        assert!(Amount::parse_eth("1.0000000000000000001").is_err());
        assert!(Amount::parse_eth("-1").is_err());
        assert!(Amount::parse_eth("").is_err());
        assert_eq!(Wad::parse_decimal("1.05").unwrap(), w(105 * WAD / 100));
        assert_eq!(Wad::parse_decimal(".5").unwrap(), w(WAD / 2));
        assert_eq!(w(105 * WAD / 100).to_decimal_string(), "1.05");
        assert_eq!(Amount::from_eth(3).to_eth_string(), "3");
    }

    #[test]
    fn signed_amount_ordering_and_display() {
        let a = SignedAmount::diff(Amount::from_wei(5), Amount::from_wei(8));
        assert_eq!(a.to_string(), "-3");
        assert!(a < SignedAmount::ZERO);
        assert_eq!(SignedAmount::diff(Amount::from_wei(8), Amount::from_wei(8)), SignedAmount::ZERO);
        assert_eq!("-3".parse::<SignedAmount>().unwrap(), a);
        assert_eq!("-0".parse::<SignedAmount>().unwrap(), SignedAmount::ZERO);
        let b = a.checked_add(SignedAmount::positive(Amount::from_wei(10))).unwrap();
        assert_eq!(b.to_string(), "7");
    }

    #[test]
    fn isqrt_is_floor() {
        for v in [0u64, 1, 2, 3, 4, 15, 16, 17, 1_000_000, u64::MAX] {
            let r = isqrt512(U512::from(v));
            let exp = (v as f64).sqrt().floor() as u64;
            // f64 is inexact near u64::MAX; compare by definition instead.
            let r64: u64 = r.to();
            assert!((r64 as u128) * (r64 as u128) <= v as u128);
            assert!((r64 as u128 + 1) * (r64 as u128 + 1) > v as u128);
            if v < 1 << 50 {
                assert_eq!(r64, exp);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn u256_any() -> impl Strategy<Value = U256> {
            (any::<u128>(), 0u32..80).prop_map(|(lo, shift)| U256::from(lo) << shift as usize)
        }

        proptest! {
            #[test]
            fn floor_and_ceil_bracket_exact(a in u256_any(), b in any::<u128>()) {
                let a = Amount::from_u256(a);
                let b = Wad::from_raw(b);
                if let (Ok(lo), Ok(hi)) = (wad_mul(a, b, Rounding::Down), wad_mul(a, b, Rounding::Up)) {
                    let exact = U512::from(a.as_u256()) * U512::from(b.as_u256());
                    let scale = U512::from(WAD);
                    prop_assert!(U512::from(lo.as_u256()) * scale <= exact);
                    prop_assert!(U512::from(hi.as_u256()) * scale >= exact);
                    prop_assert!(hi.as_u256() - lo.as_u256() <= U256::from(1u8));
                }
            }

            #[test]
            fn mul_then_div_round_trips(a in any::<u128>(), b in (WAD..WAD * 1_000_000)) {
                let a = Amount::from_wei(a);
                let b = Wad::from_raw(b);
                let m = wad_mul(a, b, Rounding::Down).unwrap();
                let back = wad_div(m, b, Rounding::Down).unwrap();
                let diff = if back > a { back.checked_sub(a).unwrap() } else { a.checked_sub(back).unwrap() };
                prop_assert!(diff <= Amount::from_wei(1));
            }

            #[test]
            fn inputs_are_values(a in any::<u128>(), b in any::<u128>()) {
                let x = Amount::from_wei(a);
                let y = Wad::from_raw(b);
                let _ = wad_mul(x, y, Rounding::Up);
                prop_assert_eq!(x, Amount::from_wei(a));
                prop_assert_eq!(y, Wad::from_raw(b));
            }
        }
    }
}
