//! Arbitrary-precision reference implementations used by the integration
//! tests. Nothing here shares code with the library under test.
#![allow(dead_code)]

pub mod world;

use lsdsim::fixedmath::Amount;
use num_bigint::BigUint;
use num_traits::{One, Zero};

pub const WAD: u128 = 1_000_000_000_000_000_000;

pub fn big(a: Amount) -> BigUint {
    a.to_string().parse().unwrap()
}

pub fn eth(n: u128) -> Amount {
    Amount::from_wei(n * WAD)
}

pub fn wei(n: u128) -> Amount {
    Amount::from_wei(n)
}

pub fn abs_diff(a: &BigUint, b: &BigUint) -> BigUint {
    if a > b {
        a - b
    } else {
        b - a
    }
}

/// Largest `v` in `[lo, hi]` with `pred(v)`, for a predicate true then false.
fn last_true(mut lo: BigUint, mut hi: BigUint, pred: impl Fn(&BigUint) -> bool) -> BigUint {
    assert!(pred(&lo));
    while lo < hi {
        let mid = (&lo + &hi + 1u8) >> 1;
        if pred(&mid) {
            lo = mid;
        } else {
            hi = mid - 1u8;
        }
    }
    lo
}

/// Smallest `v` in `[lo, hi]` with `pred(v)`, for a predicate false then true.
fn first_true(mut lo: BigUint, mut hi: BigUint, pred: impl Fn(&BigUint) -> bool) -> BigUint {
    assert!(pred(&hi));
    while lo < hi {
        let mid = (&lo + &hi) >> 1;
        if pred(&mid) {
            hi = mid;
        } else {
            lo = mid + 1u8;
        }
    }
    lo
}

/// Stableswap invariant residual sign: A·4·(x+y) + D ≥ A·4·D + D³/(4xy).
fn ss_d_ok(x: &BigUint, y: &BigUint, ann: &BigUint, d: &BigUint) -> bool {
    let xy4 = x * y * 4u8;
    &xy4 * (ann * (x + y) + d) >= &xy4 * ann * d + d * d * d
}

/// floor(D) by bisection.
pub fn ss_d(x: &BigUint, y: &BigUint, amp: u64) -> BigUint {
    let ann = BigUint::from(amp) * 4u8;
    last_true(BigUint::zero(), x + y, |d| ss_d_ok(x, y, &ann, d))
}

/// Exact stableswap output for `net` of token `i` in, floored, evaluated
/// with balances scaled by 10^18 so the curve is resolved far below a wei.
pub fn ss_out(balances: [Amount; 2], i: usize, net: Amount, amp: u64) -> BigUint {
    let k = BigUint::from(WAD);
    let ann = BigUint::from(amp) * 4u8;
    let x = big(balances[i]) * &k;
    let y = big(balances[1 - i]) * &k;
    let d = last_true(BigUint::zero(), &x + &y, |d| ss_d_ok(&x, &y, &ann, d));
    let x_new = &x + big(net) * &k;
    // Smallest balance keeping (x_new, y) on or above the curve.
    let y_root = first_true(BigUint::one(), &y + &k, |yy| ss_d_ok(&x_new, yy, &ann, &d));
    if y_root > y {
        return BigUint::zero();
    }
    (y - y_root) / k
}

/// Constant product on the virtual reserves of a concentrated pool.
/// `sqrt` is √P·10^36. Largest integer `out` with (x+Δ)(y−out) ≥ L².
pub fn cl_out(liquidity: Amount, sqrt: Amount, lsd_in: bool, net: Amount) -> BigUint {
    let q: BigUint = BigUint::from(10u8).pow(36);
    let l = big(liquidity);
    let s = big(sqrt);
    let d = big(net);
    // x = L·Q/s and y = L·s/Q, cleared of denominators.
    if lsd_in {
        let y_cap = &l * &s / &q;
        last_true(BigUint::zero(), y_cap, |out| {
            let lhs = (&l * &q + &d * &s) * (&l * &s);
            let sub = (&l * &q + &d * &s) * out * &q;
            lhs >= sub + &l * &l * &s * &q
        })
    } else {
        let x_cap = &l * &q / &s;
        last_true(BigUint::zero(), x_cap, |out| {
            let lhs = (&l * &s + &d * &q) * (&l * &q);
            let sub = (&l * &s + &d * &q) * out * &s;
            lhs >= sub + &l * &l * &s * &q
        })
    }
}

/// Constant-product output, floored.
pub fn cp_out(b_in: Amount, b_out: Amount, net: Amount) -> BigUint {
    big(b_out) * big(net) / (big(b_in) + big(net))
}
