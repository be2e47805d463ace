use super::{ArbContext, ArbError, ArbStrategy, Direction};
use crate::fixedmath::{Amount, SignedAmount};
use crate::scenario::world::{TxError, World};

/// Size and expected profit picked by [`optimal_size`]; `x0 = 0` means no
/// trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeChoice {
    pub x0: Amount,
    pub profit: SignedAmount,
}

impl SizeChoice {
    pub const NONE: SizeChoice = SizeChoice {
        x0: Amount::ZERO,
        profit: SignedAmount::ZERO,
    };
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const REL_TOL: f64 = 1e-7;
const ABS_TOL: f64 = 1e6;

/// Profit per ETH of an infinitesimal trade in the strategy's direction,
/// before fixed costs.
pub fn marginal_profit(world: &World, strategy: &dyn ArbStrategy, ctx: &ArbContext) -> Result<f64, ArbError> {
    let slot = world.market.pool(&ctx.pool)?;
    let spot = slot.pool.spot_price().map_err(TxError::from)?.to_f64();
    let keep = 1.0 - slot.pool.fee_bps() as f64 / 10_000.0;
    let primary = world.market.protocol(&ctx.protocol)?.primary_rate().to_f64();
    let financing = match (strategy.name(), ctx.lender.as_deref()) {
        ("flash-loan", Some(l)) => world.market.lenders.get(l).map(|l| l.fee.to_f64()).unwrap_or(0.0),
        _ => 0.0,
    };
    Ok(match strategy.direction() {
        Direction::StakeSwap => spot * keep / primary - 1.0 - financing,
        Direction::SwapUnstake => primary * keep / spot - 1.0 - financing,
    })
}

fn to_u128(a: Amount, what: &str) -> Result<u128, ArbError> {
    let v = a.as_u256();
    if v.bit_len() > 120 {
        return Err(ArbError::InvalidBounds(format!("{what} bound {a} is too large")));
    }
    Ok(v.to::<u128>())
}

/// Maximizes simulated profit over `bounds` by golden-section search.
///
/// Every evaluation runs the strategy on a fork, so `world` is untouched.
/// Sizes at which the strategy fails are excluded by first bisecting for
/// the largest feasible size. Ties go to the smaller size, and a best
/// profit of zero or less yields [`SizeChoice::NONE`].
pub fn optimal_size(
    world: &World,
    strategy: &dyn ArbStrategy,
    ctx: &ArbContext,
    bounds: (Amount, Amount),
) -> Result<SizeChoice, ArbError> {
    let lo = to_u128(bounds.0, "lower")?;
    let hi = to_u128(bounds.1, "upper")?;
    if lo == 0 {
        return Err(ArbError::InvalidBounds("lower bound must be at least 1 wei".into()));
    }
    if lo > hi {
        return Err(ArbError::InvalidBounds(format!("lower {lo} exceeds upper {hi}")));
    }
    // Profit is concave, so it never beats the marginal rate at zero times
    // the largest size, less the fixed cost.
    let m0 = marginal_profit(world, strategy, ctx).unwrap_or(f64::INFINITY);
    let cost = ctx.cost.cost()?.to_f64();
    if (m0 + 1e-12).max(0.0) * hi as f64 <= cost {
        return Ok(SizeChoice::NONE);
    }

    let eval = |x: u128| -> Option<SignedAmount> {
        let mut f = world.fork();
        strategy.execute(&mut f, ctx, Amount::from_wei(x)).ok().map(|o| o.profit)
    };

    let mut best: Option<(u128, SignedAmount)> = None;
    let mut consider = |x: u128, p: Option<SignedAmount>| {
        if let Some(p) = p {
            let better = match best {
                None => true,
                Some((bx, bp)) => p > bp || (p == bp && x < bx),
            };
            if better {
                best = Some((x, p));
            }
        }
    };

    let p_lo = eval(lo);
    if p_lo.is_none() {
        return Ok(SizeChoice::NONE);
    }
    consider(lo, p_lo);
    let mut top = hi;
    let p_hi = eval(hi);
    if p_hi.is_none() {
        let (mut ok, mut bad) = (lo, hi);
        while bad - ok > 1 && (bad - ok) as f64 > ok as f64 * REL_TOL {
            let mid = ok + (bad - ok) / 2;
            if eval(mid).is_some() {
                ok = mid;
            } else {
                bad = mid;
            }
        }
        top = ok;
        consider(top, eval(top));
    } else {
        consider(hi, p_hi);
    }

    let (mut a, mut b) = (lo as f64, top as f64);
    let score = |p: Option<SignedAmount>| p.map(|p| p.to_f64()).unwrap_or(f64::NEG_INFINITY);
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let (mut pc, mut pd) = (eval(c as u128), eval(d as u128));
    consider(c as u128, pc);
    consider(d as u128, pd);
    for _ in 0..200 {
        if b - a <= ABS_TOL.max(b * REL_TOL) {
            break;
        }
        if score(pc) >= score(pd) {
            b = d;
            d = c;
            pd = pc;
            c = b - (b - a) * INV_PHI;
            pc = eval(c as u128);
            consider(c as u128, pc);
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + (b - a) * INV_PHI;
            pd = eval(d as u128);
            consider(d as u128, pd);
        }
    }
    match best {
        Some((x, p)) if p.is_positive() => Ok(SizeChoice {
            x0: Amount::from_wei(x),
            profit: p,
        }),
        _ => Ok(SizeChoice::NONE),
    }
}
