use super::{ArbContext, ArbError, ArbOutcome, ArbStrategy, Direction, TxCostModel};
use crate::amm::Token;
use crate::analytics::trace::tx_hash;
use crate::fixedmath::{Amount, Rounding, SignedAmount, Wad};
use crate::lsd::LsdError;
use crate::scenario::world::{TxError, World};

fn current_hash(world: &World) -> String {
    tx_hash(world.market.block, world.next_tx_index())
}

/// Stakes `x0` ETH, sells the minted LSD in `pool`, pays the cost; one
/// transaction.
pub fn arb_stake_swap(
    world: &mut World,
    sender: &str,
    protocol: &str,
    pool: &str,
    x0: Amount,
    cost: &TxCostModel,
) -> Result<ArbOutcome, ArbError> {
    let c = cost.cost()?;
    let hash = current_hash(world);
    let mut out = world.transact(sender, |tx| -> Result<ArbOutcome, ArbError> {
        let y = tx.stake(protocol, x0)?;
        let x1 = tx.swap(pool, Token::Lsd, y)?;
        tx.pay_gas(c)?;
        Ok(ArbOutcome::new(Direction::StakeSwap, x0, x1, c)?)
    })?;
    out.tx_hashes.push(hash);
    Ok(out)
}

/// The stake-swap body financed by a flash loan from `lender`; the loan
/// plus its fee is repaid before the cost is paid. A shortfall reverts
/// everything with `FlashLoanDefault`.
pub fn arb_flash_loan(
    world: &mut World,
    sender: &str,
    lender: &str,
    protocol: &str,
    pool: &str,
    x0: Amount,
    cost: &TxCostModel,
) -> Result<ArbOutcome, ArbError> {
    let c = cost.cost()?;
    let hash = current_hash(world);
    let mut out = world.transact(sender, |tx| -> Result<ArbOutcome, ArbError> {
        let owed = tx.flash_borrow(lender, x0)?;
        let y = tx.stake(protocol, x0)?;
        let x1 = tx.swap(pool, Token::Lsd, y)?;
        tx.flash_repay(lender, owed)?;
        tx.pay_gas(c)?;
        let fee = owed.checked_sub(x0)?;
        let mut o = ArbOutcome::new(Direction::StakeSwap, x0, x1, c.checked_add(fee)?)?;
        o.flash_fee = fee;
        o.used_flash_loan = true;
        Ok(o)
    })?;
    out.tx_hashes.push(hash);
    Ok(out)
}

/// `m·(1/p − 1)`: revenue of buying LSD at pool price `p` and redeeming it
/// at par, before slippage, fees and cost.
pub fn idealized_unstake_revenue(m: Amount, p2nd: Wad) -> Result<SignedAmount, ArbError> {
    let lsd = m.mul_div(Amount::from_wei(crate::fixedmath::WAD), Amount::from_u256(p2nd.as_u256()), Rounding::Down)?;
    Ok(SignedAmount::diff(lsd, m))
}

/// First leg of the unstaking direction: buy LSD with `m` ETH and pay the
/// cost. Returns the LSD received.
pub fn swap_leg(
    world: &mut World,
    sender: &str,
    pool: &str,
    m: Amount,
    cost: &TxCostModel,
) -> Result<Amount, ArbError> {
    let c = cost.cost()?;
    world.transact(sender, |tx| -> Result<Amount, ArbError> {
        let y = tx.swap(pool, Token::Eth, m)?;
        tx.pay_gas(c)?;
        Ok(y)
    })
}

/// Second leg: redeem `lsd` in the primary market.
pub fn unstake_leg(world: &mut World, sender: &str, protocol: &str, lsd: Amount) -> Result<Amount, ArbError> {
    world.transact(sender, |tx| -> Result<Amount, ArbError> { Ok(tx.unstake(protocol, lsd)?) })
}

/// Buys LSD with `m` ETH, then unstakes it in the next transaction of the
/// same block. Both legs are checked on a fork first, so either both commit
/// or neither does.
pub fn arb_swap_unstake(
    world: &mut World,
    sender: &str,
    protocol: &str,
    pool: &str,
    m: Amount,
    cost: &TxCostModel,
) -> Result<ArbOutcome, ArbError> {
    if !world.market.shapella {
        return Err(TxError::Lsd(LsdError::WithdrawalsDisabled).into());
    }
    let p2nd = world.market.pool(pool)?.pool.spot_price().map_err(TxError::from)?;
    let mut probe = world.fork();
    let y = swap_leg(&mut probe, sender, pool, m, cost)?;
    unstake_leg(&mut probe, sender, protocol, y)?;

    let h1 = current_hash(world);
    let y = swap_leg(world, sender, pool, m, cost)?;
    let h2 = current_hash(world);
    let x1 = unstake_leg(world, sender, protocol, y)?;
    let mut o = ArbOutcome::new(Direction::SwapUnstake, m, x1, cost.cost()?)?;
    o.idealized_revenue = Some(idealized_unstake_revenue(m, p2nd)?);
    o.tx_hashes = vec![h1, h2];
    Ok(o)
}

/// Returned by [`arb_with_prerequisite`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrerequisiteOutcome {
    /// Hash and LSD minted by the prerequisite stake, when one was made.
    pub stake_tx: Option<(String, Amount)>,
    pub arb: ArbOutcome,
}

/// Prerequisite stake of `stake` ETH (which assigns as much queued ETH and
/// frees that capacity), then a flash-loan arbitrage in the next
/// transaction. The pair is one bundle: if the arbitrage fails the stake is
/// undone too. A zero stake skips the first transaction.
///
/// The staked ETH comes back as LSD at the primary rate, so it is not
/// charged against the arbitrage profit.
#[allow(clippy::too_many_arguments)]
pub fn arb_with_prerequisite(
    world: &mut World,
    sender: &str,
    lender: &str,
    protocol: &str,
    pool: &str,
    stake: Amount,
    x0: Amount,
    cost: &TxCostModel,
) -> Result<PrerequisiteOutcome, ArbError> {
    let backup = world.clone();
    let run = |world: &mut World| -> Result<PrerequisiteOutcome, ArbError> {
        let stake_tx = if stake.is_zero() {
            None
        } else {
            let h = current_hash(world);
            let minted = world.transact(sender, |tx| -> Result<Amount, ArbError> {
                Ok(tx.prerequisite_stake(protocol, stake)?)
            })?;
            Some((h, minted))
        };
        let mut arb = arb_flash_loan(world, sender, lender, protocol, pool, x0, cost)?;
        arb.prerequisite_stake = stake;
        Ok(PrerequisiteOutcome { stake_tx, arb })
    };
    let r = run(world);
    if r.is_err() {
        *world = backup;
    }
    r
}

#[derive(Debug, Clone, Copy)]
pub struct StakeSwapStrategy;

impl ArbStrategy for StakeSwapStrategy {
    fn name(&self) -> &'static str {
        "stake-swap"
    }

    fn direction(&self) -> Direction {
        Direction::StakeSwap
    }

    fn execute(&self, world: &mut World, ctx: &ArbContext, x0: Amount) -> Result<ArbOutcome, ArbError> {
        arb_stake_swap(world, &ctx.sender, &ctx.protocol, &ctx.pool, x0, &ctx.cost)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlashLoanStrategy;

impl ArbStrategy for FlashLoanStrategy {
    fn name(&self) -> &'static str {
        "flash-loan"
    }

    fn direction(&self) -> Direction {
        Direction::StakeSwap
    }

    fn execute(&self, world: &mut World, ctx: &ArbContext, x0: Amount) -> Result<ArbOutcome, ArbError> {
        let lender = ctx.lender.as_deref().ok_or(ArbError::MissingContext {
            strategy: "flash-loan",
            what: "a lender",
        })?;
        arb_flash_loan(world, &ctx.sender, lender, &ctx.protocol, &ctx.pool, x0, &ctx.cost)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SwapUnstakeStrategy;

impl ArbStrategy for SwapUnstakeStrategy {
    fn name(&self) -> &'static str {
        "swap-unstake"
    }

    fn direction(&self) -> Direction {
        Direction::SwapUnstake
    }

    fn execute(&self, world: &mut World, ctx: &ArbContext, x0: Amount) -> Result<ArbOutcome, ArbError> {
        arb_swap_unstake(world, &ctx.sender, &ctx.protocol, &ctx.pool, x0, &ctx.cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amm::WeightedPool;
    use crate::fixedmath::WAD;
    use crate::lsd::{RebasingLsd, RewardBearingLsd};
    use crate::scenario::world::{Lender, Market, PoolSlot};

    fn eth(n: u128) -> Amount {
        Amount::from_wei(n * WAD)
    }

    /// Weighted pool holding `lsd` LSD and `weth` ETH of the named protocol.
    fn world_with(protocol: Box<dyn crate::lsd::LsdProtocol>, lsd: Amount, weth: Amount) -> World {
        let mut m = Market::new();
        m.protocols.insert("p".into(), protocol);
        m.pools.insert(
            "pool".into(),
            PoolSlot {
                protocol: "p".into(),
                pool: Box::new(WeightedPool::new(0).unwrap()),
            },
        );
        m.lenders.insert(
            "lender".into(),
            Lender {
                liquidity: eth(10_000),
                fee: Wad::ZERO,
            },
        );
        m.eth.insert("seed".into(), lsd.checked_add(weth).unwrap());
        let mut w = World::new(m);
        w.transact("seed", |tx| -> Result<(), TxError> {
            let got = tx.stake("p", lsd)?;
            assert_eq!(got, lsd);
            Ok(())
        })
        .unwrap();
        w.transact("seed", |tx| tx.add_liquidity("pool", [lsd, weth])).unwrap();
        w.market.eth.insert("bot".into(), eth(100));
        w.advance_to(1, 12);
        w
    }

    fn rebasing_world(lsd: Amount, weth: Amount) -> World {
        world_with(Box::new(RebasingLsd::new(Wad::ZERO, "treasury").unwrap()), lsd, weth)
    }

    #[test]
    fn weighted_stake_swap_example() {
        let mut w = rebasing_world(eth(1000), eth(1010));
        let o = arb_stake_swap(&mut w, "bot", "p", "pool", eth(1), &TxCostModel::default()).unwrap();
        // 1010 * 1 / 1001
        assert_eq!(o.gross_out, Amount::from_wei(1_008_991_008_991_008_991));
        assert_eq!(o.profit, SignedAmount::positive(Amount::from_wei(8_991_008_991_008_991)));
    }

    #[test]
    fn losing_trade_still_commits() {
        let mut w = rebasing_world(eth(1000), eth(1010));
        let cost = TxCostModel {
            gas_per_arb: 1,
            gas_price: Amount::from_wei(WAD / 100),
            bribe: Amount::ZERO,
        };
        let n = w.trace.len();
        let o = arb_stake_swap(&mut w, "bot", "p", "pool", eth(1), &cost).unwrap();
        assert!(o.profit.is_negative());
        assert_eq!(w.trace.len(), n + 3);
    }

    #[test]
    fn no_discrepancy_no_profit() {
        let mut w = rebasing_world(eth(1000), eth(1000));
        let o = arb_stake_swap(&mut w, "bot", "p", "pool", eth(1), &TxCostModel::default()).unwrap();
        assert!(!o.profit.is_positive());
    }

    #[test]
    fn fee_free_flash_loan_matches_own_capital() {
        let mut a = rebasing_world(eth(1000), eth(1010));
        let mut b = a.clone();
        let own = arb_stake_swap(&mut a, "bot", "p", "pool", eth(1), &TxCostModel::default()).unwrap();
        b.market.eth.remove("bot");
        let fl = arb_flash_loan(&mut b, "bot", "lender", "p", "pool", eth(1), &TxCostModel::default()).unwrap();
        assert_eq!(fl.profit, own.profit);
        assert_eq!(b.market.eth_of("bot"), own.profit.magnitude());
    }

    #[test]
    fn flash_loan_default_restores_state() {
        let mut w = rebasing_world(eth(1000), eth(1010));
        w.market.lenders.get_mut("lender").unwrap().fee = Wad::from_bps(100);
        let before = w.snapshot();
        let err = arb_flash_loan(&mut w, "nobody", "lender", "p", "pool", eth(1), &TxCostModel::default()).unwrap_err();
        assert!(matches!(err, ArbError::Tx(TxError::FlashLoanDefault { .. })));
        assert_eq!(w.snapshot(), before);
        let err = arb_flash_loan(&mut w, "bot", "lender", "p", "pool", eth(20_000), &TxCostModel::default()).unwrap_err();
        assert!(matches!(err, ArbError::Tx(TxError::InsufficientLenderLiquidity { .. })));
        assert_eq!(w.snapshot(), before);
    }

    #[test]
    fn idealized_revenue_at_98() {
        let r = idealized_unstake_revenue(eth(100), Wad::from_raw(980_000_000_000_000_000)).unwrap();
        assert_eq!(r, SignedAmount::positive(Amount::from_wei(2_040_816_326_530_612_244)));
        assert_eq!(idealized_unstake_revenue(eth(100), Wad::ONE).unwrap(), SignedAmount::ZERO);
    }

    #[test]
    fn swap_unstake_needs_shapella() {
        let mut w = rebasing_world(eth(1000), eth(980));
        let before = w.snapshot();
        let err = arb_swap_unstake(&mut w, "bot", "p", "pool", eth(1), &TxCostModel::default()).unwrap_err();
        assert_eq!(err, ArbError::Tx(TxError::Lsd(LsdError::WithdrawalsDisabled)));
        assert_eq!(w.snapshot(), before);
        w.market.shapella = true;
        let o = arb_swap_unstake(&mut w, "bot", "p", "pool", eth(1), &TxCostModel::default()).unwrap();
        assert!(o.profit.is_positive());
        assert_eq!(o.tx_hashes.len(), 2);
        assert_ne!(o.tx_hashes[0], o.tx_hashes[1]);
    }

    fn full_rocket_world() -> World {
        // Capacity 100, pool balance 100: no room for any stake.
        let rb = RewardBearingLsd::with_state(eth(1000), Amount::ZERO, eth(1000), "whale", eth(100)).unwrap();
        let mut w = world_with(Box::new(rb), eth(100), eth(120));
        let p = w.market.protocol_mut("p").unwrap();
        let rb = p.as_any_mut().downcast_mut::<RewardBearingLsd>().unwrap();
        rb.deposit_pool.max_capacity = rb.deposit_pool.balance;
        w
    }

    #[test]
    fn prerequisite_stake_barrier() {
        let mut w = full_rocket_world();
        let cost = TxCostModel::default();
        let err = arb_flash_loan(&mut w, "bot", "lender", "p", "pool", eth(16), &cost).unwrap_err();
        assert!(matches!(err, ArbError::Tx(TxError::Lsd(LsdError::DepositPoolFull { .. }))));

        let mut replay = w.clone();
        let before = replay.snapshot();
        let err = arb_with_prerequisite(&mut replay, "bot", "lender", "p", "pool", Amount::ZERO, eth(16), &cost).unwrap_err();
        assert!(matches!(err, ArbError::Tx(TxError::Lsd(LsdError::DepositPoolFull { .. }))));
        assert_eq!(replay.snapshot(), before);

        let r = arb_with_prerequisite(&mut w, "bot", "lender", "p", "pool", eth(16), eth(16), &cost).unwrap();
        let (h, minted) = r.stake_tx.unwrap();
        assert_eq!(minted, eth(16));
        assert!(r.arb.profit.is_positive());
        assert_eq!(r.arb.prerequisite_stake, eth(16));
        // Consecutive indexes in one block.
        assert_eq!(h, "0x0000000000010000");
        assert_eq!(r.arb.tx_hashes[0], "0x0000000000010001");
    }
}
