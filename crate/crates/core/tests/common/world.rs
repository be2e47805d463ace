use lsdsim::amm::Pool;
use lsdsim::fixedmath::{Amount, Wad};
use lsdsim::lsd::RebasingLsd;
use lsdsim::scenario::world::{Lender, Market, PoolSlot, World};

use super::eth;

/// One rebasing protocol `p` at share price 1, one pool, one lender, and a
/// well-funded `bot`; the trace starts empty.
pub fn market(pool: Box<dyn Pool>, lsd: Amount, eth_side: Amount, flash_fee: Wad) -> World {
    let mut m = Market::new();
    m.block = 1;
    m.timestamp = 12;
    m.shapella = true;
    let supply = eth(10_000_000);
    m.protocols.insert(
        "p".into(),
        Box::new(RebasingLsd::with_state(supply, supply, "genesis", Wad::ZERO).unwrap()),
    );
    m.lenders.insert(
        "lender".into(),
        Lender {
            liquidity: eth(1_000_000),
            fee: flash_fee,
        },
    );
    m.pools.insert(
        "pool".into(),
        PoolSlot {
            protocol: "p".into(),
            pool,
        },
    );
    let mut w = World::new(m);
    w.market.credit_eth("genesis", eth_side).unwrap();
    w.transact("genesis", |tx| tx.add_liquidity("pool", [lsd, eth_side])).unwrap();
    w.market.credit_eth("bot", eth(1_000_000)).unwrap();
    World::new(w.market)
}
