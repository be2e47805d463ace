use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::amm::{self, AmmError, Deposit, Pool, Token};
use crate::analytics::trace::{tx_hash, Asset, Event, EventKind, EventTrace, Venue};
use crate::fixedmath::{Amount, MathError, Rounding, Wad};
use crate::lsd::{self, LsdError, LsdProtocol, Mechanism};

pub const GAS_SINK: &str = "gas-sink";
pub const ORACLE: &str = "oracle";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("lsd: {0}")]
    Lsd(#[from] LsdError),
    #[error("pool: {0}")]
    Amm(#[from] AmmError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("{account} holds {available} ETH but {needed} is required")]
    InsufficientEth {
        account: String,
        needed: Amount,
        available: Amount,
    },
    #[error("lender {lender} holds {available} but {needed} was requested")]
    InsufficientLenderLiquidity {
        lender: String,
        needed: Amount,
        available: Amount,
    },
    #[error("flash loan default: owed {owed}, borrower holds {available}")]
    FlashLoanDefault { owed: Amount, available: Amount },
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("unknown pool {0:?}")]
    UnknownPool(String),
    #[error("unknown lender {0:?}")]
    UnknownLender(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// A pool together with the protocol whose token it trades.
#[derive(Debug, Clone)]
pub struct PoolSlot {
    pub protocol: String,
    pub pool: Box<dyn Pool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lender {
    pub liquidity: Amount,
    pub fee: Wad,
}

/// Every piece of mutable market state. Cloning it is how transactions
/// roll back.
#[derive(Debug, Clone)]
pub struct Market {
    pub block: u64,
    pub timestamp: u64,
    pub shapella: bool,
    pub protocols: BTreeMap<String, Box<dyn LsdProtocol>>,
    pub pools: BTreeMap<String, PoolSlot>,
    pub lenders: BTreeMap<String, Lender>,
    pub eth: BTreeMap<String, Amount>,
    pub rewards_injected: Amount,
    pub slashed: Amount,
}

pub fn pool_account(pool: &str) -> String {
    format!("pool:{pool}")
}

impl Market {
    pub fn new() -> Self {
        Market {
            block: 0,
            timestamp: 0,
            shapella: false,
            protocols: BTreeMap::new(),
            pools: BTreeMap::new(),
            lenders: BTreeMap::new(),
            eth: BTreeMap::new(),
            rewards_injected: Amount::ZERO,
            slashed: Amount::ZERO,
        }
    }

    pub fn eth_of(&self, account: &str) -> Amount {
        self.eth.get(account).copied().unwrap_or(Amount::ZERO)
    }

    pub fn credit_eth(&mut self, account: &str, amount: Amount) -> Result<(), TxError> {
        if amount.is_zero() {
            return Ok(());
        }
        let e = self.eth.entry(account.to_string()).or_insert(Amount::ZERO);
        *e = e.checked_add(amount)?;
        Ok(())
    }

    pub fn debit_eth(&mut self, account: &str, amount: Amount) -> Result<(), TxError> {
        let have = self.eth_of(account);
        if have < amount {
            return Err(TxError::InsufficientEth {
                account: account.to_string(),
                needed: amount,
                available: have,
            });
        }
        let left = have.checked_sub(amount)?;
        if left.is_zero() {
            self.eth.remove(account);
        } else {
            self.eth.insert(account.to_string(), left);
        }
        Ok(())
    }

    pub fn protocol(&self, name: &str) -> Result<&dyn LsdProtocol, TxError> {
        self.protocols
            .get(name)
            .map(|p| p.as_ref())
            .ok_or_else(|| TxError::UnknownProtocol(name.to_string()))
    }

    pub fn protocol_mut(&mut self, name: &str) -> Result<&mut Box<dyn LsdProtocol>, TxError> {
        self.protocols
            .get_mut(name)
            .ok_or_else(|| TxError::UnknownProtocol(name.to_string()))
    }

    pub fn pool(&self, name: &str) -> Result<&PoolSlot, TxError> {
        self.pools.get(name).ok_or_else(|| TxError::UnknownPool(name.to_string()))
    }

    fn pool_mut(&mut self, name: &str) -> Result<&mut PoolSlot, TxError> {
        self.pools.get_mut(name).ok_or_else(|| TxError::UnknownPool(name.to_string()))
    }

    /// Re-reads a pool's LSD reserve from its token balance when the token
    /// rebases.
    fn sync_pool(&mut self, pool: &str) -> Result<(), TxError> {
        let slot = self.pools.get(pool).ok_or_else(|| TxError::UnknownPool(pool.to_string()))?;
        let proto = self.protocol(&slot.protocol)?;
        if proto.mechanism() != Mechanism::Rebasing {
            return Ok(());
        }
        let bal = proto.balance_of(&pool_account(pool));
        self.pool_mut(pool)?.pool.sync_lsd_reserve(bal)?;
        Ok(())
    }

    fn sync_pools_of(&mut self, protocol: &str) -> Result<(), TxError> {
        let names: Vec<String> = self
            .pools
            .iter()
            .filter(|(_, s)| s.protocol == protocol)
            .map(|(n, _)| n.clone())
            .collect();
        for n in names {
            self.sync_pool(&n)?;
        }
        Ok(())
    }

    /// ETH held anywhere in the market, including the gas sink.
    pub fn total_eth(&self) -> Result<Amount, MathError> {
        let mut t = Amount::ZERO;
        for v in self.eth.values() {
            t = t.checked_add(*v)?;
        }
        for s in self.pools.values() {
            t = t.checked_add(s.pool.holdings()[1])?;
        }
        for l in self.lenders.values() {
            t = t.checked_add(l.liquidity)?;
        }
        for p in self.protocols.values() {
            t = t.checked_add(p.eth_held())?;
        }
        Ok(t)
    }

    pub fn to_value(&self) -> Value {
        let protocols: BTreeMap<&String, Value> = self
            .protocols
            .iter()
            .map(|(n, p)| (n, serde_json::json!({"kind": p.kind(), "state": p.snapshot()})))
            .collect();
        let pools: BTreeMap<&String, Value> = self
            .pools
            .iter()
            .map(|(n, s)| {
                (
                    n,
                    serde_json::json!({"kind": s.pool.kind(), "protocol": s.protocol, "state": s.pool.snapshot()}),
                )
            })
            .collect();
        serde_json::json!({
            "block": self.block,
            "timestamp": self.timestamp,
            "shapella": self.shapella,
            "protocols": protocols,
            "pools": pools,
            "lenders": self.lenders,
            "eth": self.eth,
            "rewards_injected": self.rewards_injected,
            "slashed": self.slashed,
        })
    }

    pub fn from_value(v: Value) -> Result<Market, SnapshotError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Entry {
            kind: String,
            #[serde(default)]
            protocol: Option<String>,
            state: Value,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            block: u64,
            timestamp: u64,
            shapella: bool,
            protocols: BTreeMap<String, Entry>,
            pools: BTreeMap<String, Entry>,
            lenders: BTreeMap<String, Lender>,
            eth: BTreeMap<String, Amount>,
            rewards_injected: Amount,
            slashed: Amount,
        }
        let corrupt = |m: String| SnapshotError::CorruptSnapshot(m);
        let raw: Raw = serde_path_to_error::deserialize(v).map_err(|e| corrupt(format!("{}: {}", e.path(), e.inner())))?;
        let mut protocols = BTreeMap::new();
        for (n, e) in raw.protocols {
            let p = lsd::restore(&e.kind, e.state).map_err(|err| corrupt(format!("protocols.{n}: {err}")))?;
            protocols.insert(n, p);
        }
        let mut pools = BTreeMap::new();
        for (n, e) in raw.pools {
            let pool = amm::restore(&e.kind, e.state).map_err(|err| corrupt(format!("pools.{n}: {err}")))?;
            let protocol = e.protocol.ok_or_else(|| corrupt(format!("pools.{n}: missing protocol")))?;
            if !protocols.contains_key(&protocol) {
                return Err(corrupt(format!("pools.{n}: unknown protocol {protocol:?}")));
            }
            pools.insert(n, PoolSlot { protocol, pool });
        }
        Ok(Market {
            block: raw.block,
            timestamp: raw.timestamp,
            shapella: raw.shapella,
            protocols,
            pools,
            lenders: raw.lenders,
            eth: raw.eth,
            rewards_injected: raw.rewards_injected,
            slashed: raw.slashed,
        })
    }
}

impl Default for Market {
    fn default() -> Self {
        Self::new()
    }
}

/// Market state plus the trace of everything that has happened to it.
#[derive(Debug, Clone)]
pub struct World {
    pub market: Market,
    pub trace: EventTrace,
    next_tx: u32,
}

impl World {
    pub fn new(market: Market) -> Self {
        World {
            market,
            trace: EventTrace::new(),
            next_tx: 0,
        }
    }

    /// A scratch copy for what-if evaluation; its trace starts empty.
    pub fn fork(&self) -> World {
        World {
            market: self.market.clone(),
            trace: EventTrace::new(),
            next_tx: self.next_tx,
        }
    }

    pub fn next_tx_index(&self) -> u32 {
        self.next_tx
    }

    pub fn advance_to(&mut self, block: u64, timestamp: u64) {
        if block != self.market.block {
            self.next_tx = 0;
        }
        self.market.block = block;
        self.market.timestamp = timestamp;
    }

    /// Runs `f` as one transaction. On error every state change is rolled
    /// back and nothing is traced; on success the buffered events are
    /// appended under a fresh transaction index.
    pub fn transact<T, E, F>(&mut self, sender: &str, f: F) -> Result<T, E>
    where
        E: From<TxError>,
        F: FnOnce(&mut Tx<'_>) -> Result<T, E>,
    {
        let backup = self.market.clone();
        let (res, events) = {
            let mut tx = Tx {
                market: &mut self.market,
                sender: sender.to_string(),
                block: 0,
                index: self.next_tx,
                events: Vec::new(),
            };
            tx.block = tx.market.block;
            let r = f(&mut tx);
            (r, tx.events)
        };
        match res {
            Ok(v) => {
                if !events.is_empty() {
                    self.trace.events.extend(events);
                    self.next_tx += 1;
                }
                Ok(v)
            }
            Err(e) => {
                self.market = backup;
                Err(e)
            }
        }
    }

    /// Adds consensus rewards to a protocol as an oracle transaction.
    pub fn inject_rewards(&mut self, protocol: &str, rewards: Amount) -> Result<Wad, TxError> {
        self.transact(ORACLE, |tx| tx.distribute_rewards(protocol, rewards))
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let v = serde_json::json!({
            "market": self.market.to_value(),
            "trace": self.trace,
            "next_tx": self.next_tx,
        });
        serde_json::to_vec(&v).expect("world serializes")
    }

    pub fn restore(blob: &[u8]) -> Result<World, SnapshotError> {
        let mut v: Value = serde_json::from_slice(blob).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
        let obj = v
            .as_object_mut()
            .ok_or_else(|| SnapshotError::CorruptSnapshot("not an object".into()))?;
        let take = |o: &mut serde_json::Map<String, Value>, k: &str| {
            o.remove(k).ok_or_else(|| SnapshotError::CorruptSnapshot(format!("missing {k}")))
        };
        let market = Market::from_value(take(obj, "market")?)?;
        let trace: EventTrace = serde_json::from_value(take(obj, "trace")?)
            .map_err(|e| SnapshotError::CorruptSnapshot(format!("trace: {e}")))?;
        let next_tx = take(obj, "next_tx")?
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| SnapshotError::CorruptSnapshot("next_tx".into()))?;
        if let Some(k) = obj.keys().next() {
            return Err(SnapshotError::CorruptSnapshot(format!("unexpected field {k}")));
        }
        Ok(World { market, trace, next_tx })
    }
}

/// Handle on the market inside one open transaction.
pub struct Tx<'a> {
    pub market: &'a mut Market,
    sender: String,
    block: u64,
    index: u32,
    events: Vec<Event>,
}

impl Tx<'_> {
    pub fn sender(&self) -> &str {
        &self.sender
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    fn emit(&mut self, kind: EventKind, venue: Venue, amount_in: Amount, amount_out: Amount) {
        self.events.push(Event {
            block: self.block,
            tx_index: self.index,
            tx_hash: tx_hash(self.block, self.index),
            sender: self.sender.clone(),
            kind,
            venue,
            amount_in,
            amount_out,
            timestamp: self.market.timestamp,
        });
    }

    pub fn stake(&mut self, protocol: &str, eth: Amount) -> Result<Amount, TxError> {
        let sender = self.sender.clone();
        self.market.debit_eth(&sender, eth)?;
        let minted = self.market.protocol_mut(protocol)?.stake(&sender, eth)?;
        self.emit(EventKind::Stake, Venue::new(protocol, Asset::Eth, Asset::Lsd), eth, minted);
        Ok(minted)
    }

    pub fn unstake(&mut self, protocol: &str, lsd: Amount) -> Result<Amount, TxError> {
        let sender = self.sender.clone();
        let shapella = self.market.shapella;
        let eth = self.market.protocol_mut(protocol)?.redeem(&sender, lsd, shapella)?;
        self.market.credit_eth(&sender, eth)?;
        self.emit(EventKind::Unstake, Venue::new(protocol, Asset::Lsd, Asset::Eth), lsd, eth);
        Ok(eth)
    }

    /// Node-operator deposit that assigns the same amount of queued ETH.
    pub fn prerequisite_stake(&mut self, protocol: &str, eth: Amount) -> Result<Amount, TxError> {
        let sender = self.sender.clone();
        self.market.debit_eth(&sender, eth)?;
        let minted = self.market.protocol_mut(protocol)?.prerequisite_stake(&sender, eth)?;
        self.emit(EventKind::Stake, Venue::new(protocol, Asset::Eth, Asset::Lsd), eth, minted);
        self.emit(EventKind::Assign, Venue::plain(protocol), eth, Amount::ZERO);
        Ok(minted)
    }

    pub fn swap(&mut self, pool: &str, token_in: Token, amount: Amount) -> Result<Amount, TxError> {
        let sender = self.sender.clone();
        let acct = pool_account(pool);
        let protocol = self.market.pool(pool)?.protocol.clone();
        let out = match token_in {
            Token::Lsd => {
                self.market.protocol_mut(&protocol)?.transfer(&sender, &acct, amount)?;
                let out = self.market.pool_mut(pool)?.pool.swap(Token::Lsd, amount)?;
                self.market.credit_eth(&sender, out)?;
                out
            }
            Token::Eth => {
                self.market.debit_eth(&sender, amount)?;
                let out = self.market.pool_mut(pool)?.pool.swap(Token::Eth, amount)?;
                self.market.protocol_mut(&protocol)?.transfer(&acct, &sender, out)?;
                out
            }
        };
        self.market.sync_pool(pool)?;
        let (a, b) = match token_in {
            Token::Lsd => (Asset::Lsd, Asset::Eth),
            Token::Eth => (Asset::Eth, Asset::Lsd),
        };
        self.emit(EventKind::Swap, Venue::new(pool, a, b), amount, out);
        Ok(out)
    }

    pub fn add_liquidity(&mut self, pool: &str, amounts: [Amount; 2]) -> Result<Deposit, TxError> {
        let sender = self.sender.clone();
        let acct = pool_account(pool);
        let protocol = self.market.pool(pool)?.protocol.clone();
        let d = self.market.pool_mut(pool)?.pool.add_liquidity(&sender, amounts)?;
        self.market.protocol_mut(&protocol)?.transfer(&sender, &acct, d.used[0])?;
        self.market.debit_eth(&sender, d.used[1])?;
        self.market.sync_pool(pool)?;
        self.emit(EventKind::AddLiquidity, Venue::new(pool, Asset::Lsd, Asset::Lp), d.used[0], Amount::ZERO);
        self.emit(EventKind::AddLiquidity, Venue::new(pool, Asset::Eth, Asset::Lp), d.used[1], d.minted);
        Ok(d)
    }

    pub fn remove_liquidity(&mut self, pool: &str, units: Amount) -> Result<[Amount; 2], TxError> {
        let sender = self.sender.clone();
        let acct = pool_account(pool);
        let protocol = self.market.pool(pool)?.protocol.clone();
        let out = self.market.pool_mut(pool)?.pool.remove_liquidity(&sender, units)?;
        if !out[0].is_zero() {
            self.market.protocol_mut(&protocol)?.transfer(&acct, &sender, out[0])?;
        }
        self.market.credit_eth(&sender, out[1])?;
        self.market.sync_pool(pool)?;
        self.emit(EventKind::RemoveLiquidity, Venue::new(pool, Asset::Lp, Asset::Lsd), Amount::ZERO, out[0]);
        self.emit(EventKind::RemoveLiquidity, Venue::new(pool, Asset::Lp, Asset::Eth), units, out[1]);
        Ok(out)
    }

    /// Borrows `amount` ETH; returns what must be repaid before the
    /// transaction ends.
    pub fn flash_borrow(&mut self, lender: &str, amount: Amount) -> Result<Amount, TxError> {
        let sender = self.sender.clone();
        let l = self
            .market
            .lenders
            .get_mut(lender)
            .ok_or_else(|| TxError::UnknownLender(lender.to_string()))?;
        if l.liquidity < amount {
            return Err(TxError::InsufficientLenderLiquidity {
                lender: lender.to_string(),
                needed: amount,
                available: l.liquidity,
            });
        }
        let owed = amount.checked_add(amount.wad_mul(l.fee, Rounding::Up)?)?;
        l.liquidity = l.liquidity.checked_sub(amount)?;
        self.market.credit_eth(&sender, amount)?;
        self.emit(EventKind::FlashLoan, Venue::new(lender, Asset::Eth, Asset::Eth), amount, owed);
        Ok(owed)
    }

    pub fn flash_repay(&mut self, lender: &str, owed: Amount) -> Result<(), TxError> {
        let sender = self.sender.clone();
        let have = self.market.eth_of(&sender);
        if have < owed {
            return Err(TxError::FlashLoanDefault { owed, available: have });
        }
        self.market.debit_eth(&sender, owed)?;
        let l = self
            .market
            .lenders
            .get_mut(lender)
            .ok_or_else(|| TxError::UnknownLender(lender.to_string()))?;
        l.liquidity = l.liquidity.checked_add(owed)?;
        Ok(())
    }

    /// Burns `amount` ETH of gas and bribe into the sink account.
    pub fn pay_gas(&mut self, amount: Amount) -> Result<(), TxError> {
        if amount.is_zero() {
            return Ok(());
        }
        let sender = self.sender.clone();
        self.market.debit_eth(&sender, amount)?;
        self.market.credit_eth(GAS_SINK, amount)?;
        self.emit(EventKind::Gas, Venue::plain("gas"), amount, Amount::ZERO);
        Ok(())
    }

    pub fn distribute_rewards(&mut self, protocol: &str, rewards: Amount) -> Result<Wad, TxError> {
        let p = self.market.protocol_mut(protocol)?;
        let kind = match p.mechanism() {
            Mechanism::Rebasing => EventKind::Rebase,
            Mechanism::RewardBearing => EventKind::Accrue,
        };
        let rate = p.distribute_rewards(rewards)?;
        self.market.rewards_injected = self.market.rewards_injected.checked_add(rewards)?;
        self.market.sync_pools_of(protocol)?;
        self.emit(kind, Venue::plain(protocol), rewards, Amount::ZERO);
        Ok(rate)
    }
}
