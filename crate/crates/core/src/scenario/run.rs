use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use super::config::{eth, ConfigError, ScenarioConfig};
use super::world::{Lender, Market, PoolSlot, World, GAS_SINK};
use crate::amm::{self, Token};
use crate::analytics::trace::{EventKind, EventTrace};
use crate::analytics::{AnalyticsError, HistoryRow, Histories, Tick, TickSeries, DAY_SECS};
use crate::arbitrage::{self, optimal_size, ArbContext, ArbStrategy, Direction, TxCostModel};
use crate::fixedmath::{mul_div, Amount, Rounding, SignedAmount, Wad, U256};
use crate::lsd::{self, RewardBearingLsd};

/// Account that owns genesis LSD and seeds the pools.
pub const GENESIS: &str = "genesis";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<AnalyticsError> for RunError {
    fn from(e: AnalyticsError) -> Self {
        RunError::Io(e.to_string())
    }
}

/// ETH totals used to check that value only enters through rewards and
/// only leaves through the gas sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conservation {
    pub initial: Amount,
    pub rewards: Amount,
    pub gas: Amount,
    /// Everything except the gas sink.
    pub circulating: Amount,
    pub sink: Amount,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.initial.checked_add(self.rewards).ok() == self.circulating.checked_add(self.gas).ok() && self.sink == self.gas
    }
}

/// Recomputes [`Conservation`] from the trace and the final market.
pub fn conservation(initial: Amount, trace: &EventTrace, market: &Market) -> Result<Conservation, RunError> {
    let mut rewards = Amount::ZERO;
    let mut gas = Amount::ZERO;
    for e in &trace.events {
        let slot = match e.kind {
            EventKind::Rebase | EventKind::Accrue => &mut rewards,
            EventKind::Gas => &mut gas,
            _ => continue,
        };
        *slot = slot.checked_add(e.amount_in).map_err(|e| RunError::Invariant(e.to_string()))?;
    }
    let total = market.total_eth().map_err(|e| RunError::Invariant(e.to_string()))?;
    let sink = market.eth_of(GAS_SINK);
    Ok(Conservation {
        initial,
        rewards,
        gas,
        circulating: total.saturating_sub(sink),
        sink,
    })
}

#[derive(Debug)]
pub struct RunOutput {
    pub world: World,
    pub ticks: TickSeries,
    /// Per-pool rate and spot history; empty unless the run has LPs.
    pub histories: Vec<HistoryRow>,
    pub conservation: Conservation,
    /// Agent transactions that failed and were rolled back.
    pub reverted: u64,
}

impl RunOutput {
    pub fn trace(&self) -> &EventTrace {
        &self.world.trace
    }

    pub fn histories(&self) -> Result<Histories, AnalyticsError> {
        Histories::from_rows(self.histories.clone())
    }
}

/// Uniform on [0, 1) from the top 53 bits of one draw.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[lo, hi]` at 2^-53 resolution.
fn uniform_amount(rng: &mut ChaCha8Rng, lo: Amount, hi: Amount) -> Amount {
    let frac = U256::from(rng.next_u64() >> 11);
    let span = hi.saturating_sub(lo).as_u256();
    let off = mul_div(span, frac, U256::from(1u64 << 53), Rounding::Down).unwrap_or(U256::ZERO);
    Amount::from_u256(lo.as_u256() + off)
}

struct Noise {
    name: String,
    pool: String,
    probability: f64,
    sell_bias: f64,
    min: Amount,
    max: Amount,
}

struct Lp {
    name: String,
    pool: String,
    deposit_block: u64,
    withdraw_block: Option<u64>,
    amounts: [Amount; 2],
    gas: Amount,
}

struct Arbitrageur {
    strategy: Box<dyn ArbStrategy>,
    ctx: ArbContext,
    lo: Amount,
    hi: Amount,
    min_profit: Amount,
}

struct Engine {
    world: World,
    rng: ChaCha8Rng,
    reward_rates: Vec<(String, Wad)>,
    lps: Vec<Lp>,
    noise: Vec<Noise>,
    arbs: Vec<Arbitrageur>,
    ticks: TickSeries,
    tick_pool: Option<(String, String)>,
    histories: Option<Vec<HistoryRow>>,
    reverted: u64,
}

fn build_market(cfg: &ScenarioConfig) -> Result<Market, ConfigError> {
    let mut m = Market::new();
    m.timestamp = cfg.start_timestamp;
    m.shapella = cfg.shapella.enabled && cfg.shapella.activation_block == 0;
    for (i, p) in cfg.protocols.iter().enumerate() {
        let built = lsd::build(&p.kind, &p.params).map_err(|e| ConfigError::at(format!("protocols[{i}].params"), e))?;
        m.protocols.insert(p.name.clone(), built);
    }
    for l in &cfg.lenders {
        let lender = Lender {
            liquidity: eth(&l.liquidity, "")?,
            fee: Wad::parse_decimal(&l.fee).map_err(|e| ConfigError::at("", e))?,
        };
        m.lenders.insert(l.name.clone(), lender);
    }
    for (i, p) in cfg.pools.iter().enumerate() {
        let pool = amm::build(&p.kind, &p.params).map_err(|e| ConfigError::at(format!("pools[{i}].params"), e))?;
        m.pools.insert(
            p.name.clone(),
            PoolSlot {
                protocol: p.protocol.clone(),
                pool,
            },
        );
    }
    Ok(m)
}

fn endow_lsd(m: &mut Market, protocol: &str, to: &str, amount: Amount, at: String) -> Result<(), ConfigError> {
    if amount.is_zero() {
        return Ok(());
    }
    let p = m.protocol_mut(protocol).map_err(|e| ConfigError::at(&at, e))?;
    p.transfer(GENESIS, to, amount)
        .map_err(|e| ConfigError::at(at, format!("genesis holder cannot supply {amount} wei: {e}")))
}

fn protocol_of(cfg: &ScenarioConfig, pool: &str) -> String {
    cfg.pools
        .iter()
        .find(|p| p.name == pool)
        .map(|p| p.protocol.clone())
        .expect("validated pool reference")
}

impl Engine {
    fn new(cfg: &ScenarioConfig) -> Result<Engine, ConfigError> {
        let m = build_market(cfg)?;
        let mut seeds = Vec::new();
        for (i, p) in cfg.pools.iter().enumerate() {
            let lsd = eth(&p.lsd, "")?;
            let e = eth(&p.eth, "")?;
            seeds.push((i, p.name.clone(), [lsd, e]));
        }
        // Pools are seeded by the genesis holder in untraced setup
        // transactions.
        let mut world = World::new(m);
        for (i, name, amounts) in seeds {
            world
                .market
                .credit_eth(GENESIS, amounts[1])
                .map_err(|e| ConfigError::at(format!("pools[{i}].eth"), e))?;
            world
                .transact(GENESIS, |tx| tx.add_liquidity(&name, amounts))
                .map_err(|e| ConfigError::at(format!("pools[{i}].lsd"), e))?;
        }
        let mut m = world.market;

        let mut lps = Vec::new();
        for (i, a) in cfg.agents.lps.iter().enumerate() {
            let at = |f: &str| format!("agents.lps[{i}].{f}");
            m.credit_eth(&a.name, eth(&a.eth, "")?).map_err(|e| ConfigError::at(at("eth"), e))?;
            endow_lsd(&mut m, &protocol_of(cfg, &a.pool), &a.name, eth(&a.lsd, "")?, at("lsd"))?;
            lps.push(Lp {
                name: a.name.clone(),
                pool: a.pool.clone(),
                deposit_block: a.deposit_block,
                withdraw_block: a.withdraw_block,
                amounts: [eth(&a.deposit_lsd, "")?, eth(&a.deposit_eth, "")?],
                gas: eth(&a.gas_cost, "")?,
            });
        }
        let mut noise = Vec::new();
        for (i, a) in cfg.agents.noise.iter().enumerate() {
            let at = |f: &str| format!("agents.noise[{i}].{f}");
            m.credit_eth(&a.name, eth(&a.eth, "")?).map_err(|e| ConfigError::at(at("eth"), e))?;
            endow_lsd(&mut m, &protocol_of(cfg, &a.pool), &a.name, eth(&a.lsd, "")?, at("lsd"))?;
            noise.push(Noise {
                name: a.name.clone(),
                pool: a.pool.clone(),
                probability: a.probability,
                sell_bias: a.sell_bias,
                min: eth(&a.min_size, "")?,
                max: eth(&a.max_size, "")?,
            });
        }
        let mut arbs = Vec::new();
        for (i, a) in cfg.agents.arbitrageurs.iter().enumerate() {
            let at = |f: &str| format!("agents.arbitrageurs[{i}].{f}");
            m.credit_eth(&a.name, eth(&a.eth, "")?).map_err(|e| ConfigError::at(at("eth"), e))?;
            let cost: TxCostModel = a.cost.model().map_err(|e| ConfigError::at(at("cost"), e))?;
            arbs.push(Arbitrageur {
                strategy: arbitrage::build(&a.strategy).map_err(|e| ConfigError::at(at("strategy"), e))?,
                ctx: ArbContext {
                    sender: a.name.clone(),
                    protocol: a.protocol.clone(),
                    pool: a.pool.clone(),
                    lender: a.lender.clone(),
                    cost,
                },
                lo: eth(&a.min_size, "")?,
                hi: eth(&a.max_size, "")?,
                min_profit: eth(&a.min_profit, "")?,
            });
        }

        let mut reward_rates = Vec::new();
        for p in &cfg.protocols {
            let r = Wad::parse_decimal(&p.daily_reward_rate).map_err(|e| ConfigError::at("", e))?;
            if !r.is_zero() {
                reward_rates.push((p.name.clone(), r));
            }
        }
        let tick_pool = cfg
            .tick_pool
            .clone()
            .or_else(|| cfg.pools.first().map(|p| p.name.clone()))
            .map(|p| (protocol_of(cfg, &p), p));

        Ok(Engine {
            world: World::new(m),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            reward_rates,
            histories: if lps.is_empty() { None } else { Some(Vec::new()) },
            lps,
            noise,
            arbs,
            ticks: TickSeries::default(),
            tick_pool,
            reverted: 0,
        })
    }

    fn record_histories(&mut self) {
        let Some(rows) = self.histories.as_mut() else {
            return;
        };
        let m = &self.world.market;
        for (name, slot) in &m.pools {
            let Ok(p) = m.protocol(&slot.protocol) else { continue };
            let Ok(spot) = slot.pool.spot_price() else { continue };
            rows.push(HistoryRow {
                venue: name.clone(),
                mechanism: p.mechanism().as_str().to_string(),
                timestamp: m.timestamp,
                rate: p.accounting_rate(),
                spot,
            });
        }
    }

    fn sample_tick(&mut self) {
        let Some((proto, pool)) = &self.tick_pool else {
            return;
        };
        let m = &self.world.market;
        let (Ok(p), Ok(slot)) = (m.protocol(proto), m.pool(pool)) else {
            return;
        };
        let Ok(spot) = slot.pool.spot_price() else {
            return;
        };
        self.ticks.push(Tick {
            timestamp: m.timestamp,
            p1st: p.primary_rate(),
            p2nd: spot,
        });
    }

    fn pay_rewards(&mut self) -> Result<(), RunError> {
        for (proto, rate) in self.reward_rates.clone() {
            let p = self.world.market.protocol(&proto).map_err(|e| RunError::Invariant(e.to_string()))?;
            let stake = p
                .lsd_supply()
                .wad_mul(p.primary_rate(), Rounding::Down)
                .and_then(|s| s.wad_mul(rate, Rounding::Down))
                .map_err(|e| RunError::Invariant(e.to_string()))?;
            if stake.is_zero() {
                continue;
            }
            if self.world.inject_rewards(&proto, stake).is_err() {
                self.reverted += 1;
            }
        }
        self.record_histories();
        Ok(())
    }

    fn step_lps(&mut self, block: u64) {
        for i in 0..self.lps.len() {
            let lp = &self.lps[i];
            let (name, pool, gas) = (lp.name.clone(), lp.pool.clone(), lp.gas);
            let res = if lp.deposit_block == block {
                let mut amounts = lp.amounts;
                let Ok(slot) = self.world.market.pool(&pool) else { continue };
                let proto = slot.protocol.clone();
                if let Ok(p) = self.world.market.protocol(&proto) {
                    amounts[0] = amounts[0].min(p.balance_of(&name));
                }
                self.world
                    .transact(&name, |tx| {
                        tx.add_liquidity(&pool, amounts)?;
                        tx.pay_gas(gas)
                    })
                    .map(|_| ())
            } else if lp.withdraw_block == Some(block) {
                let units = match self.world.market.pool(&pool) {
                    Ok(s) => s.pool.lp_balance(&name),
                    Err(_) => continue,
                };
                self.world
                    .transact(&name, |tx| {
                        tx.remove_liquidity(&pool, units)?;
                        tx.pay_gas(gas)
                    })
                    .map(|_| ())
            } else {
                continue;
            };
            if res.is_err() {
                self.reverted += 1;
            }
            self.record_histories();
        }
    }

    fn step_noise(&mut self) {
        for i in 0..self.noise.len() {
            // Three draws per trader per block keep the stream aligned no
            // matter which trades go through.
            let trade = unit(&mut self.rng);
            let side = unit(&mut self.rng);
            let n = &self.noise[i];
            let size = uniform_amount(&mut self.rng, n.min, n.max);
            if trade >= n.probability {
                continue;
            }
            let (name, pool) = (n.name.clone(), n.pool.clone());
            let sell = side < n.sell_bias;
            let m = &self.world.market;
            let Ok(slot) = m.pool(&pool) else { continue };
            let have = if sell {
                m.protocol(&slot.protocol).map(|p| p.balance_of(&name)).unwrap_or(Amount::ZERO)
            } else {
                m.eth_of(&name)
            };
            let amount = size.min(have);
            if amount.is_zero() {
                continue;
            }
            let token = if sell { Token::Lsd } else { Token::Eth };
            if self.world.transact(&name, |tx| tx.swap(&pool, token, amount)).is_err() {
                self.reverted += 1;
            }
        }
    }

    /// Largest size the arbitrageur could fund right now.
    fn size_cap(&self, a: &Arbitrageur) -> Amount {
        let m = &self.world.market;
        let cost = a.ctx.cost.cost().unwrap_or(Amount::ZERO);
        let mut hi = a.hi;
        let flash = a.strategy.name() == "flash-loan";
        if flash {
            let liquidity = a.ctx.lender.as_deref().and_then(|l| m.lenders.get(l)).map(|l| l.liquidity);
            hi = hi.min(liquidity.unwrap_or(Amount::ZERO));
        } else {
            hi = hi.min(m.eth_of(&a.ctx.sender).saturating_sub(cost));
        }
        if a.strategy.direction() == Direction::StakeSwap {
            if let Ok(p) = m.protocol(&a.ctx.protocol) {
                if let Some(rb) = p.as_any().downcast_ref::<RewardBearingLsd>() {
                    hi = hi.min(rb.deposit_pool.room());
                }
            }
        }
        hi
    }

    fn step_arbs(&mut self) {
        for i in 0..self.arbs.len() {
            let a = &self.arbs[i];
            if a.strategy.direction() == Direction::SwapUnstake && !self.world.market.shapella {
                continue;
            }
            let hi = self.size_cap(a);
            if hi < a.lo {
                continue;
            }
            let choice = match optimal_size(&self.world, a.strategy.as_ref(), &a.ctx, (a.lo, hi)) {
                Ok(c) => c,
                Err(_) => continue,
            };
            if choice.x0.is_zero() || choice.profit <= SignedAmount::positive(a.min_profit) {
                continue;
            }
            let a = &self.arbs[i];
            if a.strategy.execute(&mut self.world, &a.ctx, choice.x0).is_err() {
                self.reverted += 1;
            }
        }
    }
}

/// Runs a validated scenario block by block.
///
/// Within each block the order is: daily rewards on the first block of a
/// new day, Shapella activation, LPs, noise traders, arbitrageurs, then a
/// tick sample if a tick boundary has been reached.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut eng = Engine::new(cfg)?;
    let initial = eng.world.market.total_eth().map_err(|e| RunError::Invariant(e.to_string()))?;
    eng.record_histories();
    eng.sample_tick();
    let mut next_tick = cfg.start_timestamp + cfg.tick_interval_secs;

    for block in 1..=cfg.horizon_blocks {
        let prev_ts = eng.world.market.timestamp;
        let ts = cfg.start_timestamp + block * cfg.block_time_secs;
        eng.world.advance_to(block, ts);
        if ts / DAY_SECS > prev_ts / DAY_SECS {
            eng.pay_rewards()?;
        }
        if cfg.shapella.enabled && block == cfg.shapella.activation_block {
            eng.world.market.shapella = true;
        }
        eng.step_lps(block);
        eng.step_noise();
        eng.step_arbs();
        if ts >= next_tick {
            eng.sample_tick();
            eng.record_histories();
            while next_tick <= ts {
                next_tick += cfg.tick_interval_secs;
            }
        }
    }

    eng.world
        .trace
        .validate()
        .map_err(|e| RunError::Invariant(format!("trace ordering: {e}")))?;
    let c = conservation(initial, &eng.world.trace, &eng.world.market)?;
    if !c.holds() {
        return Err(RunError::Invariant(format!("ETH conservation: {c:?}")));
    }
    Ok(RunOutput {
        world: eng.world,
        ticks: eng.ticks,
        histories: eng.histories.unwrap_or_default(),
        conservation: c,
        reverted: eng.reverted,
    })
}

pub const TRACE_FILE: &str = "trace.csv";
pub const TICKS_FILE: &str = "ticks.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORIES_FILE: &str = "histories.csv";

/// Writes trace, ticks and manifest into `dir`, plus histories when the
/// run has LPs. Returns the file names written.
pub fn write_outputs(cfg: &ScenarioConfig, out: &RunOutput, dir: &Path) -> Result<Vec<&'static str>, RunError> {
    let io = |e: std::io::Error| RunError::Io(e.to_string());
    fs::create_dir_all(dir).map_err(io)?;
    let create = |name: &str| fs::File::create(dir.join(name)).map(BufWriter::new).map_err(io);
    let mut written = vec![TRACE_FILE, TICKS_FILE];
    out.world.trace.write_csv(create(TRACE_FILE)?)?;
    out.ticks.write_csv(create(TICKS_FILE)?)?;
    if !out.histories.is_empty() {
        Histories::write_csv(&out.histories, create(HISTORIES_FILE)?)?;
        written.push(HISTORIES_FILE);
    }
    let c = &out.conservation;
    let manifest = json!({
        "seed": cfg.seed,
        "config_sha256": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "horizon_blocks": cfg.horizon_blocks,
        "events": out.world.trace.len(),
        "ticks": out.ticks.ticks.len(),
        "reverted_txs": out.reverted,
        "files": written,
        "eth": {
            "initial": c.initial.to_string(),
            "rewards": c.rewards.to_string(),
            "gas": c.gas.to_string(),
            "circulating": c.circulating.to_string(),
            "conserved": c.holds(),
        },
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text).map_err(io)?;
    written.push(MANIFEST_FILE);
    Ok(written)
}
