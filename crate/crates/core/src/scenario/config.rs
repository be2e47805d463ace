use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::arbitrage::{self, TxCostModel};
use crate::fixedmath::{Amount, Wad};
use crate::{amm, lsd};

/// Config problem located by a dotted field path such as
/// `agents.arbitrageurs[0].pool`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn default_block_time() -> u64 {
    12
}

fn default_tick_interval() -> u64 {
    600
}

fn zero() -> String {
    "0".to_string()
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub horizon_blocks: u64,
    #[serde(default = "default_block_time")]
    pub block_time_secs: u64,
    #[serde(default)]
    pub start_timestamp: u64,
    #[serde(default = "default_tick_interval")]
    pub tick_interval_secs: u64,
    /// Pool sampled into the tick series; the first pool when absent.
    #[serde(default)]
    pub tick_pool: Option<String>,
    #[serde(default)]
    pub shapella: ShapellaConfig,
    pub protocols: Vec<ProtocolConfig>,
    #[serde(default)]
    pub pools: Vec<PoolConfig>,
    #[serde(default)]
    pub lenders: Vec<LenderConfig>,
    #[serde(default)]
    pub agents: AgentsConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapellaConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub activation_block: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: String,
    pub kind: String,
    /// Fraction of total stake paid as rewards once per simulated day.
    #[serde(default = "zero")]
    pub daily_reward_rate: String,
    #[serde(default = "empty_object")]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub name: String,
    pub kind: String,
    pub protocol: String,
    /// Initial LSD reserve in token units, taken from the genesis holder.
    pub lsd: String,
    /// Initial ETH reserve.
    pub eth: String,
    #[serde(default = "empty_object")]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LenderConfig {
    pub name: String,
    pub liquidity: String,
    #[serde(default = "zero")]
    pub fee: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    #[serde(default)]
    pub lps: Vec<LpConfig>,
    #[serde(default)]
    pub noise: Vec<NoiseConfig>,
    #[serde(default)]
    pub arbitrageurs: Vec<ArbitrageurConfig>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub name: String,
    pub pool: String,
    #[serde(default = "zero")]
    pub eth: String,
    #[serde(default = "zero")]
    pub lsd: String,
    /// Chance of trading in any given block.
    pub probability: f64,
    /// Trade size is uniform on `[min_size, max_size]` in units of the
    /// token sold.
    pub min_size: String,
    pub max_size: String,
    /// Chance a trade sells LSD rather than buying it.
    #[serde(default = "half")]
    pub sell_bias: f64,
}

fn default_min_size() -> String {
    "0.001".to_string()
}

fn default_max_size() -> String {
    "1000".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub gas: u64,
    #[serde(default = "zero")]
    pub gas_price_gwei: String,
    /// Validator bribe in ETH.
    #[serde(default = "zero")]
    pub bribe: String,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            gas: 0,
            gas_price_gwei: zero(),
            bribe: zero(),
        }
    }
}

impl CostConfig {
    pub fn model(&self) -> Result<TxCostModel, String> {
        let gwei = Wad::parse_decimal(&self.gas_price_gwei).map_err(|e| format!("gas_price_gwei: {e}"))?;
        // A gwei is 10^9 wei, so the wad value divided by 10^9 is wei.
        let gas_price = Amount::from_u256(gwei.as_u256() / crate::fixedmath::U256::from(1_000_000_000u64));
        Ok(TxCostModel {
            gas_per_arb: self.gas,
            gas_price,
            bribe: Amount::parse_eth(&self.bribe).map_err(|e| format!("bribe: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArbitrageurConfig {
    pub name: String,
    pub strategy: String,
    pub protocol: String,
    pub pool: String,
    #[serde(default)]
    pub lender: Option<String>,
    #[serde(default = "zero")]
    pub eth: String,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default = "default_min_size")]
    pub min_size: String,
    #[serde(default = "default_max_size")]
    pub max_size: String,
    /// Trades only when expected profit exceeds this many ETH.
    #[serde(default = "zero")]
    pub min_profit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpConfig {
    pub name: String,
    pub pool: String,
    #[serde(default = "zero")]
    pub eth: String,
    #[serde(default = "zero")]
    pub lsd: String,
    pub deposit_block: u64,
    /// Deposit amounts; LSD is capped at the balance held at deposit time.
    pub deposit_lsd: String,
    pub deposit_eth: String,
    #[serde(default)]
    pub withdraw_block: Option<u64>,
    /// ETH burned as gas with each deposit and withdrawal.
    #[serde(default = "zero")]
    pub gas_cost: String,
}

fn located<E: fmt::Display>(e: serde_path_to_error::Error<E>) -> ConfigError {
    let path = e.path().to_string();
    let path = if path == "." { String::new() } else { path };
    ConfigError::at(path, e.into_inner())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(located)?;
        de.end().map_err(|e| ConfigError::at("", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(located)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at("", format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    /// SHA-256 of the canonical JSON rendering, so a TOML file and its JSON
    /// twin hash alike.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon_blocks == 0 {
            return Err(ConfigError::at("horizon_blocks", "must be positive"));
        }
        if self.block_time_secs == 0 {
            return Err(ConfigError::at("block_time_secs", "must be positive"));
        }
        if self.tick_interval_secs == 0 {
            return Err(ConfigError::at("tick_interval_secs", "must be positive"));
        }
        if self.protocols.is_empty() {
            return Err(ConfigError::at("protocols", "at least one protocol is required"));
        }

        let mut names = BTreeSet::new();
        let mut protocols = std::collections::BTreeMap::new();
        for (i, p) in self.protocols.iter().enumerate() {
            let at = |f: &str| format!("protocols[{i}].{f}");
            unique(&mut names, &p.name, &at("name"))?;
            let built = lsd::build(&p.kind, &p.params).map_err(|e| match e {
                lsd::LsdError::UnknownKind(_) => ConfigError::at(at("kind"), e),
                _ => ConfigError::at(at("params"), e),
            })?;
            eth(&p.daily_reward_rate, &at("daily_reward_rate"))?;
            protocols.insert(p.name.as_str(), built.mechanism());
        }
        let mut pools = BTreeSet::new();
        for (i, p) in self.pools.iter().enumerate() {
            let at = |f: &str| format!("pools[{i}].{f}");
            unique(&mut names, &p.name, &at("name"))?;
            let mut built = amm::build(&p.kind, &p.params).map_err(|e| match e {
                amm::AmmError::UnknownKind(_) => ConfigError::at(at("kind"), e),
                _ => ConfigError::at(at("params"), e),
            })?;
            let Some(mech) = protocols.get(p.protocol.as_str()) else {
                return Err(ConfigError::at(at("protocol"), format!("no protocol named {:?}", p.protocol)));
            };
            if *mech == lsd::Mechanism::Rebasing && built.sync_lsd_reserve(Amount::ZERO).is_err() {
                return Err(ConfigError::at(
                    at("kind"),
                    format!("{} pools cannot hold a rebasing token", p.kind),
                ));
            }
            positive(&p.lsd, &at("lsd"))?;
            positive(&p.eth, &at("eth"))?;
            pools.insert(p.name.as_str());
        }
        let mut lenders = BTreeSet::new();
        for (i, l) in self.lenders.iter().enumerate() {
            let at = |f: &str| format!("lenders[{i}].{f}");
            unique(&mut names, &l.name, &at("name"))?;
            eth(&l.liquidity, &at("liquidity"))?;
            Wad::parse_decimal(&l.fee).map_err(|e| ConfigError::at(at("fee"), e))?;
            lenders.insert(l.name.as_str());
        }
        if let Some(t) = &self.tick_pool {
            if !pools.contains(t.as_str()) {
                return Err(ConfigError::at("tick_pool", format!("no pool named {t:?}")));
            }
        }
        let pool_ref = |name: &str, at: String| {
            if pools.contains(name) {
                Ok(())
            } else {
                Err(ConfigError::at(at, format!("no pool named {name:?}")))
            }
        };

        for (i, a) in self.agents.lps.iter().enumerate() {
            let at = |f: &str| format!("agents.lps[{i}].{f}");
            unique(&mut names, &a.name, &at("name"))?;
            pool_ref(&a.pool, at("pool"))?;
            for (v, f) in [(&a.eth, "eth"), (&a.lsd, "lsd"), (&a.deposit_lsd, "deposit_lsd"), (&a.deposit_eth, "deposit_eth"), (&a.gas_cost, "gas_cost")] {
                eth(v, &at(f))?;
            }
            if a.deposit_block == 0 || a.deposit_block > self.horizon_blocks {
                return Err(ConfigError::at(at("deposit_block"), "must lie in 1..=horizon_blocks"));
            }
            if let Some(w) = a.withdraw_block {
                if w <= a.deposit_block || w > self.horizon_blocks {
                    return Err(ConfigError::at(
                        at("withdraw_block"),
                        "must follow deposit_block within the horizon",
                    ));
                }
            }
        }
        for (i, a) in self.agents.noise.iter().enumerate() {
            let at = |f: &str| format!("agents.noise[{i}].{f}");
            unique(&mut names, &a.name, &at("name"))?;
            pool_ref(&a.pool, at("pool"))?;
            eth(&a.eth, &at("eth"))?;
            eth(&a.lsd, &at("lsd"))?;
            let lo = positive(&a.min_size, &at("min_size"))?;
            let hi = positive(&a.max_size, &at("max_size"))?;
            if lo > hi {
                return Err(ConfigError::at(at("max_size"), "must be at least min_size"));
            }
            probability(a.probability, &at("probability"))?;
            probability(a.sell_bias, &at("sell_bias"))?;
        }
        for (i, a) in self.agents.arbitrageurs.iter().enumerate() {
            let at = |f: &str| format!("agents.arbitrageurs[{i}].{f}");
            unique(&mut names, &a.name, &at("name"))?;
            arbitrage::build(&a.strategy).map_err(|e| ConfigError::at(at("strategy"), e))?;
            if !protocols.contains_key(a.protocol.as_str()) {
                return Err(ConfigError::at(at("protocol"), format!("no protocol named {:?}", a.protocol)));
            }
            pool_ref(&a.pool, at("pool"))?;
            let pool_proto = &self.pools.iter().find(|p| p.name == a.pool).expect("checked").protocol;
            if *pool_proto != a.protocol {
                return Err(ConfigError::at(
                    at("pool"),
                    format!("pool {:?} trades {pool_proto:?}, not {:?}", a.pool, a.protocol),
                ));
            }
            match (&a.lender, a.strategy.as_str()) {
                (Some(l), _) if !lenders.contains(l.as_str()) => {
                    return Err(ConfigError::at(at("lender"), format!("no lender named {l:?}")));
                }
                (None, "flash-loan") => return Err(ConfigError::at(at("lender"), "flash-loan needs a lender")),
                _ => {}
            }
            eth(&a.eth, &at("eth"))?;
            a.cost.model().map_err(|e| ConfigError::at(at("cost"), e))?;
            let lo = positive(&a.min_size, &at("min_size"))?;
            let hi = positive(&a.max_size, &at("max_size"))?;
            if lo > hi {
                return Err(ConfigError::at(at("max_size"), "must be at least min_size"));
            }
            eth(&a.min_profit, &at("min_profit"))?;
        }
        Ok(())
    }
}

fn unique<'a>(seen: &mut BTreeSet<&'a str>, name: &'a str, at: &str) -> Result<(), ConfigError> {
    if name.is_empty() {
        return Err(ConfigError::at(at, "must not be empty"));
    }
    if name.contains(['/', '>', ',', '"', '\n']) || name.starts_with("pool:") {
        return Err(ConfigError::at(at, format!("{name:?} contains a reserved character")));
    }
    if ["genesis", "oracle", "gas-sink", "gas", "treasury"].contains(&name) {
        return Err(ConfigError::at(at, format!("{name:?} is reserved")));
    }
    if !seen.insert(name) {
        return Err(ConfigError::at(at, format!("duplicate name {name:?}")));
    }
    Ok(())
}

pub(crate) fn eth(s: &str, at: &str) -> Result<Amount, ConfigError> {
    Amount::parse_eth(s).map_err(|e| ConfigError::at(at, e))
}

fn positive(s: &str, at: &str) -> Result<Amount, ConfigError> {
    let a = eth(s, at)?;
    if a.is_zero() {
        return Err(ConfigError::at(at, "must be positive"));
    }
    Ok(a)
}

fn probability(p: f64, at: &str) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ConfigError::at(at, format!("{p} is not in [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
horizon_blocks = 100

[[protocols]]
name = "lido"
kind = "rebasing"
params = { protocol_fee = "0.1", genesis_eth = "1000" }

[[pools]]
name = "curve"
kind = "stableswap"
protocol = "lido"
lsd = "100"
eth = "100"
params = { amp = 50 }
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = ScenarioConfig::from_json(&json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.block_time_secs, 12);
        assert_eq!(a.tick_interval_secs, 600);
    }

    #[test]
    fn unknown_field_reports_path() {
        let text = MINIMAL.replace("amp = 50", "amp = 50 }\nbogus = { x = 1");
        let e = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(e.path.starts_with("pools[0]"), "{e}");
        let e = ScenarioConfig::from_json(r#"{"seed": 1, "horizon_blocks": 5, "protocols": [{"name": "x", "kind": "rebasing", "nope": 1}]}"#)
            .unwrap_err();
        assert_eq!(e.path, "protocols[0].nope");
    }

    #[test]
    fn type_errors_report_path() {
        let e = ScenarioConfig::from_json(r#"{"seed": "x", "horizon_blocks": 5, "protocols": []}"#).unwrap_err();
        assert_eq!(e.path, "seed");
    }

    #[test]
    fn dangling_references() {
        let mut c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        c.pools[0].protocol = "rocket".into();
        assert_eq!(c.validate().unwrap_err().path, "pools[0].protocol");

        let mut c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        c.agents.arbitrageurs.push(ArbitrageurConfig {
            name: "bot".into(),
            strategy: "flash-loan".into(),
            protocol: "lido".into(),
            pool: "curve".into(),
            lender: None,
            eth: "1".into(),
            cost: CostConfig::default(),
            min_size: default_min_size(),
            max_size: default_max_size(),
            min_profit: zero(),
        });
        assert_eq!(c.validate().unwrap_err().path, "agents.arbitrageurs[0].lender");
        c.agents.arbitrageurs[0].strategy = "sandwich".into();
        assert_eq!(c.validate().unwrap_err().path, "agents.arbitrageurs[0].strategy");
    }

    #[test]
    fn rebasing_token_not_allowed_in_concentrated_pool() {
        let text = MINIMAL.replace(
            "kind = \"stableswap\"",
            "kind = \"concentrated\"",
        )
        .replace("params = { amp = 50 }", "params = { price = \"1\", price_lower = \"0.9\", price_upper = \"1.1\" }");
        let e = ScenarioConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.path, "pools[0].kind");
    }

    #[test]
    fn gas_price_in_gwei() {
        let c = CostConfig {
            gas: 200_000,
            gas_price_gwei: "30".into(),
            bribe: "0.01".into(),
        };
        let m = c.model().unwrap();
        assert_eq!(m.gas_price, Amount::from_wei(30_000_000_000));
        assert_eq!(m.cost().unwrap(), Amount::from_wei(6_000_000_000_000_000 + 10_000_000_000_000_000));
    }
}
