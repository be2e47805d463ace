use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::fixedmath::Amount;

pub const TRACE_HEADER: [&str; 9] = [
    "block",
    "tx_index",
    "tx_hash",
    "sender",
    "kind",
    "venue",
    "amount_in_wei",
    "amount_out_wei",
    "timestamp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Stake,
    Unstake,
    Swap,
    AddLiquidity,
    RemoveLiquidity,
    FlashLoan,
    Assign,
    Rebase,
    Accrue,
    Gas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Asset {
    Eth,
    Lsd,
    Lp,
}

impl Asset {
    pub fn as_str(self) -> &'static str {
        match self {
            Asset::Eth => "ETH",
            Asset::Lsd => "LSD",
            Asset::Lp => "LP",
        }
    }

    fn parse(s: &str) -> Option<Asset> {
        match s {
            "ETH" => Some(Asset::Eth),
            "LSD" => Some(Asset::Lsd),
            "LP" => Some(Asset::Lp),
            _ => None,
        }
    }
}

/// `name` or `name/IN>OUT`, e.g. `curve/LSD>ETH`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Venue {
    pub name: String,
    pub path: Option<(Asset, Asset)>,
}

impl Venue {
    pub fn new(name: &str, from: Asset, to: Asset) -> Venue {
        Venue {
            name: name.to_string(),
            path: Some((from, to)),
        }
    }

    pub fn plain(name: &str) -> Venue {
        Venue {
            name: name.to_string(),
            path: None,
        }
    }

    pub fn is(&self, from: Asset, to: Asset) -> bool {
        self.path == Some((from, to))
    }
}

impl fmt::Display for Venue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.path {
            Some((a, b)) => write!(f, "{}/{}>{}", self.name, a.as_str(), b.as_str()),
            None => f.write_str(&self.name),
        }
    }
}

impl FromStr for Venue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some((name, path)) = s.split_once('/') else {
            if s.is_empty() {
                return Err("empty venue".into());
            }
            return Ok(Venue::plain(s));
        };
        let (a, b) = path.split_once('>').ok_or_else(|| format!("venue path {path:?} lacks '>'"))?;
        let from = Asset::parse(a).ok_or_else(|| format!("unknown asset {a:?}"))?;
        let to = Asset::parse(b).ok_or_else(|| format!("unknown asset {b:?}"))?;
        if name.is_empty() {
            return Err("empty venue name".into());
        }
        Ok(Venue::new(name, from, to))
    }
}

impl Serialize for Venue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Venue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub block: u64,
    pub tx_index: u32,
    pub tx_hash: String,
    pub sender: String,
    pub kind: EventKind,
    pub venue: Venue,
    #[serde(rename = "amount_in_wei")]
    pub amount_in: Amount,
    #[serde(rename = "amount_out_wei")]
    pub amount_out: Amount,
    pub timestamp: u64,
}

pub fn tx_hash(block: u64, tx_index: u32) -> String {
    format!("0x{block:012x}{tx_index:04x}")
}

/// Ordered ledger of events; consecutive events sharing `(block, tx_index)`
/// form one transaction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventTrace {
    pub events: Vec<Event>,
}

impl EventTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    /// Events grouped by transaction, in order.
    pub fn transactions(&self) -> Vec<&[Event]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.events.len() {
            let boundary = i == self.events.len()
                || (self.events[i].block, self.events[i].tx_index)
                    != (self.events[start].block, self.events[start].tx_index);
            if boundary {
                out.push(&self.events[start..i]);
                start = i;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let mut last: Option<(u64, u32)> = None;
        let mut last_ts = 0u64;
        for (row, e) in self.events.iter().enumerate() {
            let key = (e.block, e.tx_index);
            if let Some(prev) = last {
                if key < prev {
                    return Err(AnalyticsError::Order {
                        row: row + 2,
                        message: format!("transaction {key:?} follows {prev:?}"),
                    });
                }
                if key == prev && e.tx_hash != self.events[row - 1].tx_hash {
                    return Err(AnalyticsError::Order {
                        row: row + 2,
                        message: "events of one transaction carry different hashes".into(),
                    });
                }
                if key != prev && self.events[..row].iter().rev().take_while(|p| p.block == e.block).any(|p| p.tx_index == e.tx_index) {
                    return Err(AnalyticsError::Order {
                        row: row + 2,
                        message: "transaction split across the trace".into(),
                    });
                }
                if e.timestamp < last_ts {
                    return Err(AnalyticsError::Order {
                        row: row + 2,
                        message: "timestamp decreases".into(),
                    });
                }
            }
            last = Some(key);
            last_ts = e.timestamp;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalyticsError> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(TRACE_HEADER).map_err(AnalyticsError::from_csv)?;
        for e in &self.events {
            wr.serialize(e).map_err(AnalyticsError::from_csv)?;
        }
        wr.flush().map_err(|e| AnalyticsError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<EventTrace, AnalyticsError> {
        let events: Vec<Event> = super::read_rows(r, &TRACE_HEADER)?;
        let t = EventTrace { events };
        t.validate()?;
        Ok(t)
    }
}
