use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{fmt_sig, read_rows, AnalyticsError};
use crate::fixedmath::Wad;

pub const TICK_HEADER: [&str; 3] = ["timestamp", "p1st_wad", "p2nd_wad"];
pub const DAY_SECS: u64 = 86_400;
pub const TICKS_PER_DAY: usize = 144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tick {
    pub timestamp: u64,
    #[serde(rename = "p1st_wad")]
    pub p1st: Wad,
    #[serde(rename = "p2nd_wad")]
    pub p2nd: Wad,
}

/// Price samples in time order; day `d` covers `[d·86400, (d+1)·86400)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TickSeries {
    pub ticks: Vec<Tick>,
}

impl TickSeries {
    pub fn new(ticks: Vec<Tick>) -> Result<Self, AnalyticsError> {
        for (i, t) in ticks.iter().enumerate() {
            if t.p1st.is_zero() || t.p2nd.is_zero() {
                return Err(AnalyticsError::Schema {
                    line: i + 2,
                    message: "prices must be positive".into(),
                });
            }
            if i > 0 && t.timestamp <= ticks[i - 1].timestamp {
                return Err(AnalyticsError::Order {
                    row: i + 2,
                    message: "timestamps must strictly increase".into(),
                });
            }
        }
        Ok(TickSeries { ticks })
    }

    pub fn push(&mut self, t: Tick) {
        self.ticks.push(t);
    }

    pub fn days(&self) -> BTreeMap<u64, &[Tick]> {
        let mut out = BTreeMap::new();
        let mut start = 0;
        for i in 1..=self.ticks.len() {
            if i == self.ticks.len() || self.ticks[i].timestamp / DAY_SECS != self.ticks[start].timestamp / DAY_SECS {
                out.insert(self.ticks[start].timestamp / DAY_SECS, &self.ticks[start..i]);
                start = i;
            }
        }
        out
    }

    pub fn day(&self, day: u64) -> &[Tick] {
        self.days().get(&day).copied().unwrap_or(&[])
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TickSeries, AnalyticsError> {
        let rows: Vec<Tick> = read_rows(r, &TICK_HEADER)?;
        if rows.is_empty() {
            return Err(AnalyticsError::Schema {
                line: 2,
                message: "no ticks".into(),
            });
        }
        TickSeries::new(rows)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalyticsError> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(TICK_HEADER).map_err(AnalyticsError::from_csv)?;
        for t in &self.ticks {
            wr.serialize(t).map_err(AnalyticsError::from_csv)?;
        }
        wr.flush().map_err(|e| AnalyticsError::Io(e.to_string()))
    }
}

fn ln_ratio(a: Wad, b: Wad) -> f64 {
    (a.to_f64() / b.to_f64()).ln()
}

/// Square root of the summed squared log returns over consecutive tick
/// pairs of the day.
pub fn realized_volatility(ticks: &[Tick]) -> Result<f64, AnalyticsError> {
    if ticks.len() < 2 {
        return Err(AnalyticsError::InsufficientTicks(day_of(ticks)));
    }
    let sum: f64 = ticks.windows(2).map(|w| ln_ratio(w[1].p2nd, w[0].p2nd).powi(2)).sum();
    Ok(sum.sqrt())
}

/// Mean relative gap `(p2nd - p1st) / p1st` over the day's ticks.
pub fn price_discrepancy(ticks: &[Tick]) -> Result<f64, AnalyticsError> {
    if ticks.is_empty() {
        return Err(AnalyticsError::InsufficientTicks(-1));
    }
    let sum: f64 = ticks
        .iter()
        .map(|t| {
            let p1 = t.p1st.to_f64();
            (t.p2nd.to_f64() - p1) / p1
        })
        .sum();
    Ok(sum / ticks.len() as f64)
}

fn day_of(ticks: &[Tick]) -> i64 {
    ticks.first().map(|t| (t.timestamp / DAY_SECS) as i64).unwrap_or(-1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayMetrics {
    pub day: u64,
    pub first_timestamp: u64,
    pub ticks: usize,
    pub partial: bool,
    pub rv: Option<f64>,
    pub pd: f64,
}

pub fn day_metrics(series: &TickSeries) -> Vec<DayMetrics> {
    series
        .days()
        .into_iter()
        .map(|(day, ticks)| DayMetrics {
            day,
            first_timestamp: ticks[0].timestamp,
            ticks: ticks.len(),
            partial: ticks.len() < TICKS_PER_DAY,
            rv: realized_volatility(ticks).ok(),
            pd: price_discrepancy(ticks).expect("days are never empty"),
        })
        .collect()
}

pub fn write_metrics<W: Write>(rows: &[DayMetrics], w: W) -> Result<(), AnalyticsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["day", "first_timestamp", "ticks", "partial", "rv", "pd"])
        .map_err(AnalyticsError::from_csv)?;
    for r in rows {
        wr.write_record([
            r.day.to_string(),
            r.first_timestamp.to_string(),
            r.ticks.to_string(),
            r.partial.to_string(),
            r.rv.map(fmt_sig).unwrap_or_default(),
            fmt_sig(r.pd),
        ])
        .map_err(AnalyticsError::from_csv)?;
    }
    wr.flush().map_err(|e| AnalyticsError::Io(e.to_string()))
}
