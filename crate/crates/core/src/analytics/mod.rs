//! Offline analysis of traces and tick series: volatility and price
//! discrepancy, LP and hold-strategy PnL, and arbitrage detection.
//!
//! Floating point is used here and nowhere in state mutation. Reports print
//! twelve significant digits and keep the integer inputs alongside.

mod detect;
mod lp;
mod metrics;
pub mod trace;

use std::io::Read;

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::fixedmath::MathError;

pub use detect::{detect_arbitrages, write_findings, ArbFinding, FindingKind, MATCH_TOLERANCE_BPS, MATCH_WINDOW_SECS};
pub use lp::{
    compare_lp_vs_hold, hold_pnl_apr, lp_pnl_apr, positions_from_trace, write_report, ComparisonReport,
    ComparisonRow, Histories, HistoryRow, LpPosition, HISTORY_HEADER, YEAR_SECS,
};
pub use metrics::{
    day_metrics, price_discrepancy, realized_volatility, write_metrics, DayMetrics, Tick, TickSeries, DAY_SECS,
    TICKS_PER_DAY, TICK_HEADER,
};
pub use trace::{Asset, Event, EventKind, EventTrace, Venue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("io: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {row}: {message}")]
    Order { row: usize, message: String },
    #[error("day {0} has too few ticks")]
    InsufficientTicks(i64),
    #[error("position has zero initial value")]
    ZeroInitialValue,
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("missing history: {0}")]
    MissingHistory(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

impl AnalyticsError {
    pub(crate) fn from_csv(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        match e.kind() {
            csv::ErrorKind::Io(io) => AnalyticsError::Io(io.to_string()),
            csv::ErrorKind::Deserialize { err, .. } => {
                let col = err.field().map(|f| format!("column {}: ", f + 1)).unwrap_or_default();
                AnalyticsError::Schema {
                    line,
                    message: format!("{col}{}", err.kind()),
                }
            }
            _ => AnalyticsError::Schema {
                line,
                message: e.to_string(),
            },
        }
    }
}

/// Reads a CSV whose header must match `header` exactly.
pub(crate) fn read_rows<T: DeserializeOwned, R: Read>(r: R, header: &[&str]) -> Result<Vec<T>, AnalyticsError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let got = rd.headers().map_err(AnalyticsError::from_csv)?.clone();
    if got.is_empty() {
        return Err(AnalyticsError::Schema {
            line: 1,
            message: format!("empty file; expected header {}", header.join(",")),
        });
    }
    for (i, want) in header.iter().enumerate() {
        match got.get(i) {
            Some(h) if h == *want => {}
            Some(h) => {
                return Err(AnalyticsError::Schema {
                    line: 1,
                    message: format!("column {}: expected `{want}`, found `{h}`", i + 1),
                })
            }
            None => {
                return Err(AnalyticsError::Schema {
                    line: 1,
                    message: format!("missing column `{want}`"),
                })
            }
        }
    }
    if got.len() > header.len() {
        return Err(AnalyticsError::Schema {
            line: 1,
            message: format!("unexpected column `{}`", &got[header.len()]),
        });
    }
    rd.deserialize().map(|r| r.map_err(AnalyticsError::from_csv)).collect()
}

/// Formats `x` with twelve significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-6..=15).contains(&mag) {
        return format!("{:.11e}", x);
    }
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.to_string() }
    } else {
        s
    }
}
