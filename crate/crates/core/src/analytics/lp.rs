use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::trace::{Asset, EventKind, EventTrace};
use super::{fmt_sig, read_rows, AnalyticsError};
use crate::fixedmath::{Amount, Rounding, SignedAmount, Wad};
use crate::lsd::Mechanism;

pub const YEAR_SECS: u64 = 31_536_000;
pub const HISTORY_HEADER: [&str; 5] = ["venue", "mechanism", "timestamp", "rate_wad", "spot_wad"];

/// One observation of a pool and its protocol. `rate` is the share price
/// for rebasing tokens and the exchange rate for reward-bearing ones;
/// `spot` is the pool's LSD price in ETH.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRow {
    pub venue: String,
    pub mechanism: String,
    pub timestamp: u64,
    #[serde(rename = "rate_wad")]
    pub rate: Wad,
    #[serde(rename = "spot_wad")]
    pub spot: Wad,
}

#[derive(Debug, Clone, Default)]
pub struct Histories {
    venues: BTreeMap<String, (Mechanism, Vec<(u64, Wad, Wad)>)>,
}

impl Histories {
    pub fn from_rows(rows: Vec<HistoryRow>) -> Result<Self, AnalyticsError> {
        let mut venues: BTreeMap<String, (Mechanism, Vec<(u64, Wad, Wad)>)> = BTreeMap::new();
        for (i, r) in rows.into_iter().enumerate() {
            let line = i + 2;
            let mech = Mechanism::parse(&r.mechanism).ok_or_else(|| AnalyticsError::Schema {
                line,
                message: format!("unknown mechanism `{}`", r.mechanism),
            })?;
            let e = venues.entry(r.venue.clone()).or_insert((mech, Vec::new()));
            if e.0 != mech {
                return Err(AnalyticsError::Schema {
                    line,
                    message: format!("venue `{}` changes mechanism", r.venue),
                });
            }
            if e.1.last().is_some_and(|l| l.0 > r.timestamp) {
                return Err(AnalyticsError::Order {
                    row: line,
                    message: format!("timestamps of venue `{}` decrease", r.venue),
                });
            }
            e.1.push((r.timestamp, r.rate, r.spot));
        }
        Ok(Histories { venues })
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, AnalyticsError> {
        Self::from_rows(read_rows(r, &HISTORY_HEADER)?)
    }

    pub fn write_csv<W: Write>(rows: &[HistoryRow], w: W) -> Result<(), AnalyticsError> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(HISTORY_HEADER).map_err(AnalyticsError::from_csv)?;
        for r in rows {
            wr.serialize(r).map_err(AnalyticsError::from_csv)?;
        }
        wr.flush().map_err(|e| AnalyticsError::Io(e.to_string()))
    }

    pub fn mechanism(&self, venue: &str) -> Option<Mechanism> {
        self.venues.get(venue).map(|v| v.0)
    }

    /// Latest `(rate, spot)` observed at or before `t`.
    pub fn at(&self, venue: &str, t: u64) -> Result<(Wad, Wad), AnalyticsError> {
        let (_, rows) = self
            .venues
            .get(venue)
            .ok_or_else(|| AnalyticsError::MissingHistory(format!("no rows for venue `{venue}`")))?;
        let idx = rows.partition_point(|r| r.0 <= t);
        if idx == 0 {
            return Err(AnalyticsError::MissingHistory(format!("venue `{venue}` has no row at or before {t}")));
        }
        let r = rows[idx - 1];
        Ok((r.1, r.2))
    }
}

/// A closed liquidity position: LSD `x` and ETH `y` in at `t0`, out at `t1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpPosition {
    pub id: String,
    pub owner: String,
    pub venue: String,
    pub t0: u64,
    pub t1: u64,
    pub q_x0: Amount,
    pub q_y0: Amount,
    pub q_x1: Amount,
    pub q_y1: Amount,
    pub p_x0: Wad,
    pub p_x1: Wad,
    pub tx_fees: Amount,
}

fn value(q_y: Amount, q_x: Amount, p_x: Wad) -> Result<Amount, AnalyticsError> {
    Ok(q_y.checked_add(q_x.wad_mul(p_x, Rounding::Down)?)?)
}

fn apr(pnl: SignedAmount, v0: Amount, t0: u64, t1: u64) -> f64 {
    pnl.to_f64() / v0.to_f64() * (YEAR_SECS as f64 / (t1 - t0) as f64)
}

fn check_window(pos: &LpPosition) -> Result<Amount, AnalyticsError> {
    if pos.t1 <= pos.t0 {
        return Err(AnalyticsError::InvalidPosition(format!("{}: t1 must follow t0", pos.id)));
    }
    let v0 = value(pos.q_y0, pos.q_x0, pos.p_x0)?;
    if v0.is_zero() {
        return Err(AnalyticsError::ZeroInitialValue);
    }
    Ok(v0)
}

pub fn lp_pnl_apr(pos: &LpPosition, include_tx_fees: bool) -> Result<(SignedAmount, f64), AnalyticsError> {
    let v0 = check_window(pos)?;
    let v1 = value(pos.q_y1, pos.q_x1, pos.p_x1)?;
    let mut pnl = SignedAmount::diff(v1, v0);
    if include_tx_fees {
        pnl = pnl.sub_amount(pos.tx_fees)?;
    }
    Ok((pnl, apr(pnl, v0, pos.t0, pos.t1)))
}

/// PnL of keeping the deposited tokens in the wallet instead. A rebasing
/// balance grows with the share price; a reward-bearing one stays fixed.
pub fn hold_pnl_apr(
    pos: &LpPosition,
    mechanism: Mechanism,
    histories: &Histories,
) -> Result<(SignedAmount, f64), AnalyticsError> {
    let v0 = check_window(pos)?;
    let q_hold = match mechanism {
        Mechanism::Rebasing => {
            let (ps0, _) = histories.at(&pos.venue, pos.t0)?;
            let (ps1, _) = histories.at(&pos.venue, pos.t1)?;
            if ps0.is_zero() {
                return Err(AnalyticsError::MissingHistory(format!("zero share price for `{}`", pos.venue)));
            }
            pos.q_x0
                .mul_div(Amount::from_u256(ps1.as_u256()), Amount::from_u256(ps0.as_u256()), Rounding::Down)?
        }
        Mechanism::RewardBearing => pos.q_x0,
    };
    let v1 = value(pos.q_y0, q_hold, pos.p_x1)?;
    let pnl = SignedAmount::diff(v1, v0);
    Ok((pnl, apr(pnl, v0, pos.t0, pos.t1)))
}

#[derive(Debug, Default)]
struct Open {
    n: usize,
    t0: u64,
    t1: u64,
    units: Amount,
    q: [Amount; 4],
    fees: Amount,
    active: bool,
}

/// Rebuilds positions from AddLiquidity/RemoveLiquidity events. A position
/// closes when its LP balance returns to zero; gas paid in the same
/// transactions counts as its transaction fees. Prices come from
/// `histories`; positions that cannot be priced or never close are
/// returned as errors keyed by id.
pub fn positions_from_trace(
    trace: &EventTrace,
    histories: &Histories,
) -> Vec<Result<LpPosition, (String, AnalyticsError)>> {
    let mut open: BTreeMap<(String, String), Open> = BTreeMap::new();
    let mut out = Vec::new();
    let finish = |owner: &str, venue: &str, o: &Open| {
        let id = format!("{owner}@{venue}#{}", o.n);
        let priced = (|| {
            let (_, p0) = histories.at(venue, o.t0)?;
            let (_, p1) = histories.at(venue, o.t1)?;
            Ok(LpPosition {
                id: id.clone(),
                owner: owner.to_string(),
                venue: venue.to_string(),
                t0: o.t0,
                t1: o.t1,
                q_x0: o.q[0],
                q_y0: o.q[1],
                q_x1: o.q[2],
                q_y1: o.q[3],
                p_x0: p0,
                p_x1: p1,
                tx_fees: o.fees,
            })
        })();
        priced.map_err(|e| (id, e))
    };
    for tx in trace.transactions() {
        let gas: Amount = tx
            .iter()
            .filter(|e| e.kind == EventKind::Gas)
            .fold(Amount::ZERO, |a, e| a.checked_add(e.amount_in).unwrap_or(a));
        let mut touched: Vec<(String, String)> = Vec::new();
        for e in tx {
            let add = e.kind == EventKind::AddLiquidity;
            if !add && e.kind != EventKind::RemoveLiquidity {
                continue;
            }
            let key = (e.sender.clone(), e.venue.name.clone());
            let o = open.entry(key.clone()).or_default();
            if !o.active {
                *o = Open {
                    n: o.n + 1,
                    t0: e.timestamp,
                    active: true,
                    ..Open::default()
                };
            }
            let sum = |a: Amount, b: Amount| a.checked_add(b).unwrap_or(a);
            match (add, e.venue.path) {
                (true, Some((Asset::Lsd, _))) => o.q[0] = sum(o.q[0], e.amount_in),
                (true, _) => {
                    o.q[1] = sum(o.q[1], e.amount_in);
                    o.units = sum(o.units, e.amount_out);
                }
                (false, Some((_, Asset::Lsd))) => o.q[2] = sum(o.q[2], e.amount_out),
                (false, _) => {
                    o.q[3] = sum(o.q[3], e.amount_out);
                    o.units = o.units.saturating_sub(e.amount_in);
                    o.t1 = e.timestamp;
                }
            }
            if !touched.contains(&key) {
                touched.push(key);
            }
        }
        if let Some(first) = touched.first() {
            // Gas belongs to the sender's position in this venue.
            if let Some(o) = open.get_mut(first) {
                o.fees = o.fees.checked_add(gas).unwrap_or(o.fees);
            }
        }
        for key in touched {
            let o = open.get_mut(&key).expect("touched positions exist");
            if o.units.is_zero() && o.t1 != 0 {
                out.push(finish(&key.0, &key.1, o));
                o.active = false;
            }
        }
    }
    for ((owner, venue), o) in &open {
        if o.active {
            out.push(Err((
                format!("{owner}@{venue}#{}", o.n),
                AnalyticsError::InvalidPosition("position never fully withdrawn".into()),
            )));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub id: String,
    pub result: Result<Comparison, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub position: LpPosition,
    pub mechanism: Mechanism,
    pub pnl_lp_gross: SignedAmount,
    pub apr_lp_gross: f64,
    pub pnl_lp_net: SignedAmount,
    pub apr_lp_net: f64,
    pub pnl_hold: SignedAmount,
    pub apr_hold: f64,
    pub hold_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn evaluated(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_ok()).count()
    }

    pub fn hold_wins(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.result.as_ref().is_ok_and(|c| c.hold_wins))
            .count()
    }

    pub fn hold_wins_fraction(&self) -> Option<f64> {
        let n = self.evaluated();
        (n > 0).then(|| self.hold_wins() as f64 / n as f64)
    }
}

fn compare_one(pos: &LpPosition, histories: &Histories) -> Result<Comparison, AnalyticsError> {
    let mechanism = histories
        .mechanism(&pos.venue)
        .ok_or_else(|| AnalyticsError::MissingHistory(format!("no rows for venue `{}`", pos.venue)))?;
    let (pnl_lp_gross, apr_lp_gross) = lp_pnl_apr(pos, false)?;
    let (pnl_lp_net, apr_lp_net) = lp_pnl_apr(pos, true)?;
    let (pnl_hold, apr_hold) = hold_pnl_apr(pos, mechanism, histories)?;
    Ok(Comparison {
        position: pos.clone(),
        mechanism,
        pnl_lp_gross,
        apr_lp_gross,
        pnl_lp_net,
        apr_lp_net,
        pnl_hold,
        apr_hold,
        hold_wins: pnl_hold.checked_sub(pnl_lp_net).map(|d| d.is_positive()).unwrap_or(false),
    })
}

/// Net LP return against holding, one row per position, sorted by id.
/// Holding wins only when strictly better.
pub fn compare_lp_vs_hold(
    positions: &[Result<LpPosition, (String, AnalyticsError)>],
    histories: &Histories,
) -> ComparisonReport {
    let mut rows: Vec<ComparisonRow> = positions
        .iter()
        .map(|p| match p {
            Ok(pos) => ComparisonRow {
                id: pos.id.clone(),
                result: compare_one(pos, histories).map_err(|e| e.to_string()),
            },
            Err((id, e)) => ComparisonRow {
                id: id.clone(),
                result: Err(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    ComparisonReport { rows }
}

const REPORT_HEADER: [&str; 22] = [
    "position",
    "owner",
    "venue",
    "mechanism",
    "t0",
    "t1",
    "q_x0_wei",
    "q_y0_wei",
    "q_x1_wei",
    "q_y1_wei",
    "p_x0_wad",
    "p_x1_wad",
    "tx_fees_wei",
    "pnl_lp_gross_wei",
    "apr_lp_gross",
    "pnl_lp_net_wei",
    "apr_lp_net",
    "pnl_hold_wei",
    "apr_hold",
    "hold_wins",
    "error",
    "apr_basis",
];

/// Writes the comparison as CSV followed by one `#` summary line.
pub fn write_report<W: Write>(report: &ComparisonReport, mut w: W) -> Result<(), AnalyticsError> {
    {
        let mut wr = csv::Writer::from_writer(&mut w);
        wr.write_record(REPORT_HEADER).map_err(AnalyticsError::from_csv)?;
        for row in &report.rows {
            let rec: Vec<String> = match &row.result {
                Ok(c) => {
                    let p = &c.position;
                    vec![
                        row.id.clone(),
                        p.owner.clone(),
                        p.venue.clone(),
                        c.mechanism.as_str().to_string(),
                        p.t0.to_string(),
                        p.t1.to_string(),
                        p.q_x0.to_string(),
                        p.q_y0.to_string(),
                        p.q_x1.to_string(),
                        p.q_y1.to_string(),
                        p.p_x0.to_string(),
                        p.p_x1.to_string(),
                        p.tx_fees.to_string(),
                        c.pnl_lp_gross.to_string(),
                        fmt_sig(c.apr_lp_gross),
                        c.pnl_lp_net.to_string(),
                        fmt_sig(c.apr_lp_net),
                        c.pnl_hold.to_string(),
                        fmt_sig(c.apr_hold),
                        c.hold_wins.to_string(),
                        String::new(),
                        "linear".into(),
                    ]
                }
                Err(e) => {
                    let mut v = vec![String::new(); REPORT_HEADER.len()];
                    v[0] = row.id.clone();
                    v[20] = e.clone();
                    v[21] = "linear".into();
                    v
                }
            };
            wr.write_record(rec).map_err(AnalyticsError::from_csv)?;
        }
        wr.flush().map_err(|e| AnalyticsError::Io(e.to_string()))?;
    }
    let frac = report.hold_wins_fraction().map(fmt_sig).unwrap_or_else(|| "NA".into());
    writeln!(
        w,
        "# hold_wins {}/{} fraction {}",
        report.hold_wins(),
        report.evaluated(),
        frac
    )
    .map_err(|e| AnalyticsError::Io(e.to_string()))
}
