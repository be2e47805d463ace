use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use super::trace::{Asset, Event, EventKind, EventTrace};
use super::AnalyticsError;
use crate::fixedmath::{Amount, Rounding, SignedAmount};

/// Unstake amount must be within this many basis points of the LSD bought.
pub const MATCH_TOLERANCE_BPS: u128 = 10;
/// Unstake must follow the swap within this window.
pub const MATCH_WINDOW_SECS: u64 = 30 * 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FindingKind {
    StakingArb,
    UnstakingArb,
}

impl FindingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::StakingArb => "StakingArb",
            FindingKind::UnstakingArb => "UnstakingArb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArbFinding {
    pub kind: FindingKind,
    pub tx_hashes: Vec<String>,
    pub sender: String,
    pub amount_in: Amount,
    pub amount_out: Amount,
    pub profit: SignedAmount,
}

fn within_tolerance(a: Amount, reference: Amount) -> bool {
    let slack = reference
        .mul_div(Amount::from_wei(MATCH_TOLERANCE_BPS), Amount::from_wei(10_000), Rounding::Down)
        .unwrap_or(Amount::ZERO);
    let lo = reference.saturating_sub(slack);
    let hi = reference.checked_add(slack).unwrap_or(reference);
    a >= lo && a <= hi
}

/// Gas plus flash-loan fees paid inside one transaction.
fn tx_costs(tx: &[Event]) -> Amount {
    tx.iter().fold(Amount::ZERO, |acc, e| {
        let c = match e.kind {
            EventKind::Gas => e.amount_in,
            EventKind::FlashLoan => e.amount_out.saturating_sub(e.amount_in),
            _ => Amount::ZERO,
        };
        acc.checked_add(c).unwrap_or(acc)
    })
}

fn staking_arb(tx: &[Event]) -> Option<ArbFinding> {
    for (i, stake) in tx.iter().enumerate() {
        if stake.kind != EventKind::Stake || !stake.venue.is(Asset::Eth, Asset::Lsd) {
            continue;
        }
        let swap = tx[i + 1..].iter().find(|e| {
            e.kind == EventKind::Swap
                && e.venue.is(Asset::Lsd, Asset::Eth)
                && e.sender == stake.sender
                && within_tolerance(e.amount_in, stake.amount_out)
        });
        if let Some(swap) = swap {
            let profit = SignedAmount::diff(swap.amount_out, stake.amount_in)
                .sub_amount(tx_costs(tx))
                .ok()?;
            return Some(ArbFinding {
                kind: FindingKind::StakingArb,
                tx_hashes: vec![stake.tx_hash.clone()],
                sender: stake.sender.clone(),
                amount_in: stake.amount_in,
                amount_out: swap.amount_out,
                profit,
            });
        }
    }
    None
}

/// Finds stake-then-sell transactions and buy-then-unstake pairs.
///
/// A staking arbitrage is a Stake followed in the same transaction by a Swap
/// of the minted LSD into ETH. An unstaking arbitrage is an ETH→LSD Swap at
/// or after `shapella_ts`, matched to the earliest later Unstake by the same
/// sender within [`MATCH_WINDOW_SECS`] whose amount agrees within
/// [`MATCH_TOLERANCE_BPS`]; each Unstake matches at most once. Profits net
/// out gas and flash-loan fees found in the transactions involved.
pub fn detect_arbitrages(trace: &EventTrace, shapella_ts: u64) -> Vec<ArbFinding> {
    let txs = trace.transactions();
    let mut findings: Vec<(usize, ArbFinding)> = Vec::new();
    // Unstakes per sender in trace order: (tx position, index in tx, event).
    let mut unstakes: BTreeMap<&str, Vec<(usize, usize, &Event)>> = BTreeMap::new();
    for (pos, tx) in txs.iter().enumerate() {
        if let Some(f) = staking_arb(tx) {
            findings.push((pos, f));
        }
        for (i, e) in tx.iter().enumerate() {
            if e.kind == EventKind::Unstake && e.venue.is(Asset::Lsd, Asset::Eth) {
                unstakes.entry(e.sender.as_str()).or_default().push((pos, i, e));
            }
        }
    }
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (pos, tx) in txs.iter().enumerate() {
        for swap in tx.iter() {
            if swap.kind != EventKind::Swap || !swap.venue.is(Asset::Eth, Asset::Lsd) || swap.timestamp < shapella_ts {
                continue;
            }
            let Some(cands) = unstakes.get(swap.sender.as_str()) else {
                continue;
            };
            let start = cands.partition_point(|(p, _, _)| *p <= pos);
            let hit = cands[start..].iter().find(|(p, i, u)| {
                u.timestamp.saturating_sub(swap.timestamp) <= MATCH_WINDOW_SECS
                    && within_tolerance(u.amount_in, swap.amount_out)
                    && !used.contains(&(*p, *i))
            });
            if let Some(&(upos, ui, u)) = hit {
                used.insert((upos, ui));
                let cost = tx_costs(tx).checked_add(tx_costs(txs[upos])).unwrap_or(Amount::ZERO);
                let profit = SignedAmount::diff(u.amount_out, swap.amount_in)
                    .sub_amount(cost)
                    .unwrap_or(SignedAmount::ZERO);
                findings.push((
                    pos,
                    ArbFinding {
                        kind: FindingKind::UnstakingArb,
                        tx_hashes: vec![swap.tx_hash.clone(), u.tx_hash.clone()],
                        sender: swap.sender.clone(),
                        amount_in: swap.amount_in,
                        amount_out: u.amount_out,
                        profit,
                    },
                ));
            }
        }
    }
    findings.sort_by_key(|(pos, f)| (*pos, f.kind));
    findings.into_iter().map(|(_, f)| f).collect()
}

pub fn write_findings<W: Write>(findings: &[ArbFinding], w: W) -> Result<(), AnalyticsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["kind", "sender", "tx_hashes", "amount_in_wei", "amount_out_wei", "profit_wei"])
        .map_err(AnalyticsError::from_csv)?;
    for f in findings {
        wr.write_record([
            f.kind.as_str().to_string(),
            f.sender.clone(),
            f.tx_hashes.join(";"),
            f.amount_in.to_string(),
            f.amount_out.to_string(),
            f.profit.to_string(),
        ])
        .map_err(AnalyticsError::from_csv)?;
    }
    wr.flush().map_err(|e| AnalyticsError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::trace::tx_hash;
    use crate::fixedmath::WAD;

    fn ev(block: u64, idx: u32, sender: &str, kind: EventKind, venue: &str, a: u128, b: u128) -> Event {
        Event {
            block,
            tx_index: idx,
            tx_hash: tx_hash(block, idx),
            sender: sender.into(),
            kind,
            venue: venue.parse().unwrap(),
            amount_in: Amount::from_wei(a),
            amount_out: Amount::from_wei(b),
            timestamp: block * 12,
        }
    }

    #[test]
    fn planted_staking_arb() {
        let t = EventTrace {
            events: vec![
                ev(1, 0, "bot", EventKind::Stake, "lido/ETH>LSD", 10 * WAD, 10 * WAD),
                ev(1, 0, "bot", EventKind::Swap, "curve/LSD>ETH", 10 * WAD, 10_050_000_000_000_000_000),
            ],
        };
        let f = detect_arbitrages(&t, 0);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::StakingArb);
        assert_eq!(f[0].profit, SignedAmount::positive(Amount::from_wei(50_000_000_000_000_000)));
    }

    #[test]
    fn planted_unstaking_arb_next_day() {
        let lsd = 102_040_000_000_000_000_000;
        let t = EventTrace {
            events: vec![
                ev(10, 0, "bot", EventKind::Swap, "curve/ETH>LSD", 100 * WAD, lsd),
                ev(10 + 7200, 0, "bot", EventKind::Unstake, "lido/LSD>ETH", lsd, lsd),
            ],
        };
        let f = detect_arbitrages(&t, 0);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].tx_hashes.len(), 2);
        assert_eq!(f[0].profit, SignedAmount::positive(Amount::from_wei(2_040_000_000_000_000_000)));
        assert!(detect_arbitrages(&t, 10 * 12 + 1).is_empty());
    }

    #[test]
    fn near_misses_are_ignored() {
        let t = EventTrace {
            events: vec![
                ev(1, 0, "a", EventKind::Stake, "lido/ETH>LSD", WAD, WAD),
                ev(1, 1, "a", EventKind::Swap, "curve/LSD>ETH", WAD, WAD),
                ev(2, 0, "a", EventKind::Swap, "curve/ETH>LSD", WAD, WAD),
                ev(3, 0, "b", EventKind::Unstake, "lido/LSD>ETH", WAD, WAD),
                ev(4, 0, "a", EventKind::Unstake, "lido/LSD>ETH", 2 * WAD, 2 * WAD),
            ],
        };
        assert!(detect_arbitrages(&t, 0).is_empty());
    }

    #[test]
    fn each_unstake_matches_once() {
        let t = EventTrace {
            events: vec![
                ev(1, 0, "a", EventKind::Swap, "curve/ETH>LSD", WAD, WAD),
                ev(2, 0, "a", EventKind::Swap, "curve/ETH>LSD", WAD, WAD),
                ev(3, 0, "a", EventKind::Unstake, "lido/LSD>ETH", WAD, WAD),
            ],
        };
        let f = detect_arbitrages(&t, 0);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].tx_hashes[0], tx_hash(1, 0));
    }
}
