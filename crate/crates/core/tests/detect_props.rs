use std::collections::BTreeSet;

use lsdsim::analytics::trace::tx_hash;
use lsdsim::analytics::{detect_arbitrages, Event, EventKind, EventTrace, FindingKind};
use lsdsim::fixedmath::Amount;
use proptest::prelude::*;

const WAD: u128 = 1_000_000_000_000_000_000;
const SHAPELLA_BLOCK: u64 = 1_000;

fn ev(sender: &str, kind: EventKind, venue: &str, a: u128, b: u128) -> Event {
    Event {
        block: 0,
        tx_index: 0,
        tx_hash: String::new(),
        sender: sender.into(),
        kind,
        venue: venue.parse().unwrap(),
        amount_in: Amount::from_wei(a),
        amount_out: Amount::from_wei(b),
        timestamp: 0,
    }
}

#[derive(Debug, Clone)]
enum Plant {
    Staking { block: u64, size: u128 },
    Unstaking { block: u64, delay: u64, size: u128 },
    Noise { block: u64, size: u128, buy: bool },
    Lonely { block: u64, size: u128 },
}

fn plant() -> impl Strategy<Value = Plant> {
    prop_oneof![
        (1u64..5_000, WAD..100 * WAD).prop_map(|(block, size)| Plant::Staking { block, size }),
        (SHAPELLA_BLOCK..5_000, 1u64..2_000, WAD..100 * WAD)
            .prop_map(|(block, delay, size)| Plant::Unstaking { block, delay, size }),
        (1u64..5_000, WAD..100 * WAD, any::<bool>()).prop_map(|(block, size, buy)| Plant::Noise { block, size, buy }),
        (1u64..5_000, WAD..100 * WAD).prop_map(|(block, size)| Plant::Lonely { block, size }),
    ]
}

proptest! {
    #[test]
    fn finds_exactly_the_planted_arbitrages(plants in proptest::collection::vec(plant(), 1..60)) {
        let mut txs: Vec<(u64, Vec<Event>)> = Vec::new();
        let mut expected = BTreeSet::new();
        for (i, p) in plants.iter().enumerate() {
            let who = format!("s{i}");
            match *p {
                Plant::Staking { block, size } => {
                    txs.push((block, vec![
                        ev(&who, EventKind::Stake, "lido/ETH>LSD", size, size),
                        ev(&who, EventKind::Swap, "curve/LSD>ETH", size, size + size / 100),
                    ]));
                    expected.insert((FindingKind::StakingArb, who));
                }
                Plant::Unstaking { block, delay, size } => {
                    txs.push((block, vec![ev(&who, EventKind::Swap, "curve/ETH>LSD", size, size + size / 50)]));
                    txs.push((block + delay, vec![ev(&who, EventKind::Unstake, "lido/LSD>ETH", size + size / 50, size + size / 50)]));
                    expected.insert((FindingKind::UnstakingArb, who));
                }
                Plant::Noise { block, size, buy } => {
                    let venue = if buy { "curve/ETH>LSD" } else { "curve/LSD>ETH" };
                    txs.push((block, vec![ev(&who, EventKind::Swap, venue, size, size)]));
                }
                Plant::Lonely { block, size } => {
                    txs.push((block, vec![ev(&who, EventKind::Stake, "lido/ETH>LSD", size, size)]));
                }
            }
        }
        txs.sort_by_key(|(b, _)| *b);
        let mut trace = EventTrace::new();
        let mut last = (u64::MAX, 0u32);
        for (block, events) in txs {
            let idx = if last.0 == block { last.1 + 1 } else { 0 };
            last = (block, idx);
            for mut e in events {
                e.block = block;
                e.tx_index = idx;
                e.tx_hash = tx_hash(block, idx);
                e.timestamp = block * 12;
                trace.push(e);
            }
        }
        let found = detect_arbitrages(&trace, SHAPELLA_BLOCK * 12);
        let got: BTreeSet<_> = found.iter().map(|f| (f.kind, f.sender.clone())).collect();
        prop_assert_eq!(got.len(), found.len());
        prop_assert_eq!(got, expected);
    }
}
