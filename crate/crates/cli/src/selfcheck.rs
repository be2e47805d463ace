use std::io::Write;

use lsdsim::amm::get_d;
use lsdsim::analytics::{price_discrepancy, realized_volatility, Tick};
use lsdsim::arbitrage::idealized_unstake_revenue;
use lsdsim::fixedmath::{Amount, Wad, WAD};
use lsdsim::lsd::{LsdProtocol, RebasingLsd, RewardBearingLsd};

type Check = (&'static str, fn() -> Result<(), String>);

fn eth(n: u128) -> Amount {
    Amount::from_wei(n * WAD)
}

fn expect<T: PartialEq + std::fmt::Debug>(got: T, want: T) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("got {got:?}, want {want:?}"))
    }
}

fn within(got: u128, want: u128, tol: u128) -> Result<(), String> {
    if got.abs_diff(want) <= tol {
        Ok(())
    } else {
        Err(format!("got {got}, want {want} ± {tol}"))
    }
}

fn rebase() -> Result<(), String> {
    let mut p = RebasingLsd::with_state(eth(100), eth(100), "genesis", Wad::from_raw(WAD / 10)).map_err(|e| e.to_string())?;
    p.distribute_rewards(eth(1)).map_err(|e| e.to_string())?;
    within(p.share_price().as_u256().to::<u128>(), 1_009_000_000_000_000_000, 1)?;
    within(p.balance_of("treasury").as_u256().to::<u128>(), WAD / 10, 1)
}

fn exchange_rate() -> Result<(), String> {
    let p = RewardBearingLsd::with_state(eth(1000), eth(50), eth(1000), "genesis", eth(1)).map_err(|e| e.to_string())?;
    expect(p.exchange_rate(), Wad::from_raw(1_050_000_000_000_000_000))
}

fn balanced_invariant() -> Result<(), String> {
    for amp in [1, 100, 5000] {
        expect(get_d(eth(500), eth(500), amp).map_err(|e| e.to_string())?, eth(1000))?;
    }
    Ok(())
}

fn unstake_revenue() -> Result<(), String> {
    let r = idealized_unstake_revenue(eth(100), Wad::from_raw(980_000_000_000_000_000)).map_err(|e| e.to_string())?;
    within(r.to_string().parse::<u128>().map_err(|e| e.to_string())?, 2_040_816_326_530_612_244, 1)
}

fn day(prices: &[(u128, u128)]) -> Vec<Tick> {
    prices
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Tick {
            timestamp: i as u64 * 600,
            p1st: Wad::from_raw(a),
            p2nd: Wad::from_raw(b),
        })
        .collect()
}

fn metrics() -> Result<(), String> {
    let flat = day(&vec![(WAD, WAD); 144]);
    expect(realized_volatility(&flat).map_err(|e| e.to_string())?, 0.0)?;
    let offset = day(&vec![(WAD, WAD + WAD / 100); 144]);
    let pd = price_discrepancy(&offset).map_err(|e| e.to_string())?;
    if (pd - 0.01).abs() > 1e-12 {
        return Err(format!("PD {pd}"));
    }
    Ok(())
}

const CHECKS: &[Check] = &[
    ("rebase share price and treasury fee", rebase),
    ("reward-bearing exchange rate", exchange_rate),
    ("stableswap balanced invariant", balanced_invariant),
    ("idealized unstaking revenue", unstake_revenue),
    ("volatility and discrepancy", metrics),
];

/// Prints one line per check; returns the number that failed.
pub fn run_all(out: &mut dyn Write) -> usize {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => {
                let _ = writeln!(out, "PASS {name}");
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(out, "FAIL {name}: {e}");
            }
        }
    }
    failed
}
