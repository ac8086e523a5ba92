//! Small worked games with known exact answers, shared by the
//! `golden_examples` suite and the acceptance tests.

use crate::analysis::{multi_identity_probe, GridSpec};
use crate::error::Result;
use crate::mechanism::{run, Game, MechanismKind};
use crate::model::{
    AdditiveOfflineBid, AdditiveOnlineBid, Catalog, OptId, SlotHorizon, SubstitutableOfflineBid,
    SubstitutableOnlineBid, UserId,
};
use crate::money::Money;
use crate::online::{add_on, OnlineAdditiveGame};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub game: Game,
}

fn m(n: i64) -> Money {
    Money::from_integer(n)
}

fn costs(list: &[(u32, i64)]) -> Catalog {
    Catalog::from_costs(list.iter().map(|(j, c)| (*j, m(*c)))).expect("positive costs")
}

/// One optimization of cost 100 over three slots: an early high bidder,
/// a long low bidder and two late arrivals.
pub fn staggered_arrivals() -> Game {
    let bid = |u, s, v: &[i64]| AdditiveOnlineBid::new(u, 1, s, v.iter().map(|x| m(*x)).collect());
    Game::AdditiveOnline {
        catalog: costs(&[(1, 100)]),
        horizon: SlotHorizon::new(3).expect("three slots"),
        bids: vec![
            bid(1, 1, &[101]),
            bid(2, 1, &[16, 16, 16]),
            bid(3, 2, &[26]),
            bid(4, 2, &[26]),
        ],
    }
}

/// Three overlapping optimizations and four users with substitute sets.
pub fn three_substitutes() -> Game {
    Game::SubstitutableOffline {
        catalog: costs(&[(1, 60), (2, 180), (3, 100)]),
        bids: vec![
            SubstitutableOfflineBid::new(1, [1, 2], m(100)),
            SubstitutableOfflineBid::new(2, [3], m(101)),
            SubstitutableOfflineBid::new(3, [1, 2, 3], m(60)),
            SubstitutableOfflineBid::new(4, [2], m(70)),
        ],
    }
}

/// Online substitutes over three slots; with `late_fourth` a fourth user
/// wanting only optimization 3 arrives in the last slot.
pub fn online_substitutes(late_fourth: bool) -> Game {
    let bid = |u, subs: &[u32], s: u32, e: u32| {
        SubstitutableOnlineBid::new(
            u,
            subs.iter().copied(),
            s,
            vec![m(100); (e - s + 1) as usize],
        )
    };
    let mut bids = vec![
        bid(1, &[1, 2], 1, 2),
        bid(2, &[1, 2, 3], 2, 3),
        bid(3, &[3], 3, 3),
    ];
    if late_fourth {
        bids.push(bid(4, &[3], 3, 3));
    }
    Game::SubstitutableOnline {
        catalog: costs(&[(1, 60), (2, 100), (3, 50)]),
        horizon: SlotHorizon::new(3).expect("three slots"),
        bids,
    }
}

/// One big user (id 0) valuing the optimization at its full cost of 101,
/// and 99 small users (ids 1..=99) valuing it at 1 each.
pub fn big_and_small() -> Game {
    let mut bids = vec![AdditiveOfflineBid::new(UserId(0), [(1, m(101))])];
    bids.extend((1..=99).map(|u| AdditiveOfflineBid::new(UserId(u), [(1, m(1))])));
    Game::AdditiveOffline {
        catalog: costs(&[(1, 101)]),
        bids,
    }
}

/// Two substitutes where user 1 can steer user 2 away from the optimization
/// user 3 shares with them.
pub fn steerable_substitutes() -> Game {
    Game::SubstitutableOffline {
        catalog: costs(&[(1, 6), (2, 5)]),
        bids: vec![
            SubstitutableOfflineBid::new(1, [1], m(5)),
            SubstitutableOfflineBid::new(2, [1, 2], Money::new(251, 100)),
            SubstitutableOfflineBid::new(3, [2], m(7)),
        ],
    }
}

fn check(name: &'static str, game: Game, expected: String, actual: String) -> GoldenCheck {
    GoldenCheck {
        name,
        passed: expected == actual,
        detail: format!("expected {expected}, got {actual}"),
        game,
    }
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn user_payments(
    kind: MechanismKind,
    game: &Game,
    users: impl IntoIterator<Item = u32>,
) -> Result<String> {
    let settlement = run(kind, game)?;
    Ok(join(
        users
            .into_iter()
            .map(|u| settlement.payments.user_total(UserId(u))),
    ))
}

pub fn staggered_arrivals_check() -> Result<Vec<GoldenCheck>> {
    let game = staggered_arrivals();
    let Game::AdditiveOnline {
        catalog,
        horizon,
        bids,
    } = &game
    else {
        unreachable!()
    };
    let trace = add_on(&OnlineAdditiveGame::new(
        catalog.optimization(OptId(1))?,
        *horizon,
        bids.clone(),
    )?)?;
    let paid = join((1..=4).map(|u| trace.payments.get(&UserId(u)).cloned().unwrap_or_default()));
    let cs = join((1..=3).map(|t| {
        format!(
            "{{{}}}",
            join(trace.schedule.cumulative(OptId(1), t).iter().map(|u| u.0))
        )
    }));
    Ok(vec![
        check(
            "staggered arrivals: payments",
            game.clone(),
            "100, 25, 25, 25".into(),
            paid,
        ),
        check(
            "staggered arrivals: cumulative serviced sets",
            game,
            "{1}, {1, 2, 3, 4}, {1, 2, 3, 4}".into(),
            cs,
        ),
    ])
}

pub fn three_substitutes_check() -> Result<Vec<GoldenCheck>> {
    let game = three_substitutes();
    let settlement = run(MechanismKind::SubstOff, &game)?;
    let implemented = format!("{{{}}}", join(settlement.implemented.iter().map(|j| j.0)));
    let paid = join((1..=4).map(|u| settlement.payments.user_total(UserId(u))));
    Ok(vec![
        check(
            "three substitutes: implemented",
            game.clone(),
            "{1, 3}".into(),
            implemented,
        ),
        check(
            "three substitutes: payments",
            game,
            "30, 100, 30, 0".into(),
            paid,
        ),
    ])
}

pub fn online_substitutes_check() -> Result<Vec<GoldenCheck>> {
    let base = online_substitutes(false);
    let late = online_substitutes(true);
    Ok(vec![
        check(
            "online substitutes: payments",
            base.clone(),
            "30, 30, 50".into(),
            user_payments(MechanismKind::SubstOn, &base, 1..=3)?,
        ),
        check(
            "online substitutes with a late fourth user: payments",
            late.clone(),
            "30, 25, 25".into(),
            user_payments(MechanismKind::SubstOn, &late, 2..=4)?,
        ),
    ])
}

pub fn big_and_small_check() -> Result<Vec<GoldenCheck>> {
    let game = big_and_small();
    let alone = run(MechanismKind::AddOff, &game)?;
    let alone_summary = format!(
        "serviced {}, big pays {}",
        alone.outcome().serviced(OptId(1)).len(),
        alone.payments.user_total(UserId(0))
    );
    let grid = GridSpec::default();
    let report = multi_identity_probe(
        MechanismKind::AddOff,
        &game,
        UserId(0),
        2,
        &grid,
        &[vec![m(1), m(1)]],
    )?;
    let split = &report.splits[0];
    let split_game = {
        let mut g = game.clone();
        if let Game::AdditiveOffline { bids, .. } = &mut g {
            bids.retain(|b| b.user != UserId(0));
            bids.push(AdditiveOfflineBid::new(UserId(100), [(1, m(101))]));
            bids.push(AdditiveOfflineBid::new(UserId(101), [(1, m(101))]));
        }
        g
    };
    let together = run(MechanismKind::AddOff, &split_game)?;
    let shares: std::collections::BTreeSet<Money> =
        together.payments.per_user().into_values().collect();
    let split_summary = format!(
        "serviced {}, shares {{{}}}, big utility {} -> {}, others harmed {}",
        together.outcome().serviced(OptId(1)).len(),
        join(shares),
        report.baseline_splitter,
        split.splitter_utility,
        !report.harmed().is_empty()
    );
    Ok(vec![
        check(
            "big and small, one identity",
            game.clone(),
            "serviced 1, big pays 101".into(),
            alone_summary,
        ),
        check(
            "big and small, two identities",
            game,
            "serviced 101, shares {1}, big utility 0 -> 99, others harmed false".into(),
            split_summary,
        ),
    ])
}

pub fn steerable_substitutes_check() -> Result<Vec<GoldenCheck>> {
    let game = steerable_substitutes();
    let half = Money::new(1, 2);
    let report = multi_identity_probe(
        MechanismKind::SubstOff,
        &game,
        UserId(1),
        2,
        &GridSpec::default(),
        &[vec![half.clone(), half]],
    )?;
    let before = report.baseline_others[&UserId(3)].clone();
    let after = report.splits[0].others[&UserId(3)].clone();
    let summary = format!(
        "user 3 utility {} -> {}, harm found {}",
        before,
        after,
        report.harm_found()
    );
    Ok(vec![check(
        "steerable substitutes: split harms user 3",
        game,
        "user 3 utility 4.5 -> 2, harm found true".into(),
        summary,
    )])
}

/// Every golden check, in a fixed order.
pub fn all_checks() -> Result<Vec<GoldenCheck>> {
    let mut out = staggered_arrivals_check()?;
    out.extend(three_substitutes_check()?);
    out.extend(online_substitutes_check()?);
    out.extend(big_and_small_check()?);
    out.extend(steerable_substitutes_check()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_golden_check_passes() {
        for c in all_checks().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
