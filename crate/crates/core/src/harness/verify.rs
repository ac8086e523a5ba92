use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    deviation_search, multi_identity_probe, GridSpec, MultiIdentityReport, SplitOutcome,
};
use crate::error::{Error, Result};
use crate::mechanism::{run, Game, MechanismKind, Settlement};
use crate::model::{
    AdditiveOfflineBid, AdditiveOnlineBid, Catalog, OptId, SlotHorizon, SlotValues,
    SubstitutableOnlineBid, UserId,
};
use crate::money::Money;
use crate::scenarios::{naive_control_game, small_game, GameShape, SmallGameLimits};

use super::golden;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    CostRecovery,
    Truthfulness,
    MultiIdentity,
    Degeneration,
    GoldenExamples,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::CostRecovery,
        Suite::Truthfulness,
        Suite::MultiIdentity,
        Suite::Degeneration,
        Suite::GoldenExamples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::CostRecovery => "cost_recovery",
            Suite::Truthfulness => "truthfulness",
            Suite::MultiIdentity => "multi_identity",
            Suite::Degeneration => "degeneration",
            Suite::GoldenExamples => "golden_examples",
        }
    }

    /// Corpus size used when none is given.
    pub fn default_games(self) -> u32 {
        match self {
            Suite::CostRecovery => 10_000,
            Suite::Truthfulness => 1_000,
            Suite::MultiIdentity | Suite::Degeneration => 1_000,
            Suite::GoldenExamples => 0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Games per mechanism; `None` uses the suite default.
    pub games: Option<u32>,
    /// Run the pay-your-bid positive control alongside the truthfulness suite.
    pub include_naive: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            games: None,
            include_naive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: String,
    pub detail: String,
    /// The offending game, ready for `replay`.
    pub game: Option<Game>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        SuiteReport {
            suite,
            checks: 0,
            violations: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn absorb(&mut self, checks: usize, violations: Vec<Violation>) {
        self.checks += checks;
        self.violations.extend(violations);
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "{verdict} {}: {} checks, {} violations",
            self.suite,
            self.checks,
            self.violations.len()
        )?;
        for note in &self.notes {
            writeln!(f, "  note: {note}")?;
        }
        for v in &self.violations {
            writeln!(f, "  violation [{}]: {}", v.property, v.detail)?;
            if let Some(game) = &v.game {
                writeln!(
                    f,
                    "    game: {}",
                    serde_json::to_string(game).expect("games serialize")
                )?;
            }
        }
        Ok(())
    }
}

pub fn verify(suite: Suite, options: &VerifyOptions) -> Result<SuiteReport> {
    let games = options.games.unwrap_or(suite.default_games());
    match suite {
        Suite::CostRecovery => cost_recovery(options.seed, games),
        Suite::Truthfulness => truthfulness(options.seed, games, options.include_naive),
        Suite::MultiIdentity => multi_identity(options.seed, games),
        Suite::Degeneration => degeneration(options.seed, games),
        Suite::GoldenExamples => golden_examples(),
    }
}

/// The mechanism designed for each game shape.
pub fn native_mechanism(shape: GameShape) -> MechanismKind {
    match shape {
        GameShape::AdditiveOffline => MechanismKind::AddOff,
        GameShape::AdditiveOnline => MechanismKind::AddOn,
        GameShape::SubstitutableOffline => MechanismKind::SubstOff,
        GameShape::SubstitutableOnline => MechanismKind::SubstOn,
    }
}

fn violation(property: &str, detail: String, game: &Game) -> Violation {
    Violation {
        property: property.into(),
        detail,
        game: Some(game.clone()),
    }
}

/// Per-optimization cost recovery of one settlement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Recovery {
    /// Implemented optimizations whose payments differ from their cost.
    pub inexact: Vec<(OptId, Money, Money)>,
    /// Implemented optimizations whose payments fall short of their cost.
    pub short: Vec<(OptId, Money, Money)>,
    pub balance: Money,
}

pub fn recovery(game: &Game, settlement: &Settlement) -> Result<Recovery> {
    let mut out = Recovery::default();
    let mut cost_total = Money::zero();
    for j in &settlement.implemented {
        let cost = game.catalog().cost(*j)?.clone();
        let paid = settlement.payments.opt_total(*j);
        if paid != cost {
            out.inexact.push((*j, paid.clone(), cost.clone()));
        }
        if paid < cost {
            out.short.push((*j, paid, cost.clone()));
        }
        cost_total += &cost;
    }
    out.balance = settlement.payments.total() - &cost_total;
    Ok(out)
}

fn cost_recovery(seed: u64, games: u32) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::CostRecovery);
    for shape in GameShape::ALL {
        let kind = native_mechanism(shape);
        let results: Vec<(Vec<Violation>, bool)> = (0..games)
            .into_par_iter()
            .map(|i| {
                let game = small_game(seed, i, shape, SmallGameLimits::default());
                let r = recovery(&game, &run(kind, &game)?)?;
                let mut v = Vec::new();
                let online = kind.is_online();
                if !online && !r.inexact.is_empty() {
                    v.push(violation(
                        "exact_recovery",
                        format!("{kind}: paid/cost {:?}", r.inexact),
                        &game,
                    ));
                }
                if !r.short.is_empty() {
                    v.push(violation(
                        "recovers_cost",
                        format!("{kind}: paid/cost {:?}", r.short),
                        &game,
                    ));
                }
                if r.balance.is_negative() {
                    v.push(violation(
                        "nonnegative_balance",
                        format!("{kind}: balance {}", r.balance),
                        &game,
                    ));
                }
                Ok((v, online && !r.inexact.is_empty()))
            })
            .collect::<Result<_>>()?;
        let surplus = results.iter().filter(|(_, s)| *s).count();
        if kind.is_online() {
            report.notes.push(format!(
                "{kind}: {surplus} of {games} games collected more than cost from users who left before later arrivals lowered the share"
            ));
        }
        report.absorb(
            games as usize,
            results.into_iter().flat_map(|(v, _)| v).collect(),
        );
    }
    Ok(report)
}

/// The user with the largest declared total, lowest id on ties.
fn largest_bidder(game: &Game) -> UserId {
    let Game::AdditiveOffline { bids, .. } = game else {
        unreachable!("control games are additive offline")
    };
    bids.iter()
        .map(|b| (b.values.values().sum::<Money>(), std::cmp::Reverse(b.user)))
        .max()
        .map(|(_, std::cmp::Reverse(u))| u)
        .expect("control games have users")
}

/// Share of positive-control games in which the pay-your-bid mechanism
/// hands its largest bidder a profitable deviation, with the games where it
/// did not.
pub fn naive_detection(seed: u64, games: u32, grid: &GridSpec) -> Result<(usize, Vec<Game>)> {
    let results: Vec<(bool, Game)> = (0..games)
        .into_par_iter()
        .map(|i| {
            let game = naive_control_game(seed, i);
            let report =
                deviation_search(MechanismKind::Naive, &game, largest_bidder(&game), grid)?;
            Ok((report.is_profitable(), game))
        })
        .collect::<Result<_>>()?;
    let detected = results.iter().filter(|(d, _)| *d).count();
    Ok((
        detected,
        results
            .into_iter()
            .filter(|(d, _)| !d)
            .map(|(_, g)| g)
            .collect(),
    ))
}

/// Every user of every game in the corpus tries every grid deviation.
pub fn truthfulness_for(
    shape: GameShape,
    seed: u64,
    games: u32,
    grid: &GridSpec,
) -> Result<(usize, Vec<Violation>)> {
    let kind = native_mechanism(shape);
    let results: Vec<(usize, Vec<Violation>)> = (0..games)
        .into_par_iter()
        .map(|i| {
            let game = small_game(seed, i, shape, SmallGameLimits::default());
            let mut found = Vec::new();
            let users = game.users();
            for user in &users {
                let r = deviation_search(kind, &game, *user, grid)?;
                if r.is_profitable() {
                    found.push(Violation {
                        property: "no_profitable_deviation".into(),
                        detail: format!(
                            "{kind}: user {user} gains {} over truthful {} (deviating game attached)",
                            r.best_utility, r.truthful_utility
                        ),
                        game: r.best_game.clone().or_else(|| Some(game.clone())),
                    });
                }
            }
            Ok((users.len(), found))
        })
        .collect::<Result<_>>()?;
    let checks = results.iter().map(|(n, _)| n).sum();
    Ok((checks, results.into_iter().flat_map(|(_, v)| v).collect()))
}

pub const NAIVE_DETECTION_TARGET: (usize, usize) = (99, 100);

fn truthfulness(seed: u64, games: u32, include_naive: bool) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Truthfulness);
    let grid = GridSpec::default();
    for shape in GameShape::ALL {
        let (checks, violations) = truthfulness_for(shape, seed, games, &grid)?;
        report.absorb(checks, violations);
    }
    if include_naive {
        let (detected, missed) = naive_detection(seed, games, &grid)?;
        report.checks += games as usize;
        report.notes.push(format!(
            "naive: profitable deviation found in {detected} of {games} control games"
        ));
        let (num, den) = NAIVE_DETECTION_TARGET;
        if detected * den < games as usize * num {
            report.violations.push(Violation {
                property: "positive_control".into(),
                detail: format!("naive deviation detected in only {detected} of {games} games"),
                game: missed.into_iter().next(),
            });
        }
    }
    Ok(report)
}

/// The additive game restricted to one optimization. Additive mechanisms
/// treat optimizations independently, so this is the game that decides
/// everything about `opt`.
pub fn project(game: &Game, opt: OptId) -> Result<Game> {
    let catalog = Catalog::from_costs([(opt.0, game.catalog().cost(opt)?.clone())])?;
    Ok(match game {
        Game::AdditiveOffline { bids, .. } => Game::AdditiveOffline {
            catalog,
            bids: bids
                .iter()
                .map(|b| AdditiveOfflineBid {
                    user: b.user,
                    values: b
                        .values
                        .iter()
                        .filter(|(j, _)| **j == opt)
                        .map(|(j, v)| (*j, v.clone()))
                        .collect(),
                })
                .collect(),
        },
        Game::AdditiveOnline { horizon, bids, .. } => Game::AdditiveOnline {
            catalog,
            horizon: *horizon,
            bids: bids.iter().filter(|b| b.opt == opt).cloned().collect(),
        },
        other => {
            return Err(Error::IncompatibleMechanism {
                mechanism: "projection".into(),
                game: other.shape().into(),
            })
        }
    })
}

fn harm_summary(probe: &MultiIdentityReport, split: &SplitOutcome) -> String {
    split
        .others
        .iter()
        .filter(|(u, v)| *v < &probe.baseline_others[*u])
        .map(|(u, v)| format!("user {u} {} -> {v}", probe.baseline_others[u]))
        .collect::<Vec<_>>()
        .join(", ")
}

fn multi_identity(seed: u64, games: u32) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::MultiIdentity);
    let grid = GridSpec::default();
    for shape in [GameShape::AdditiveOffline, GameShape::AdditiveOnline] {
        let kind = native_mechanism(shape);
        let results: Vec<(usize, Vec<Violation>, bool)> = (0..games)
            .into_par_iter()
            .map(|i| {
                let game = small_game(seed, i, shape, SmallGameLimits::default());
                let users: Vec<UserId> = game.users().into_iter().collect();
                let splitter = users[i as usize % users.len()];
                let whole = multi_identity_probe(kind, &game, splitter, 2, &grid, &[])?;
                let mut found = Vec::new();
                let mut checks = 0;
                for opt in game.catalog().ids() {
                    let single = project(&game, opt)?;
                    if !single.users().contains(&splitter) {
                        continue;
                    }
                    checks += 1;
                    let probe = multi_identity_probe(kind, &single, splitter, 2, &grid, &[])?;
                    found.extend(probe.violations().into_iter().map(|s| {
                        violation(
                            "no_harm_from_splitting",
                            format!(
                                "{kind}: splitter {splitter} on optimization {opt} with multipliers {:?} hurts {}",
                                s.multipliers,
                                harm_summary(&probe, s)
                            ),
                            &single,
                        )
                    }));
                }
                Ok((checks, found, !whole.violations().is_empty()))
            })
            .collect::<Result<_>>()?;
        let traded = results.iter().filter(|(_, _, t)| *t).count();
        report.notes.push(format!(
            "{kind}: in {traded} of {games} games a split that scales every optimization alike gains overall while hurting someone, by giving up one optimization to win another"
        ));
        for (checks, violations, _) in results {
            report.absorb(checks, violations);
        }
    }
    let demo = golden::steerable_substitutes_check()?;
    report
        .notes
        .push(format!("substitutable demonstration: {}", demo[0].detail));
    if !demo[0].passed {
        report.violations.push(violation(
            "substitutable_harm_demonstrated",
            demo[0].detail.clone(),
            &demo[0].game,
        ));
    }
    report.checks += 1;
    Ok(report)
}

/// An offline game as an online game with a single slot.
pub fn lift_to_one_slot(game: &Game) -> Game {
    let one = SlotHorizon::new(1).expect("one slot");
    match game {
        Game::AdditiveOffline { catalog, bids } => Game::AdditiveOnline {
            catalog: catalog.clone(),
            horizon: one,
            bids: bids
                .iter()
                .flat_map(|b| {
                    b.values.iter().map(|(j, v)| AdditiveOnlineBid {
                        user: b.user,
                        opt: *j,
                        values: SlotValues::new(1, vec![v.clone()]),
                    })
                })
                .collect(),
        },
        Game::SubstitutableOffline { catalog, bids } => Game::SubstitutableOnline {
            catalog: catalog.clone(),
            horizon: one,
            bids: bids
                .iter()
                .map(|b| SubstitutableOnlineBid {
                    user: b.user,
                    substitutes: b.substitutes.clone(),
                    values: SlotValues::new(1, vec![b.value.clone()]),
                })
                .collect(),
        },
        online => online.clone(),
    }
}

/// A substitutable offline game whose users keep only their lowest
/// substitute, paired with the additive game bidding the same values.
pub fn singleton_pair(game: &Game) -> (Game, Game) {
    let Game::SubstitutableOffline { catalog, bids } = game else {
        panic!("expects a substitutable offline game")
    };
    let mut narrowed = bids.clone();
    for b in &mut narrowed {
        let first = *b.substitutes.iter().next().expect("non-empty substitutes");
        b.substitutes = [first].into();
    }
    let additive = narrowed
        .iter()
        .map(|b| AdditiveOfflineBid {
            user: b.user,
            values: b
                .substitutes
                .iter()
                .map(|j| (*j, b.value.clone()))
                .collect(),
        })
        .collect();
    (
        Game::SubstitutableOffline {
            catalog: catalog.clone(),
            bids: narrowed,
        },
        Game::AdditiveOffline {
            catalog: catalog.clone(),
            bids: additive,
        },
    )
}

fn same_settlement(a: &Settlement, b: &Settlement) -> bool {
    a.payments == b.payments && a.outcome() == b.outcome()
}

fn degeneration(seed: u64, games: u32) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Degeneration);
    let limits = SmallGameLimits::default();
    let results: Vec<Vec<Violation>> = (0..games)
        .into_par_iter()
        .map(|i| {
            let mut found = Vec::new();
            for (shape, offline, online) in [
                (
                    GameShape::AdditiveOffline,
                    MechanismKind::AddOff,
                    MechanismKind::AddOn,
                ),
                (
                    GameShape::SubstitutableOffline,
                    MechanismKind::SubstOff,
                    MechanismKind::SubstOn,
                ),
            ] {
                let game = small_game(seed, i, shape, limits);
                let lifted = lift_to_one_slot(&game);
                if !same_settlement(&run(offline, &game)?, &run(online, &lifted)?) {
                    found.push(violation(
                        "one_slot_online_matches_offline",
                        format!("{online} vs {offline}"),
                        &game,
                    ));
                }
            }
            let (narrowed, additive) = singleton_pair(&small_game(
                seed,
                i,
                GameShape::SubstitutableOffline,
                limits,
            ));
            if !same_settlement(
                &run(MechanismKind::SubstOff, &narrowed)?,
                &run(MechanismKind::AddOff, &additive)?,
            ) {
                found.push(violation(
                    "singleton_substitutes_match_additive",
                    "subst_off vs add_off".into(),
                    &narrowed,
                ));
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    report.absorb(3 * games as usize, results.into_iter().flatten().collect());
    Ok(report)
}

fn golden_examples() -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::GoldenExamples);
    for check in golden::all_checks()? {
        report.checks += 1;
        if !check.passed {
            report
                .violations
                .push(violation(check.name, check.detail, &check.game));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(games: u32) -> VerifyOptions {
        VerifyOptions {
            seed: 42,
            games: Some(games),
            include_naive: true,
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for suite in Suite::ALL {
            assert_eq!(suite.name().parse::<Suite>().unwrap(), suite);
        }
        assert!(matches!(
            "speed".parse::<Suite>(),
            Err(Error::UnknownSuite(_))
        ));
    }

    #[test]
    fn small_suites_pass() {
        for suite in [
            Suite::CostRecovery,
            Suite::Degeneration,
            Suite::GoldenExamples,
            Suite::MultiIdentity,
        ] {
            let report = verify(suite, &opts(40)).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn truthfulness_smoke() {
        let report = verify(Suite::Truthfulness, &opts(8)).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.notes[0].contains("8 of 8"));
    }

    #[test]
    fn reports_serialize_offending_games() {
        let game = golden::staggered_arrivals();
        let mut report = SuiteReport::new(Suite::CostRecovery);
        report
            .violations
            .push(violation("example", "detail".into(), &game));
        let text = report.to_string();
        assert!(text.starts_with("FAIL cost_recovery"));
        let line = text
            .lines()
            .find(|l| l.trim_start().starts_with("game: "))
            .unwrap();
        let parsed: Game =
            serde_json::from_str(line.trim_start().trim_start_matches("game: ")).unwrap();
        assert_eq!(parsed, game);
    }
}
