//! Searching for profitable misreports and identity splits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analysis::metrics::Valuation;
use crate::error::{Error, Result};
use crate::mechanism::{run, Game, MechanismKind, Settlement};
use crate::model::{
    AdditiveOfflineBid, AdditiveOnlineBid, OptId, Slot, SlotValues, SubstitutableOfflineBid,
    SubstitutableOnlineBid, UserId,
};
use crate::money::Money;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of evenly spaced multipliers in `[0, max_multiplier]`.
    pub levels: usize,
    pub max_multiplier: Money,
    /// Also try every later window `[s', e']` with `s' >= s_i`.
    pub windows: bool,
    /// Also try every non-empty subset of the catalog as the substitute set.
    pub substitute_sets: bool,
    /// Multipliers per identity when probing identity splits.
    pub split_levels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            levels: 21,
            max_multiplier: Money::from_integer(2),
            windows: true,
            substitute_sets: true,
            split_levels: 5,
        }
    }
}

impl GridSpec {
    fn multipliers(&self, count: usize) -> Vec<Money> {
        let steps = count.saturating_sub(1).max(1);
        (0..count.max(1))
            .map(|k| self.max_multiplier.mul_int(k).div_int(steps))
            .collect()
    }

    pub fn levels(&self) -> Vec<Money> {
        self.multipliers(self.levels)
    }

    pub fn split_multipliers(&self) -> Vec<Money> {
        self.multipliers(self.split_levels)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviationReport {
    pub deviator: UserId,
    pub truthful_utility: Money,
    pub best_utility: Money,
    /// The game (with the deviator's misreport) that achieved `best_utility`.
    pub best_game: Option<Game>,
    pub evaluated: usize,
}

impl DeviationReport {
    pub fn is_profitable(&self) -> bool {
        self.best_utility > self.truthful_utility
    }
}

/// The game as seen by a deviator arriving at their start slot with no
/// later arrivals: everyone else who has already started, plus the
/// deviator. Offline games are returned unchanged.
pub fn empty_future(game: &Game, deviator: UserId) -> Game {
    let mut game = game.clone();
    match &mut game {
        Game::AdditiveOnline { bids, .. } => {
            let arrival = bids
                .iter()
                .filter(|b| b.user == deviator)
                .map(|b| b.values.start)
                .min();
            if let Some(s) = arrival {
                bids.retain(|b| b.user == deviator || b.values.start <= s);
            }
        }
        Game::SubstitutableOnline { bids, .. } => {
            let arrival = bids
                .iter()
                .find(|b| b.user == deviator)
                .map(|b| b.values.start);
            if let Some(s) = arrival {
                bids.retain(|b| b.user == deviator || b.values.start <= s);
            }
        }
        _ => {}
    }
    game
}

/// Tries every misreport on the grid for `deviator` and reports the best
/// utility found next to the truthful one. Online games are played in the
/// empty-future continuation; utilities always use true values.
pub fn deviation_search(
    kind: MechanismKind,
    game: &Game,
    deviator: UserId,
    grid: &GridSpec,
) -> Result<DeviationReport> {
    if !game.users().contains(&deviator) {
        return Err(Error::UnknownUser(deviator));
    }
    let truth = empty_future(game, deviator);
    let valuation = Valuation::new(&truth);
    let catalog = truth.catalog().clone();
    let utility = |g: &Game| -> Result<Money> {
        let settlement = run(kind, g)?;
        let metrics = valuation.score(|j| catalog.cost(j).cloned(), &settlement)?;
        Ok(metrics.per_user_utility[&deviator].clone())
    };
    let truthful_utility = utility(&truth)?;
    let mut report = DeviationReport {
        deviator,
        best_utility: truthful_utility.clone(),
        truthful_utility,
        best_game: None,
        evaluated: 0,
    };
    for candidate in misreports(&truth, deviator, grid) {
        report.evaluated += 1;
        let u = utility(&candidate)?;
        if u > report.best_utility {
            report.best_utility = u;
            report.best_game = Some(candidate);
        }
    }
    Ok(report)
}

fn spread_evenly(total: &Money, start: Slot, end: Slot) -> SlotValues {
    let len = (end - start + 1) as usize;
    SlotValues::new(start, vec![total.div_int(len); len])
}

fn scaled(values: &SlotValues, k: &Money) -> SlotValues {
    SlotValues::new(
        values.start,
        values.per_slot.iter().map(|v| v.clone() * k).collect(),
    )
}

fn windows(start: Slot, z: Slot, enabled: bool, truth: &SlotValues) -> Vec<(Slot, Slot)> {
    if !enabled {
        return vec![(truth.start, truth.end)];
    }
    (start..=z)
        .flat_map(|s| (s..=z).map(move |e| (s, e)))
        .collect()
}

fn subsets(ids: &[OptId]) -> Vec<BTreeSet<OptId>> {
    (1u32..(1 << ids.len()))
        .map(|mask| {
            ids.iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, j)| *j)
                .collect()
        })
        .collect()
}

fn misreports(truth: &Game, deviator: UserId, grid: &GridSpec) -> Vec<Game> {
    let levels = grid.levels();
    let z = truth.horizon().z();
    let catalog = truth.catalog();
    let mut out = Vec::new();
    match truth {
        Game::AdditiveOffline { bids, .. } => {
            let own = bids
                .iter()
                .find(|b| b.user == deviator)
                .expect("deviator bids");
            let base = |j: OptId| {
                let v = own.value(j);
                if v.is_positive() {
                    v
                } else {
                    catalog.cost(j).cloned().unwrap_or_default()
                }
            };
            let mut variants: Vec<BTreeMap<OptId, Money>> = Vec::new();
            for j in catalog.ids() {
                for k in &levels {
                    let mut values = own.values.clone();
                    values.insert(j, base(j) * k);
                    variants.push(values);
                }
            }
            if catalog.len() > 1 {
                for k in &levels {
                    variants.push(
                        own.values
                            .iter()
                            .map(|(j, v)| (*j, v.clone() * k))
                            .collect(),
                    );
                }
            }
            for values in variants {
                let mut game = truth.clone();
                if let Game::AdditiveOffline { bids, .. } = &mut game {
                    *bids
                        .iter_mut()
                        .find(|b| b.user == deviator)
                        .expect("deviator") = AdditiveOfflineBid {
                        user: deviator,
                        values,
                    };
                }
                out.push(game);
            }
        }
        Game::AdditiveOnline { bids, .. } => {
            let own: Vec<&AdditiveOnlineBid> = bids.iter().filter(|b| b.user == deviator).collect();
            let mut variants: Vec<Vec<AdditiveOnlineBid>> = Vec::new();
            for (idx, b) in own.iter().enumerate() {
                let total = b.values.total();
                let base = if total.is_positive() {
                    total
                } else {
                    catalog.cost(b.opt).cloned().unwrap_or_default()
                };
                let mut replacements = Vec::new();
                for k in &levels {
                    replacements.push(scaled(&b.values, k));
                    for (s, e) in windows(b.values.start, z, grid.windows, &b.values) {
                        replacements.push(spread_evenly(&(base.clone() * k), s, e));
                    }
                }
                for values in replacements {
                    let mut set: Vec<AdditiveOnlineBid> =
                        own.iter().map(|b| (*b).clone()).collect();
                    set[idx] = AdditiveOnlineBid {
                        user: deviator,
                        opt: b.opt,
                        values,
                    };
                    variants.push(set);
                }
            }
            if own.len() > 1 {
                for k in &levels {
                    variants.push(
                        own.iter()
                            .map(|b| AdditiveOnlineBid {
                                user: deviator,
                                opt: b.opt,
                                values: scaled(&b.values, k),
                            })
                            .collect(),
                    );
                }
            }
            for set in variants {
                let mut game = truth.clone();
                if let Game::AdditiveOnline { bids, .. } = &mut game {
                    bids.retain(|b| b.user != deviator);
                    bids.extend(set);
                }
                out.push(game);
            }
        }
        Game::SubstitutableOffline { bids, .. } => {
            let own = bids
                .iter()
                .find(|b| b.user == deviator)
                .expect("deviator bids");
            let base = if own.value.is_positive() {
                own.value.clone()
            } else {
                catalog
                    .iter()
                    .map(|(_, c)| c.clone())
                    .max()
                    .unwrap_or_default()
            };
            let sets = if grid.substitute_sets {
                subsets(&catalog.ids().collect::<Vec<_>>())
            } else {
                vec![own.substitutes.clone()]
            };
            for substitutes in sets {
                for k in &levels {
                    let mut game = truth.clone();
                    if let Game::SubstitutableOffline { bids, .. } = &mut game {
                        *bids
                            .iter_mut()
                            .find(|b| b.user == deviator)
                            .expect("deviator") = SubstitutableOfflineBid {
                            user: deviator,
                            substitutes: substitutes.clone(),
                            value: base.clone() * k,
                        };
                    }
                    out.push(game);
                }
            }
        }
        Game::SubstitutableOnline { bids, .. } => {
            let own = bids
                .iter()
                .find(|b| b.user == deviator)
                .expect("deviator bids");
            let total = own.values.total();
            let base = if total.is_positive() {
                total
            } else {
                catalog
                    .iter()
                    .map(|(_, c)| c.clone())
                    .max()
                    .unwrap_or_default()
            };
            let sets = if grid.substitute_sets {
                subsets(&catalog.ids().collect::<Vec<_>>())
            } else {
                vec![own.substitutes.clone()]
            };
            for substitutes in sets {
                for k in &levels {
                    let mut shapes = vec![scaled(&own.values, k)];
                    for (s, e) in windows(own.values.start, z, grid.windows, &own.values) {
                        shapes.push(spread_evenly(&(base.clone() * k), s, e));
                    }
                    for values in shapes {
                        let mut game = truth.clone();
                        if let Game::SubstitutableOnline { bids, .. } = &mut game {
                            *bids
                                .iter_mut()
                                .find(|b| b.user == deviator)
                                .expect("deviator") = SubstitutableOnlineBid {
                                user: deviator,
                                substitutes: substitutes.clone(),
                                values,
                            };
                        }
                        out.push(game);
                    }
                }
            }
        }
    }
    out
}

/// One way of splitting the splitter's bid across identities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitOutcome {
    /// Each identity bids the splitter's true bid scaled by its multiplier.
    pub multipliers: Vec<Money>,
    pub splitter_utility: Money,
    pub others: BTreeMap<UserId, Money>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIdentityReport {
    pub splitter: UserId,
    pub identities: usize,
    pub baseline_splitter: Money,
    pub baseline_others: BTreeMap<UserId, Money>,
    pub splits: Vec<SplitOutcome>,
}

impl MultiIdentityReport {
    /// `(split index, user, utility before, utility after)` for every other
    /// user made worse off by some split.
    pub fn harmed(&self) -> Vec<(usize, UserId, Money, Money)> {
        let mut out = Vec::new();
        for (k, split) in self.splits.iter().enumerate() {
            for (u, after) in &split.others {
                let before = &self.baseline_others[u];
                if after < before {
                    out.push((k, *u, before.clone(), after.clone()));
                }
            }
        }
        out
    }

    pub fn harm_found(&self) -> bool {
        !self.harmed().is_empty()
    }

    /// Splits that raise the splitter's utility while lowering someone
    /// else's.
    pub fn violations(&self) -> Vec<&SplitOutcome> {
        self.splits
            .iter()
            .filter(|s| s.splitter_utility > self.baseline_splitter)
            .filter(|s| {
                s.others
                    .iter()
                    .any(|(u, after)| after < &self.baseline_others[u])
            })
            .collect()
    }

    pub fn best_split(&self) -> Option<&SplitOutcome> {
        self.splits
            .iter()
            .max_by(|a, b| a.splitter_utility.cmp(&b.splitter_utility))
    }
}

/// Replaces the splitter with `identities` fresh identities and tries the
/// given multiplier combinations (every combination from the grid when
/// `explicit` is empty). Utilities are measured on the full game against
/// true values, with the identities' service and payments folded back into
/// the splitter.
pub fn multi_identity_probe(
    kind: MechanismKind,
    game: &Game,
    splitter: UserId,
    identities: usize,
    grid: &GridSpec,
    explicit: &[Vec<Money>],
) -> Result<MultiIdentityReport> {
    if !game.users().contains(&splitter) {
        return Err(Error::UnknownUser(splitter));
    }
    if identities == 0 {
        return Err(Error::Domain("at least one identity is required".into()));
    }
    let valuation = Valuation::new(game);
    let catalog = game.catalog().clone();
    let evaluate = |settlement: &Settlement| -> Result<BTreeMap<UserId, Money>> {
        Ok(valuation
            .score(|j| catalog.cost(j).cloned(), settlement)?
            .per_user_utility)
    };
    let baseline = evaluate(&run(kind, game)?)?;
    let others = |utilities: &BTreeMap<UserId, Money>| -> BTreeMap<UserId, Money> {
        utilities
            .iter()
            .filter(|(u, _)| **u != splitter)
            .map(|(u, v)| (*u, v.clone()))
            .collect()
    };

    let combos: Vec<Vec<Money>> = if explicit.is_empty() {
        let levels = grid.split_multipliers();
        let mut combos = vec![Vec::new()];
        for _ in 0..identities {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    levels
                        .iter()
                        .map(move |k| [c.clone(), vec![k.clone()]].concat())
                })
                .collect();
        }
        combos
    } else {
        explicit.to_vec()
    };

    let next = game.users().iter().map(|u| u.0).max().unwrap_or(0) + 1;
    let ids: Vec<UserId> = (0..identities as u32).map(|k| UserId(next + k)).collect();
    let fold: BTreeMap<UserId, UserId> = ids.iter().map(|i| (*i, splitter)).collect();

    let mut splits = Vec::new();
    for multipliers in combos {
        if multipliers.len() != identities {
            return Err(Error::Domain(format!(
                "expected {identities} multipliers, got {}",
                multipliers.len()
            )));
        }
        let split_game = split(game, splitter, &ids, &multipliers);
        let settlement = run(kind, &split_game)?;
        let folded = Settlement {
            implemented: settlement.implemented.clone(),
            payments: settlement.payments.relabel(&fold),
            schedule: settlement.schedule.relabel(&fold),
        };
        let utilities = evaluate(&folded)?;
        splits.push(SplitOutcome {
            multipliers,
            splitter_utility: utilities[&splitter].clone(),
            others: others(&utilities),
        });
    }
    Ok(MultiIdentityReport {
        splitter,
        identities,
        baseline_splitter: baseline[&splitter].clone(),
        baseline_others: others(&baseline),
        splits,
    })
}

fn split(game: &Game, splitter: UserId, ids: &[UserId], multipliers: &[Money]) -> Game {
    let mut game = game.clone();
    let pairs = || ids.iter().zip(multipliers);
    match &mut game {
        Game::AdditiveOffline { bids, .. } => {
            let own = take(bids, |b| b.user == splitter);
            for b in own {
                bids.extend(pairs().map(|(i, k)| AdditiveOfflineBid {
                    user: *i,
                    values: b.values.iter().map(|(j, v)| (*j, v.clone() * k)).collect(),
                }));
            }
        }
        Game::AdditiveOnline { bids, .. } => {
            let own = take(bids, |b| b.user == splitter);
            for b in own {
                bids.extend(pairs().map(|(i, k)| AdditiveOnlineBid {
                    user: *i,
                    opt: b.opt,
                    values: scaled(&b.values, k),
                }));
            }
        }
        Game::SubstitutableOffline { bids, .. } => {
            let own = take(bids, |b| b.user == splitter);
            for b in own {
                bids.extend(pairs().map(|(i, k)| SubstitutableOfflineBid {
                    user: *i,
                    substitutes: b.substitutes.clone(),
                    value: b.value.clone() * k,
                }));
            }
        }
        Game::SubstitutableOnline { bids, .. } => {
            let own = take(bids, |b| b.user == splitter);
            for b in own {
                bids.extend(pairs().map(|(i, k)| SubstitutableOnlineBid {
                    user: *i,
                    substitutes: b.substitutes.clone(),
                    values: scaled(&b.values, k),
                }));
            }
        }
    }
    game
}

fn take<T>(bids: &mut Vec<T>, pred: impl Fn(&T) -> bool) -> Vec<T> {
    let (taken, kept) = std::mem::take(bids).into_iter().partition(pred);
    *bids = kept;
    taken
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Catalog;

    fn m(n: i64) -> Money {
        Money::from_integer(n)
    }

    fn two_bidders() -> Game {
        Game::AdditiveOffline {
            catalog: Catalog::from_costs([(1, m(100))]).unwrap(),
            bids: vec![
                AdditiveOfflineBid::new(UserId(1), [(1, m(60))]),
                AdditiveOfflineBid::new(UserId(2), [(1, m(50))]),
            ],
        }
    }

    #[test]
    fn grid_has_requested_levels() {
        let levels = GridSpec::default().levels();
        assert_eq!(levels.len(), 21);
        assert_eq!(levels[1], Money::new(1, 10));
        assert_eq!(levels[20], m(2));
    }

    #[test]
    fn shapley_resists_the_grid() {
        let report = deviation_search(
            MechanismKind::AddOff,
            &two_bidders(),
            UserId(1),
            &GridSpec::default(),
        )
        .unwrap();
        assert_eq!(report.truthful_utility, m(10));
        assert!(!report.is_profitable());
        assert!(report.evaluated >= 21);
    }

    #[test]
    fn naive_mechanism_rewards_underbidding() {
        let mut game = two_bidders();
        if let Game::AdditiveOffline { catalog, .. } = &mut game {
            *catalog = Catalog::from_costs([(1, m(80))]).unwrap();
        }
        let report =
            deviation_search(MechanismKind::Naive, &game, UserId(1), &GridSpec::default()).unwrap();
        assert_eq!(report.truthful_utility, m(0));
        assert!(report.is_profitable());
        assert_eq!(report.best_utility, m(30));
    }

    #[test]
    fn zero_value_deviator_cannot_gain() {
        let game = Game::AdditiveOffline {
            catalog: Catalog::from_costs([(1, m(100))]).unwrap(),
            bids: vec![
                AdditiveOfflineBid::new(UserId(1), [(1, m(0))]),
                AdditiveOfflineBid::new(UserId(2), [(1, m(150))]),
            ],
        };
        for kind in [
            MechanismKind::AddOff,
            MechanismKind::AddOn,
            MechanismKind::Naive,
        ] {
            let report = deviation_search(kind, &game, UserId(1), &GridSpec::default()).unwrap();
            assert!(report.best_utility <= m(0), "{kind}");
        }
    }

    #[test]
    fn empty_future_drops_later_arrivals() {
        let bid =
            |u, s, v: &[i64]| AdditiveOnlineBid::new(u, 1, s, v.iter().map(|x| m(*x)).collect());
        let game = Game::AdditiveOnline {
            catalog: Catalog::from_costs([(1, m(100))]).unwrap(),
            horizon: crate::model::SlotHorizon::new(3).unwrap(),
            bids: vec![
                bid(1, 1, &[101]),
                bid(2, 1, &[16, 16, 16]),
                bid(3, 2, &[26]),
                bid(4, 2, &[26]),
            ],
        };
        assert_eq!(
            empty_future(&game, UserId(2)).users(),
            [UserId(1), UserId(2)].into()
        );
        assert_eq!(empty_future(&game, UserId(3)).users().len(), 4);
        // overbidding at slot 1 pays 50 for a value of 48
        let report =
            deviation_search(MechanismKind::AddOn, &game, UserId(2), &GridSpec::default()).unwrap();
        assert_eq!(report.truthful_utility, m(0));
        assert!(!report.is_profitable());
    }

    #[test]
    fn windows_never_start_before_their_own_bid() {
        let mut game = crate::harness::golden::staggered_arrivals();
        if let Game::AdditiveOnline { catalog, bids, .. } = &mut game {
            *catalog = Catalog::from_costs([(1, m(100)), (2, m(50))]).unwrap();
            bids.push(AdditiveOnlineBid::new(3, 2, 3, vec![m(40)]));
        }
        let truth = empty_future(&game, UserId(3));
        for candidate in misreports(&truth, UserId(3), &GridSpec::default()) {
            let Game::AdditiveOnline { bids, .. } = candidate else {
                unreachable!()
            };
            let late = bids
                .iter()
                .find(|b| b.user == UserId(3) && b.opt == OptId(2))
                .unwrap();
            assert_eq!(late.values.start, 3);
        }
    }

    #[test]
    fn one_identity_changes_nothing() {
        let report = multi_identity_probe(
            MechanismKind::AddOff,
            &two_bidders(),
            UserId(1),
            1,
            &GridSpec::default(),
            &[vec![m(1)]],
        )
        .unwrap();
        assert_eq!(report.splits[0].splitter_utility, report.baseline_splitter);
        assert_eq!(report.splits[0].others, report.baseline_others);
    }
}
