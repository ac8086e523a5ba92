//! A single entry point over every mechanism and game shape.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AdditiveOfflineBid, AdditiveOnlineBid, Catalog, OptId, Outcome, PaymentLedger, ServiceSchedule,
    SlotHorizon, SlotValues, SubstitutableOfflineBid, SubstitutableOnlineBid, UserId,
};
use crate::money::Money;
use crate::online::add_on_catalog;
use crate::regret::{regret_additive, regret_substitutable};
use crate::shapley::add_off;
use crate::substitutable::{subst_off, subst_on};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Game {
    AdditiveOffline {
        catalog: Catalog,
        bids: Vec<AdditiveOfflineBid>,
    },
    AdditiveOnline {
        catalog: Catalog,
        horizon: SlotHorizon,
        bids: Vec<AdditiveOnlineBid>,
    },
    SubstitutableOffline {
        catalog: Catalog,
        bids: Vec<SubstitutableOfflineBid>,
    },
    SubstitutableOnline {
        catalog: Catalog,
        horizon: SlotHorizon,
        bids: Vec<SubstitutableOnlineBid>,
    },
}

impl Game {
    pub fn catalog(&self) -> &Catalog {
        match self {
            Game::AdditiveOffline { catalog, .. }
            | Game::AdditiveOnline { catalog, .. }
            | Game::SubstitutableOffline { catalog, .. }
            | Game::SubstitutableOnline { catalog, .. } => catalog,
        }
    }

    pub fn catalog_mut(&mut self) -> &mut Catalog {
        match self {
            Game::AdditiveOffline { catalog, .. }
            | Game::AdditiveOnline { catalog, .. }
            | Game::SubstitutableOffline { catalog, .. }
            | Game::SubstitutableOnline { catalog, .. } => catalog,
        }
    }

    /// Offline games occupy a single slot.
    pub fn horizon(&self) -> SlotHorizon {
        match self {
            Game::AdditiveOnline { horizon, .. } | Game::SubstitutableOnline { horizon, .. } => {
                *horizon
            }
            _ => SlotHorizon::new(1).expect("one slot"),
        }
    }

    pub fn is_substitutable(&self) -> bool {
        matches!(
            self,
            Game::SubstitutableOffline { .. } | Game::SubstitutableOnline { .. }
        )
    }

    pub fn is_online(&self) -> bool {
        matches!(
            self,
            Game::AdditiveOnline { .. } | Game::SubstitutableOnline { .. }
        )
    }

    pub fn shape(&self) -> &'static str {
        match self {
            Game::AdditiveOffline { .. } => "additive offline",
            Game::AdditiveOnline { .. } => "additive online",
            Game::SubstitutableOffline { .. } => "substitutable offline",
            Game::SubstitutableOnline { .. } => "substitutable online",
        }
    }

    pub fn users(&self) -> BTreeSet<UserId> {
        match self {
            Game::AdditiveOffline { bids, .. } => bids.iter().map(|b| b.user).collect(),
            Game::AdditiveOnline { bids, .. } => bids.iter().map(|b| b.user).collect(),
            Game::SubstitutableOffline { bids, .. } => bids.iter().map(|b| b.user).collect(),
            Game::SubstitutableOnline { bids, .. } => bids.iter().map(|b| b.user).collect(),
        }
    }

    pub fn bid_count(&self) -> usize {
        match self {
            Game::AdditiveOffline { bids, .. } => bids.len(),
            Game::AdditiveOnline { bids, .. } => bids.len(),
            Game::SubstitutableOffline { bids, .. } => bids.len(),
            Game::SubstitutableOnline { bids, .. } => bids.len(),
        }
    }

    /// Sum of every declared value in the game.
    pub fn total_declared_value(&self) -> Money {
        match self {
            Game::AdditiveOffline { bids, .. } => bids.iter().flat_map(|b| b.values.values()).sum(),
            Game::AdditiveOnline { bids, .. } => bids.iter().map(|b| b.values.total()).sum(),
            Game::SubstitutableOffline { bids, .. } => bids.iter().map(|b| &b.value).sum(),
            Game::SubstitutableOnline { bids, .. } => bids.iter().map(|b| b.values.total()).sum(),
        }
    }

    /// Removes every bid of `user`.
    pub fn without_user(&self, user: UserId) -> Game {
        let mut game = self.clone();
        match &mut game {
            Game::AdditiveOffline { bids, .. } => bids.retain(|b| b.user != user),
            Game::AdditiveOnline { bids, .. } => bids.retain(|b| b.user != user),
            Game::SubstitutableOffline { bids, .. } => bids.retain(|b| b.user != user),
            Game::SubstitutableOnline { bids, .. } => bids.retain(|b| b.user != user),
        }
        game
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        match self {
            Game::AdditiveOffline { catalog, bids } => {
                unique(bids.iter().map(|b| b.user))?;
                bids.iter().try_for_each(|b| b.validate(catalog))
            }
            Game::AdditiveOnline { catalog, bids, .. } => {
                let mut seen = BTreeSet::new();
                for b in bids {
                    if !catalog.contains(b.opt) {
                        return Err(Error::UnknownOptimization(b.opt));
                    }
                    b.values.validate(b.user, horizon)?;
                    if !seen.insert((b.user, b.opt)) {
                        return Err(Error::DuplicateUser(b.user));
                    }
                }
                Ok(())
            }
            Game::SubstitutableOffline { catalog, bids } => {
                unique(bids.iter().map(|b| b.user))?;
                bids.iter().try_for_each(|b| b.validate(catalog))
            }
            Game::SubstitutableOnline { catalog, bids, .. } => {
                unique(bids.iter().map(|b| b.user))?;
                bids.iter().try_for_each(|b| b.validate(catalog, horizon))
            }
        }
    }
}

fn unique(users: impl Iterator<Item = UserId>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for u in users {
        if !seen.insert(u) {
            return Err(Error::DuplicateUser(u));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    AddOff,
    AddOn,
    SubstOff,
    SubstOn,
    Regret,
    /// Pay-your-bid: implement whenever bids cover the cost. Not truthful;
    /// kept as a positive control for the deviation search.
    Naive,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::AddOff,
        MechanismKind::AddOn,
        MechanismKind::SubstOff,
        MechanismKind::SubstOn,
        MechanismKind::Regret,
        MechanismKind::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::AddOff => "add_off",
            MechanismKind::AddOn => "add_on",
            MechanismKind::SubstOff => "subst_off",
            MechanismKind::SubstOn => "subst_on",
            MechanismKind::Regret => "regret",
            MechanismKind::Naive => "naive",
        }
    }

    pub fn accepts(self, game: &Game) -> bool {
        match self {
            MechanismKind::AddOff | MechanismKind::AddOn | MechanismKind::Naive => {
                !game.is_substitutable()
            }
            MechanismKind::SubstOff | MechanismKind::SubstOn => game.is_substitutable(),
            MechanismKind::Regret => true,
        }
    }

    pub fn is_online(self) -> bool {
        matches!(
            self,
            MechanismKind::AddOn | MechanismKind::SubstOn | MechanismKind::Regret
        )
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownMechanism(s.to_string()))
    }
}

/// What a mechanism decided, in a shape every metric can consume.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settlement {
    pub implemented: BTreeSet<OptId>,
    pub payments: PaymentLedger,
    /// Offline games are served in slot 1.
    pub schedule: ServiceSchedule,
}

impl Settlement {
    fn from_outcome(outcome: &Outcome, payments: PaymentLedger) -> Self {
        let mut schedule = ServiceSchedule::new();
        for j in &outcome.implemented {
            schedule.record_served(*j, 1, outcome.serviced(*j));
        }
        Settlement {
            implemented: outcome.implemented.clone(),
            payments,
            schedule,
        }
    }

    fn from_schedule(schedule: ServiceSchedule, payments: PaymentLedger) -> Self {
        let mut implemented = schedule.optimizations();
        implemented.extend(payments.iter().map(|(_, j, _)| j));
        Settlement {
            implemented,
            payments,
            schedule,
        }
    }

    pub fn outcome(&self) -> Outcome {
        let mut outcome = self.schedule.outcome();
        outcome.implemented.extend(self.implemented.iter().copied());
        outcome
    }
}

/// Runs `kind` on `game`. Offline mechanisms see online games as per-user
/// totals and serve granted users across their whole window; online
/// mechanisms see offline games as a single slot.
pub fn run(kind: MechanismKind, game: &Game) -> Result<Settlement> {
    if !kind.accepts(game) {
        return Err(Error::IncompatibleMechanism {
            mechanism: kind.name().into(),
            game: game.shape().into(),
        });
    }
    game.validate()?;
    match (kind, game) {
        (MechanismKind::AddOff, Game::AdditiveOffline { catalog, bids }) => {
            let (outcome, ledger) = add_off(catalog, bids)?;
            Ok(Settlement::from_outcome(&outcome, ledger))
        }
        (MechanismKind::AddOff, Game::AdditiveOnline { catalog, bids, .. }) => {
            let (outcome, ledger) = add_off(catalog, &collapse_additive(bids))?;
            let windows = bids.iter().map(|b| ((b.user, b.opt), &b.values)).collect();
            Ok(Settlement::from_schedule(
                spread(&outcome, &windows),
                ledger,
            ))
        }
        (
            MechanismKind::AddOn,
            Game::AdditiveOnline {
                catalog,
                horizon,
                bids,
            },
        ) => {
            let (schedule, ledger) = add_on_catalog(catalog, *horizon, bids)?;
            Ok(Settlement::from_schedule(schedule, ledger))
        }
        (MechanismKind::AddOn, Game::AdditiveOffline { catalog, bids }) => {
            let (schedule, ledger) = add_on_catalog(catalog, single_slot(), &lift_additive(bids))?;
            Ok(Settlement::from_schedule(schedule, ledger))
        }
        (MechanismKind::SubstOff, Game::SubstitutableOffline { catalog, bids }) => {
            let r = subst_off(catalog, bids)?;
            Ok(Settlement::from_outcome(&r.outcome, r.payments))
        }
        (MechanismKind::SubstOff, Game::SubstitutableOnline { catalog, bids, .. }) => {
            let collapsed: Vec<_> = bids
                .iter()
                .map(|b| SubstitutableOfflineBid {
                    user: b.user,
                    substitutes: b.substitutes.clone(),
                    value: b.values.total(),
                })
                .collect();
            let r = subst_off(catalog, &collapsed)?;
            let windows = r
                .outcome
                .grants
                .iter()
                .filter_map(|(i, j)| {
                    bids.iter()
                        .find(|b| b.user == *i)
                        .map(|b| ((*i, *j), &b.values))
                })
                .collect();
            Ok(Settlement::from_schedule(
                spread(&r.outcome, &windows),
                r.payments,
            ))
        }
        (
            MechanismKind::SubstOn,
            Game::SubstitutableOnline {
                catalog,
                horizon,
                bids,
            },
        ) => {
            let trace = subst_on(catalog, *horizon, bids)?;
            Ok(Settlement::from_schedule(trace.schedule, trace.payments))
        }
        (MechanismKind::SubstOn, Game::SubstitutableOffline { catalog, bids }) => {
            let trace = subst_on(catalog, single_slot(), &lift_substitutable(bids))?;
            Ok(Settlement::from_schedule(trace.schedule, trace.payments))
        }
        (MechanismKind::Regret, game) => {
            let trace = match game {
                Game::AdditiveOnline {
                    catalog,
                    horizon,
                    bids,
                } => regret_additive(catalog, *horizon, bids)?,
                Game::AdditiveOffline { catalog, bids } => {
                    regret_additive(catalog, single_slot(), &lift_additive(bids))?
                }
                Game::SubstitutableOnline {
                    catalog,
                    horizon,
                    bids,
                } => regret_substitutable(catalog, *horizon, bids)?,
                Game::SubstitutableOffline { catalog, bids } => {
                    regret_substitutable(catalog, single_slot(), &lift_substitutable(bids))?
                }
            };
            let implemented = trace
                .implement_slot
                .iter()
                .filter(|(_, t)| t.is_some())
                .map(|(j, _)| *j)
                .collect();
            Ok(Settlement {
                implemented,
                payments: trace.payments,
                schedule: trace.serviced,
            })
        }
        (MechanismKind::Naive, Game::AdditiveOffline { catalog, bids }) => {
            let (outcome, ledger) = naive(catalog, bids);
            Ok(Settlement::from_outcome(&outcome, ledger))
        }
        (MechanismKind::Naive, Game::AdditiveOnline { catalog, bids, .. }) => {
            let (outcome, ledger) = naive(catalog, &collapse_additive(bids));
            let windows = bids.iter().map(|b| ((b.user, b.opt), &b.values)).collect();
            let mut settlement = Settlement::from_schedule(spread(&outcome, &windows), ledger);
            settlement.implemented = outcome.implemented;
            Ok(settlement)
        }
        _ => unreachable!("compatibility checked above"),
    }
}

fn single_slot() -> SlotHorizon {
    SlotHorizon::new(1).expect("one slot")
}

fn naive(catalog: &Catalog, bids: &[AdditiveOfflineBid]) -> (Outcome, PaymentLedger) {
    let mut outcome = Outcome::default();
    let mut ledger = PaymentLedger::new();
    for (j, cost) in catalog.iter() {
        let total: Money = bids.iter().map(|b| b.value(j)).sum();
        if cost <= &total {
            outcome.implemented.insert(j);
            for b in bids.iter().filter(|b| b.value(j).is_positive()) {
                outcome.grant(b.user, j);
                ledger.charge(b.user, j, b.value(j));
            }
        }
    }
    (outcome, ledger)
}

fn collapse_additive(bids: &[AdditiveOnlineBid]) -> Vec<AdditiveOfflineBid> {
    let mut by_user: BTreeMap<UserId, BTreeMap<OptId, Money>> = BTreeMap::new();
    for b in bids {
        by_user
            .entry(b.user)
            .or_default()
            .insert(b.opt, b.values.total());
    }
    by_user
        .into_iter()
        .map(|(user, values)| AdditiveOfflineBid { user, values })
        .collect()
}

fn lift_additive(bids: &[AdditiveOfflineBid]) -> Vec<AdditiveOnlineBid> {
    bids.iter()
        .flat_map(|b| {
            b.values.iter().map(|(j, v)| AdditiveOnlineBid {
                user: b.user,
                opt: *j,
                values: SlotValues::new(1, vec![v.clone()]),
            })
        })
        .collect()
}

fn lift_substitutable(bids: &[SubstitutableOfflineBid]) -> Vec<SubstitutableOnlineBid> {
    bids.iter()
        .map(|b| SubstitutableOnlineBid {
            user: b.user,
            substitutes: b.substitutes.clone(),
            values: SlotValues::new(1, vec![b.value.clone()]),
        })
        .collect()
}

fn spread(outcome: &Outcome, windows: &BTreeMap<(UserId, OptId), &SlotValues>) -> ServiceSchedule {
    let mut schedule = ServiceSchedule::new();
    for j in &outcome.implemented {
        let users = outcome.serviced(*j);
        let last = users
            .iter()
            .filter_map(|i| windows.get(&(*i, *j)).map(|w| w.end))
            .max()
            .unwrap_or(1);
        for t in 1..=last {
            let served = users
                .iter()
                .copied()
                .filter(|i| windows.get(&(*i, *j)).is_some_and(|w| w.is_active(t)))
                .collect();
            schedule.record_served(*j, t, served);
        }
    }
    schedule
}
