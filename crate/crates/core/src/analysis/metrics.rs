use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mechanism::{Game, Settlement};
use crate::model::{OptId, ServiceSchedule, SlotValues, UserId};
use crate::money::Money;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    /// True value realized over every serviced user-slot.
    pub total_value: Money,
    pub total_cost: Money,
    pub total_utility: Money,
    /// Payments minus costs; negative means the provider lost money.
    pub cloud_balance: Money,
    pub per_user_utility: BTreeMap<UserId, Money>,
    pub implemented: BTreeSet<OptId>,
}

/// True valuations of a game, indexed for repeated scoring.
#[derive(Clone, Debug)]
pub struct Valuation {
    users: BTreeSet<UserId>,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Additive(BTreeMap<(UserId, OptId), SlotValues>),
    Substitutable(BTreeMap<UserId, (BTreeSet<OptId>, SlotValues)>),
}

impl Valuation {
    pub fn new(truth: &Game) -> Self {
        let one = |v: &Money| SlotValues::new(1, vec![v.clone()]);
        let kind = match truth {
            Game::AdditiveOffline { bids, .. } => Kind::Additive(
                bids.iter()
                    .flat_map(|b| b.values.iter().map(|(j, v)| ((b.user, *j), one(v))))
                    .collect(),
            ),
            Game::AdditiveOnline { bids, .. } => Kind::Additive(
                bids.iter()
                    .map(|b| ((b.user, b.opt), b.values.clone()))
                    .collect(),
            ),
            Game::SubstitutableOffline { bids, .. } => Kind::Substitutable(
                bids.iter()
                    .map(|b| (b.user, (b.substitutes.clone(), one(&b.value))))
                    .collect(),
            ),
            Game::SubstitutableOnline { bids, .. } => Kind::Substitutable(
                bids.iter()
                    .map(|b| (b.user, (b.substitutes.clone(), b.values.clone())))
                    .collect(),
            ),
        };
        Valuation {
            users: truth.users(),
            kind,
        }
    }

    pub fn users(&self) -> &BTreeSet<UserId> {
        &self.users
    }

    /// `V_i` for every user in the game: true value over the slots they
    /// were served. A substitutable user counts a slot once however many
    /// of their substitutes served them.
    pub fn realized(&self, schedule: &ServiceSchedule) -> Result<BTreeMap<UserId, Money>> {
        let mut out: BTreeMap<UserId, Money> =
            self.users.iter().map(|u| (*u, Money::zero())).collect();
        let mut seen = BTreeSet::new();
        for (j, t, users) in schedule.iter_served() {
            for i in users {
                let slot = out.get_mut(i).ok_or(Error::UnknownUser(*i))?;
                match &self.kind {
                    Kind::Additive(values) => {
                        if let Some(v) = values.get(&(*i, j)) {
                            *slot += v.at(t);
                        }
                    }
                    Kind::Substitutable(values) => {
                        let (subs, v) = &values[i];
                        if subs.contains(&j) && seen.insert((*i, t)) {
                            *slot += v.at(t);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn score(
        &self,
        catalog_costs: impl Fn(OptId) -> Result<Money>,
        settlement: &Settlement,
    ) -> Result<Metrics> {
        let values = self.realized(&settlement.schedule)?;
        let total_cost = settlement
            .implemented
            .iter()
            .map(|j| catalog_costs(*j))
            .collect::<Result<Vec<_>>>()?;
        let total_cost: Money = total_cost.into_iter().sum();
        let total_value: Money = values.values().sum();
        let payments = settlement.payments.per_user();
        if let Some(u) = payments.keys().find(|u| !self.users.contains(u)) {
            return Err(Error::UnknownUser(*u));
        }
        let per_user_utility = values
            .into_iter()
            .map(|(u, v)| {
                let paid = payments.get(&u).cloned().unwrap_or_default();
                (u, v - paid)
            })
            .collect();
        Ok(Metrics {
            total_utility: total_value.clone() - &total_cost,
            cloud_balance: settlement.payments.total() - &total_cost,
            total_value,
            total_cost,
            per_user_utility,
            implemented: settlement.implemented.clone(),
        })
    }
}

/// Scores a settlement against the true values in `truth`.
pub fn score(truth: &Game, settlement: &Settlement) -> Result<Metrics> {
    let catalog = truth.catalog();
    Valuation::new(truth).score(|j| catalog.cost(j).cloned(), settlement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{run, MechanismKind};
    use crate::model::{AdditiveOnlineBid, Catalog, SlotHorizon, SubstitutableOnlineBid};

    fn m(n: i64) -> Money {
        Money::from_integer(n)
    }

    #[test]
    fn example_three_metrics() {
        let bid =
            |u, s, v: &[i64]| AdditiveOnlineBid::new(u, 1, s, v.iter().map(|x| m(*x)).collect());
        let game = Game::AdditiveOnline {
            catalog: Catalog::from_costs([(1, m(100))]).unwrap(),
            horizon: SlotHorizon::new(3).unwrap(),
            bids: vec![
                bid(1, 1, &[101]),
                bid(2, 1, &[16, 16, 16]),
                bid(3, 2, &[26]),
                bid(4, 2, &[26]),
            ],
        };
        let metrics = score(&game, &run(MechanismKind::AddOn, &game).unwrap()).unwrap();
        assert_eq!(metrics.total_value, m(185));
        assert_eq!(metrics.total_cost, m(100));
        assert_eq!(metrics.total_utility, m(85));
        // early leavers paid the larger share of their own departure slot
        assert_eq!(metrics.cloud_balance, m(75));
        assert_eq!(metrics.per_user_utility[&UserId(2)], m(7));
    }

    #[test]
    fn empty_settlement_scores_zero() {
        let game = Game::AdditiveOnline {
            catalog: Catalog::from_costs([(1, m(100))]).unwrap(),
            horizon: SlotHorizon::new(3).unwrap(),
            bids: vec![],
        };
        assert_eq!(
            score(&game, &Settlement::default()).unwrap(),
            Metrics::default()
        );
    }

    #[test]
    fn example_eight_balance() {
        let cat = Catalog::from_costs([(1, m(60)), (2, m(100)), (3, m(50))]).unwrap();
        let bid = |u, subs: &[u32], s, e| {
            SubstitutableOnlineBid::new(
                u,
                subs.iter().copied(),
                s,
                vec![m(100); (e - s + 1) as usize],
            )
        };
        let game = Game::SubstitutableOnline {
            catalog: cat,
            horizon: SlotHorizon::new(3).unwrap(),
            bids: vec![
                bid(1, &[1, 2], 1, 2),
                bid(2, &[1, 2, 3], 2, 3),
                bid(3, &[3], 3, 3),
            ],
        };
        let metrics = score(&game, &run(MechanismKind::SubstOn, &game).unwrap()).unwrap();
        assert_eq!(metrics.total_cost, m(110));
        assert_eq!(metrics.cloud_balance, m(0));
        assert_eq!(metrics.total_value, m(500));
    }

    #[test]
    fn unknown_users_are_rejected() {
        let game = Game::AdditiveOnline {
            catalog: Catalog::from_costs([(1, m(1))]).unwrap(),
            horizon: SlotHorizon::new(1).unwrap(),
            bids: vec![],
        };
        let mut settlement = Settlement::default();
        settlement
            .schedule
            .record_served(OptId(1), 1, [UserId(9)].into());
        assert!(matches!(
            score(&game, &settlement),
            Err(Error::UnknownUser(UserId(9)))
        ));
    }
}
