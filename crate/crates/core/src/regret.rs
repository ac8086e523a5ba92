//! Regret-driven implementation with a loss-minimizing posted price.
//!
//! This is the comparison baseline. It is fed true values and is given
//! perfect knowledge of every future value when it sets a price, so its
//! results are an optimistic bound on how it would behave in practice.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{
    AdditiveOnlineBid, Catalog, OptId, PaymentLedger, ServiceSchedule, Slot, SlotHorizon,
    SlotValues, SubstitutableOnlineBid, UserId,
};
use crate::money::Money;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegretTrace {
    /// `R_j(t)` for every optimization up to and including its trigger slot.
    pub regret_series: BTreeMap<(OptId, Slot), Money>,
    pub implement_slot: BTreeMap<OptId, Option<Slot>>,
    pub posted_price: BTreeMap<OptId, Money>,
    pub serviced: ServiceSchedule,
    pub payments: PaymentLedger,
    /// Payments minus the costs of implemented optimizations.
    pub cloud_balance: Money,
}

/// The smallest price minimizing `max(cost - p * |{r >= p}|, 0)`, together
/// with that minimal loss.
pub fn optimal_posted_price(cost: &Money, residuals: &[Money]) -> (Money, Money) {
    let loss = |p: &Money| {
        let buyers = residuals.iter().filter(|r| *r >= p).count();
        (cost.clone() - p.mul_int(buyers)).max(Money::zero())
    };
    let mut candidates: BTreeSet<Money> = residuals.iter().cloned().collect();
    candidates.insert(Money::zero());
    candidates.extend((1..=residuals.len()).map(|k| cost.div_int(k)));
    // BTreeSet iterates in increasing order, so the first minimum is the smallest price
    let mut best = (Money::zero(), loss(&Money::zero()));
    for p in candidates {
        let l = loss(&p);
        if l < best.1 {
            best = (p, l);
        }
    }
    best
}

struct Demand<'a> {
    user: UserId,
    opts: BTreeSet<OptId>,
    values: &'a SlotValues,
}

/// Runs the baseline on additive online bids; each (user, optimization)
/// pair is an independent demand.
pub fn regret_additive(
    catalog: &Catalog,
    horizon: SlotHorizon,
    bids: &[AdditiveOnlineBid],
) -> Result<RegretTrace> {
    let mut seen = BTreeSet::new();
    for bid in bids {
        if !catalog.contains(bid.opt) {
            return Err(Error::UnknownOptimization(bid.opt));
        }
        bid.values.validate(bid.user, horizon)?;
        if !seen.insert((bid.user, bid.opt)) {
            return Err(Error::DuplicateUser(bid.user));
        }
    }
    let demands = bids.iter().map(|b| Demand {
        user: b.user,
        opts: BTreeSet::from([b.opt]),
        values: &b.values,
    });
    Ok(run(catalog, horizon, demands.collect()))
}

/// Runs the baseline on substitutable online bids. A user serviced by one
/// optimization stops adding regret to, and cannot buy, any other.
pub fn regret_substitutable(
    catalog: &Catalog,
    horizon: SlotHorizon,
    bids: &[SubstitutableOnlineBid],
) -> Result<RegretTrace> {
    let mut seen = BTreeSet::new();
    for bid in bids {
        bid.validate(catalog, horizon)?;
        if !seen.insert(bid.user) {
            return Err(Error::DuplicateUser(bid.user));
        }
    }
    let demands = bids.iter().map(|b| Demand {
        user: b.user,
        opts: b.substitutes.clone(),
        values: &b.values,
    });
    Ok(run(catalog, horizon, demands.collect()))
}

fn run(catalog: &Catalog, horizon: SlotHorizon, demands: Vec<Demand<'_>>) -> RegretTrace {
    let mut trace = RegretTrace::default();
    // (optimization, slot the demand was first serviced)
    let mut bound: Vec<Option<(OptId, Slot)>> = vec![None; demands.len()];
    // optimization each demand bought access to after its trigger slot
    let mut paid: Vec<Option<OptId>> = vec![None; demands.len()];
    let mut regret: BTreeMap<OptId, Money> = catalog.ids().map(|j| (j, Money::zero())).collect();
    let mut triggers: BTreeMap<OptId, Slot> = BTreeMap::new();

    for t in horizon.slots() {
        for (j, r) in regret.iter_mut().filter(|(j, _)| !triggers.contains_key(j)) {
            if t > 1 {
                let tau = t - 1;
                for (d, b) in demands.iter().zip(&bound) {
                    let elsewhere = matches!(b, Some((k, s)) if k != j && *s <= tau);
                    if d.opts.contains(j) && !elsewhere {
                        *r += d.values.at(tau);
                    }
                }
            }
            trace.regret_series.insert((*j, t), r.clone());
        }
        for (j, cost) in catalog.iter() {
            if triggers.contains_key(&j) || cost > &regret[&j] {
                continue;
            }
            triggers.insert(j, t);
            let open: Vec<usize> = (0..demands.len())
                .filter(|&d| bound[d].is_none() && demands[d].opts.contains(&j))
                .collect();
            let residuals: Vec<(usize, Money)> = open
                .iter()
                .map(|&d| (d, demands[d].values.residual_from(t + 1)))
                .filter(|(_, r)| r.is_positive())
                .collect();
            let just_values: Vec<Money> = residuals.iter().map(|(_, r)| r.clone()).collect();
            let (price, _) = optimal_posted_price(cost, &just_values);
            for &d in &open {
                if demands[d].values.is_active(t) {
                    bound[d] = Some((j, t));
                }
            }
            for (d, r) in residuals {
                if r >= price {
                    bound[d] = Some((j, t));
                    paid[d] = Some(j);
                    trace.payments.charge(demands[d].user, j, price.clone());
                }
            }
            trace.posted_price.insert(j, price);
        }
    }

    for j in catalog.ids() {
        let Some(&tr) = triggers.get(&j) else {
            trace.implement_slot.insert(j, None);
            continue;
        };
        trace.implement_slot.insert(j, Some(tr));
        for t in tr..=horizon.z() {
            let served: BTreeSet<UserId> = demands
                .iter()
                .enumerate()
                .filter(|(d, demand)| {
                    demand.values.is_active(t)
                        && bound[*d].is_some_and(|(k, _)| k == j)
                        && (t == tr || paid[*d] == Some(j))
                })
                .map(|(_, demand)| demand.user)
                .collect();
            trace.serviced.record_served(j, t, served);
        }
    }
    let costs: Money = triggers
        .keys()
        .map(|j| catalog.cost(*j).expect("trigger from catalog").clone())
        .sum();
    trace.cloud_balance = trace.payments.total() - costs;
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(n: i64) -> Money {
        Money::from_integer(n)
    }

    fn single(cost: i64) -> Catalog {
        Catalog::from_costs([(1, m(cost))]).unwrap()
    }

    fn bid(user: u32, start: Slot, values: &[i64]) -> AdditiveOnlineBid {
        AdditiveOnlineBid::new(user, 1, start, values.iter().map(|v| m(*v)).collect())
    }

    fn brute_force_loss(cost: &Money, residuals: &[Money], p: &Money) -> Money {
        let n = residuals.iter().filter(|r| *r >= p).count();
        (cost.clone() - p.mul_int(n)).max(Money::zero())
    }

    #[test]
    fn posted_price_cases() {
        let thirds = optimal_posted_price(&m(100), &[m(60), m(60), m(60)]);
        assert_eq!(thirds, (Money::new(100, 3), m(0)));
        assert_eq!(optimal_posted_price(&m(100), &[]), (m(0), m(100)));
        assert_eq!(
            optimal_posted_price(&m(100), &[m(30), m(30), m(30)]),
            (m(30), m(10))
        );
        assert_eq!(
            optimal_posted_price(&m(100), &[m(90), m(20)]),
            (m(90), m(10))
        );
    }

    #[test]
    fn lone_early_user_leaves_before_trigger() {
        let trace = regret_additive(
            &single(100),
            SlotHorizon::new(2).unwrap(),
            &[bid(1, 1, &[101])],
        )
        .unwrap();
        assert_eq!(trace.regret_series[&(OptId(1), 1)], m(0));
        assert_eq!(trace.regret_series[&(OptId(1), 2)], m(101));
        assert_eq!(trace.implement_slot[&OptId(1)], Some(2));
        assert_eq!(trace.posted_price[&OptId(1)], m(0));
        assert_eq!(trace.cloud_balance, m(-100));
        assert!(trace.serviced.served(OptId(1), 2).is_empty());
    }

    #[test]
    fn trigger_slot_is_free() {
        let bids = [bid(1, 1, &[5, 5]), bid(2, 1, &[5, 5])];
        let trace = regret_additive(&single(10), SlotHorizon::new(2).unwrap(), &bids).unwrap();
        assert_eq!(trace.implement_slot[&OptId(1)], Some(2));
        assert_eq!(
            trace.serviced.served(OptId(1), 2),
            [UserId(1), UserId(2)].into()
        );
        assert_eq!(trace.posted_price[&OptId(1)], m(0));
        assert_eq!(trace.cloud_balance, m(-10));
    }

    #[test]
    fn future_buyers_pay_the_posted_price() {
        let bids = [
            bid(1, 1, &[10]),
            bid(2, 3, &[40]),
            bid(3, 3, &[20, 30]),
            bid(4, 2, &[1, 2, 3]),
        ];
        let trace = regret_additive(&single(10), SlotHorizon::new(4).unwrap(), &bids).unwrap();
        assert_eq!(trace.implement_slot[&OptId(1)], Some(2));
        // residuals after slot 2: 40, 50, 5
        assert_eq!(trace.posted_price[&OptId(1)], Money::new(10, 3));
        assert_eq!(trace.serviced.served(OptId(1), 2), [UserId(4)].into());
        assert_eq!(
            trace.serviced.served(OptId(1), 3),
            [UserId(2), UserId(3), UserId(4)].into()
        );
        assert_eq!(trace.payments.total(), m(10));
        assert_eq!(trace.cloud_balance, m(0));
    }

    #[test]
    fn expensive_optimization_never_triggers() {
        let trace = regret_additive(
            &single(1000),
            SlotHorizon::new(3).unwrap(),
            &[bid(1, 1, &[5, 5, 5])],
        )
        .unwrap();
        assert_eq!(trace.implement_slot[&OptId(1)], None);
        assert_eq!(trace.cloud_balance, m(0));
        assert!(trace.serviced.optimizations().is_empty());
    }

    #[test]
    fn bound_users_stop_adding_regret_elsewhere() {
        let cat = Catalog::from_costs([(1, m(5)), (2, m(100))]).unwrap();
        let bids = [SubstitutableOnlineBid::new(
            1,
            [1, 2],
            1,
            vec![m(5), m(5), m(5)],
        )];
        let trace = regret_substitutable(&cat, SlotHorizon::new(3).unwrap(), &bids).unwrap();
        assert_eq!(trace.implement_slot[&OptId(1)], Some(2));
        assert_eq!(trace.regret_series[&(OptId(2), 2)], m(5));
        assert_eq!(trace.regret_series[&(OptId(2), 3)], m(5));
        assert_eq!(trace.serviced.served(OptId(1), 3), [UserId(1)].into());
        assert_eq!(trace.payments.total(), m(5));
    }

    fn online_bids(z: Slot) -> impl Strategy<Value = Vec<AdditiveOnlineBid>> {
        prop::collection::vec(
            (1..=z, 1..=z, prop::collection::vec(0i64..30, z as usize)),
            0..7,
        )
        .prop_map(move |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(k, (a, b, vals))| {
                    let (s, e) = (a.min(b), a.max(b));
                    bid(k as u32, s, &vals[..(e - s + 1) as usize])
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn posted_price_beats_every_grid_price(cost in 1i64..200, raw in prop::collection::vec(0i64..100, 0..6)) {
            let residuals: Vec<Money> = raw.iter().map(|r| m(*r)).collect();
            let (p, loss) = optimal_posted_price(&m(cost), &residuals);
            prop_assert_eq!(&loss, &brute_force_loss(&m(cost), &residuals, &p));
            for q in 0..=(100 * 8 + 8) {
                let q = Money::new(q, 8);
                let lq = brute_force_loss(&m(cost), &residuals, &q);
                prop_assert!(lq >= loss);
                if lq == loss {
                    prop_assert!(q >= p);
                }
            }
        }

        #[test]
        fn regret_series_and_trigger(cost in 1i64..150, bids in online_bids(5)) {
            let trace = regret_additive(&single(cost), SlotHorizon::new(5).unwrap(), &bids).unwrap();
            let series: Vec<Money> = (1..=5).filter_map(|t| trace.regret_series.get(&(OptId(1), t)).cloned()).collect();
            prop_assert_eq!(&series[0], &m(0));
            for w in series.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            let expected = (1..=5).find(|t| {
                let r: Money = bids.iter().flat_map(|b| (1..*t).map(|tau| b.values.at(tau))).sum();
                m(cost) <= r
            });
            prop_assert_eq!(trace.implement_slot[&OptId(1)], expected);
            if let Some(tr) = expected {
                let price = trace.posted_price[&OptId(1)].clone();
                for b in &bids {
                    let residual = b.values.residual_from(tr + 1);
                    let paid = trace.payments.get(b.user, OptId(1));
                    if residual.is_positive() && residual >= price {
                        prop_assert_eq!(paid, price.clone());
                    } else {
                        prop_assert!(paid.is_zero());
                    }
                }
                prop_assert!(trace.serviced.check_cumulative(5));
            } else {
                prop_assert!(trace.payments.total().is_zero());
            }
        }
    }
}
