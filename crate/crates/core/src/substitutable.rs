//! Cost sharing when each user wants any one optimization out of a set.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{
    Catalog, OptId, Outcome, PaymentLedger, ServiceSchedule, Slot, SlotHorizon,
    SubstitutableOfflineBid, SubstitutableOnlineBid, UserId,
};
use crate::money::Money;
use crate::shapley::{serviced_set, Offer};

/// One round of the offline loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phase {
    pub opt: OptId,
    pub serviced: BTreeSet<UserId>,
    pub share: Money,
    /// Other optimizations that offered the same lowest share and lost the
    /// tie to `opt` (which always has the smallest id).
    pub tied: Vec<OptId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubstOffResult {
    pub outcome: Outcome,
    pub payments: PaymentLedger,
    pub phases: Vec<Phase>,
}

struct Entry {
    user: UserId,
    offer: Offer,
    opts: BTreeSet<OptId>,
}

fn run_phases(catalog: &Catalog, entries: &[Entry]) -> Vec<Phase> {
    let mut taken: BTreeSet<UserId> = BTreeSet::new();
    let mut open: BTreeSet<OptId> = catalog.ids().collect();
    let mut phases = Vec::new();
    loop {
        let mut best: Option<Phase> = None;
        for (j, cost) in catalog.iter().filter(|(j, _)| open.contains(j)) {
            let bidders: Vec<(UserId, &Offer)> = entries
                .iter()
                .filter(|e| e.opts.contains(&j) && !taken.contains(&e.user))
                .map(|e| (e.user, &e.offer))
                .collect();
            let (members, share) = serviced_set(cost, &bidders);
            let Some(share) = share else { continue };
            match &mut best {
                Some(b) if share == b.share => b.tied.push(j),
                Some(b) if share > b.share => {}
                _ => {
                    best = Some(Phase {
                        opt: j,
                        serviced: members.into_iter().collect(),
                        share,
                        tied: Vec::new(),
                    })
                }
            }
        }
        let Some(phase) = best else { return phases };
        taken.extend(phase.serviced.iter().copied());
        open.remove(&phase.opt);
        phases.push(phase);
    }
}

fn check_unique<'a>(users: impl IntoIterator<Item = &'a UserId>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for u in users {
        if !seen.insert(*u) {
            return Err(Error::DuplicateUser(*u));
        }
    }
    Ok(())
}

/// Repeatedly implements the optimization with the smallest Shapley share
/// among the users not yet serviced, until no optimization is affordable.
pub fn subst_off(catalog: &Catalog, bids: &[SubstitutableOfflineBid]) -> Result<SubstOffResult> {
    for bid in bids {
        bid.validate(catalog)?;
    }
    check_unique(bids.iter().map(|b| &b.user))?;
    let entries: Vec<Entry> = bids
        .iter()
        .map(|b| Entry {
            user: b.user,
            offer: Offer::Finite(b.value.clone()),
            opts: b.substitutes.clone(),
        })
        .collect();
    let phases = run_phases(catalog, &entries);
    let mut result = SubstOffResult {
        phases,
        ..Default::default()
    };
    for phase in &result.phases {
        for user in &phase.serviced {
            result.outcome.grant(*user, phase.opt);
            result
                .payments
                .charge(*user, phase.opt, phase.share.clone());
        }
    }
    Ok(result)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubstOnTrace {
    pub schedule: ServiceSchedule,
    /// Charges keyed by the optimization each user was granted.
    pub payments: PaymentLedger,
    /// The single optimization each user was ever granted.
    pub grants: BTreeMap<UserId, OptId>,
    pub phase_log: Vec<(Slot, Vec<Phase>)>,
}

impl SubstOnTrace {
    pub fn payment(&self, user: UserId) -> Money {
        self.payments.user_total(user)
    }
}

/// Runs [`subst_off`] at every slot on residual bids, pinning every granted
/// user to their optimization with an unbounded bid for the rest of the
/// horizon. Users pay the share of their optimization at their end slot.
pub fn subst_on(
    catalog: &Catalog,
    horizon: SlotHorizon,
    bids: &[SubstitutableOnlineBid],
) -> Result<SubstOnTrace> {
    for bid in bids {
        bid.validate(catalog, horizon)?;
    }
    check_unique(bids.iter().map(|b| &b.user))?;
    let mut trace = SubstOnTrace::default();
    for t in horizon.slots() {
        let entries: Vec<Entry> = bids
            .iter()
            .filter_map(|b| match trace.grants.get(&b.user) {
                Some(j) => Some(Entry {
                    user: b.user,
                    offer: Offer::Unbounded,
                    opts: BTreeSet::from([*j]),
                }),
                None if t >= b.values.start => {
                    let residual = b.values.residual_from(t);
                    (!residual.is_zero()).then(|| Entry {
                        user: b.user,
                        offer: Offer::Finite(residual),
                        opts: b.substitutes.clone(),
                    })
                }
                None => None,
            })
            .collect();
        let phases = run_phases(catalog, &entries);
        let mut shares: BTreeMap<OptId, &Money> = BTreeMap::new();
        for phase in &phases {
            for user in &phase.serviced {
                trace.grants.entry(*user).or_insert(phase.opt);
            }
            let served: BTreeSet<UserId> = phase
                .serviced
                .iter()
                .copied()
                .filter(|u| bids.iter().any(|b| b.user == *u && b.values.is_active(t)))
                .collect();
            trace
                .schedule
                .set_slot(phase.opt, t, served, phase.serviced.clone());
            shares.insert(phase.opt, &phase.share);
        }
        for bid in bids.iter().filter(|b| b.values.end == t) {
            if let Some(j) = trace.grants.get(&bid.user) {
                trace.payments.charge(bid.user, *j, shares[j].clone());
            }
        }
        trace.phase_log.push((t, phases));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::model::AdditiveOfflineBid;
    use crate::shapley::add_off;

    fn m(n: i64) -> Money {
        Money::from_integer(n)
    }

    fn catalog(costs: &[(u32, i64)]) -> Catalog {
        Catalog::from_costs(costs.iter().map(|(j, c)| (*j, m(*c)))).unwrap()
    }

    fn bid(user: u32, subs: &[u32], value: Money) -> SubstitutableOfflineBid {
        SubstitutableOfflineBid::new(user, subs.iter().copied(), value)
    }

    fn users(ids: &[u32]) -> BTreeSet<UserId> {
        ids.iter().map(|u| UserId(*u)).collect()
    }

    fn online(
        user: u32,
        subs: &[u32],
        start: Slot,
        end: Slot,
        per_slot: i64,
    ) -> SubstitutableOnlineBid {
        SubstitutableOnlineBid::new(
            user,
            subs.iter().copied(),
            start,
            vec![m(per_slot); (end - start + 1) as usize],
        )
    }

    #[test]
    fn picks_lowest_share_first() {
        let cat = catalog(&[(1, 60), (2, 180), (3, 100)]);
        let bids = vec![
            bid(1, &[1, 2], m(100)),
            bid(2, &[3], m(101)),
            bid(3, &[1, 2, 3], m(60)),
            bid(4, &[2], m(70)),
        ];
        let r = subst_off(&cat, &bids).unwrap();
        assert_eq!(r.phases.len(), 2);
        assert_eq!(
            (r.phases[0].opt, &r.phases[0].serviced, &r.phases[0].share),
            (OptId(1), &users(&[1, 3]), &m(30))
        );
        assert_eq!(
            (r.phases[1].opt, &r.phases[1].serviced, &r.phases[1].share),
            (OptId(3), &users(&[2]), &m(100))
        );
        assert_eq!(r.payments.user_total(UserId(4)), m(0));
        assert_eq!(r.outcome.implemented, [OptId(1), OptId(3)].into());
    }

    #[test]
    fn dummy_identities_shift_the_winner() {
        let cat = catalog(&[(1, 6), (2, 5)]);
        let honest = vec![
            bid(1, &[1], m(5)),
            bid(2, &[1, 2], Money::new(251, 100)),
            bid(3, &[2], m(7)),
        ];
        let r = subst_off(&cat, &honest).unwrap();
        assert_eq!(r.phases.len(), 1);
        assert_eq!(
            (r.phases[0].opt, &r.phases[0].serviced),
            (OptId(2), &users(&[2, 3]))
        );
        assert_eq!(r.phases[0].share, Money::new(5, 2));

        let split = vec![
            bid(11, &[1], Money::new(5, 2)),
            bid(12, &[1], Money::new(5, 2)),
            bid(2, &[1, 2], Money::new(251, 100)),
            bid(3, &[2], m(7)),
        ];
        let r = subst_off(&cat, &split).unwrap();
        assert_eq!(
            (r.phases[0].opt, &r.phases[0].serviced, &r.phases[0].share),
            (OptId(1), &users(&[2, 11, 12]), &m(2))
        );
        assert_eq!(
            (r.phases[1].opt, &r.phases[1].serviced, &r.phases[1].share),
            (OptId(2), &users(&[3]), &m(5))
        );
    }

    #[test]
    fn ties_go_to_lowest_id_and_are_logged() {
        let cat = catalog(&[(1, 10), (2, 10), (3, 30)]);
        let r = subst_off(&cat, &[bid(1, &[2, 1, 3], m(20))]).unwrap();
        assert_eq!(r.phases[0].opt, OptId(1));
        assert_eq!(r.phases[0].tied, vec![OptId(2)]);
    }

    #[test]
    fn no_bids_no_outcome() {
        let r = subst_off(&catalog(&[(1, 10)]), &[]).unwrap();
        assert_eq!(r, SubstOffResult::default());
    }

    #[test]
    fn rejects_bad_bids() {
        let cat = catalog(&[(1, 10)]);
        assert!(matches!(
            subst_off(&cat, &[bid(1, &[2], m(1))]),
            Err(Error::UnknownOptimization(OptId(2)))
        ));
        assert!(matches!(
            subst_off(&cat, &[bid(1, &[], m(1))]),
            Err(Error::InvalidBid { .. })
        ));
        assert!(matches!(
            subst_off(&cat, &[bid(1, &[1], m(1)), bid(1, &[1], m(2))]),
            Err(Error::DuplicateUser(UserId(1)))
        ));
    }

    fn example_eight() -> (Catalog, Vec<SubstitutableOnlineBid>) {
        let cat = catalog(&[(1, 60), (2, 100), (3, 50)]);
        let bids = vec![
            online(1, &[1, 2], 1, 2, 100),
            online(2, &[1, 2, 3], 2, 3, 100),
            online(3, &[3], 3, 3, 100),
        ];
        (cat, bids)
    }

    #[test]
    fn online_pins_grants() {
        let (cat, bids) = example_eight();
        let trace = subst_on(&cat, SlotHorizon::new(3).unwrap(), &bids).unwrap();
        assert_eq!(trace.schedule.served(OptId(1), 1), users(&[1]));
        assert_eq!(trace.schedule.served(OptId(1), 2), users(&[1, 2]));
        assert_eq!(trace.schedule.served(OptId(1), 3), users(&[2]));
        assert_eq!(trace.schedule.cumulative(OptId(1), 3), users(&[1, 2]));
        assert_eq!(trace.schedule.served(OptId(3), 3), users(&[3]));
        let pays: Vec<_> = (1..=3).map(|u| trace.payment(UserId(u))).collect();
        assert_eq!(pays, vec![m(30), m(30), m(50)]);
        assert_eq!(trace.payments.total(), m(110));
        assert!(trace.schedule.check_cumulative(3));
    }

    #[test]
    fn online_granted_users_never_switch() {
        let (cat, mut bids) = example_eight();
        bids.push(online(4, &[3], 3, 3, 100));
        let trace = subst_on(&cat, SlotHorizon::new(3).unwrap(), &bids).unwrap();
        assert_eq!(trace.grants[&UserId(2)], OptId(1));
        let pays: Vec<_> = (1..=4).map(|u| trace.payment(UserId(u))).collect();
        assert_eq!(pays, vec![m(30), m(30), m(25), m(25)]);
    }

    fn offline_bids(opts: u32) -> impl Strategy<Value = Vec<SubstitutableOfflineBid>> {
        prop::collection::vec(
            (
                prop::collection::btree_set(1..=opts, 1..=opts as usize),
                0i64..120,
            ),
            0..6,
        )
        .prop_map(|raw| {
            raw.into_iter()
                .enumerate()
                .map(|(k, (s, v))| SubstitutableOfflineBid::new(k as u32, s, m(v)))
                .collect()
        })
    }

    fn costs(opts: u32) -> impl Strategy<Value = Catalog> {
        prop::collection::vec(1i64..200, opts as usize).prop_map(|c| {
            Catalog::from_costs(c.into_iter().enumerate().map(|(j, c)| (j as u32 + 1, m(c))))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn phases_recover_cost_and_are_disjoint(cat in costs(3), bids in offline_bids(3)) {
            let r = subst_off(&cat, &bids).unwrap();
            let mut seen = BTreeSet::new();
            for phase in &r.phases {
                prop_assert_eq!(phase.share.mul_int(phase.serviced.len()), cat.cost(phase.opt).unwrap().clone());
                prop_assert_eq!(r.payments.opt_total(phase.opt), cat.cost(phase.opt).unwrap().clone());
                for u in &phase.serviced {
                    prop_assert!(seen.insert(*u));
                }
            }
            prop_assert!(r.outcome.check());
            for w in r.phases.windows(2) {
                prop_assert!(w[0].share <= w[1].share);
            }
        }

        #[test]
        fn each_phase_is_the_cheapest_feasible_choice(cat in costs(3), bids in offline_bids(3)) {
            let r = subst_off(&cat, &bids).unwrap();
            let mut taken = BTreeSet::new();
            let mut open: BTreeSet<OptId> = cat.ids().collect();
            for phase in r.phases.iter().map(Some).chain([None]) {
                let shares: BTreeMap<OptId, Money> = open.iter().filter_map(|j| {
                    let column = bids.iter()
                        .filter(|b| b.substitutes.contains(j) && !taken.contains(&b.user))
                        .map(|b| (b.user, Offer::Finite(b.value.clone())));
                    crate::shapley::shapley(cat.cost(*j).unwrap(), column).unwrap().share().cloned().map(|s| (*j, s))
                }).collect();
                match phase {
                    Some(p) => {
                        prop_assert!(shares.values().all(|s| &p.share <= s));
                        prop_assert_eq!(shares.get(&p.opt), Some(&p.share));
                        taken.extend(p.serviced.iter().copied());
                        open.remove(&p.opt);
                    }
                    None => prop_assert!(shares.is_empty()),
                }
            }
        }

        #[test]
        fn singletons_reduce_to_add_off(cat in costs(3), raw in prop::collection::vec((1u32..=3, 0i64..120), 0..7)) {
            let subst: Vec<_> = raw.iter().enumerate().map(|(k, (j, v))| bid(k as u32, &[*j], m(*v))).collect();
            let additive: Vec<_> = raw.iter().enumerate().map(|(k, (j, v))| AdditiveOfflineBid::new(UserId(k as u32), [(*j, m(*v))])).collect();
            let r = subst_off(&cat, &subst).unwrap();
            let (outcome, ledger) = add_off(&cat, &additive).unwrap();
            prop_assert_eq!(r.outcome, outcome);
            prop_assert_eq!(r.payments, ledger);
        }

        #[test]
        fn single_slot_online_equals_offline(cat in costs(3), bids in offline_bids(3)) {
            let online: Vec<_> = bids.iter()
                .map(|b| SubstitutableOnlineBid::new(b.user.0, b.substitutes.iter().map(|j| j.0), 1, vec![b.value.clone()]))
                .collect();
            let trace = subst_on(&cat, SlotHorizon::new(1).unwrap(), &online).unwrap();
            let r = subst_off(&cat, &bids).unwrap();
            prop_assert_eq!(trace.schedule.outcome(), r.outcome);
            prop_assert_eq!(trace.payments, r.payments);
        }

        #[test]
        fn online_grants_are_exclusive_and_sticky(
            cat in costs(3),
            raw in prop::collection::vec((prop::collection::btree_set(1u32..=3, 1..=3), 1u32..=3, 1u32..=3, 1i64..60), 0..6),
        ) {
            let bids: Vec<_> = raw.iter().enumerate().map(|(k, (subs, a, b, v))| {
                online(k as u32, &subs.iter().copied().collect::<Vec<_>>(), *a.min(b), *a.max(b), *v)
            }).collect();
            let trace = subst_on(&cat, SlotHorizon::new(3).unwrap(), &bids).unwrap();
            prop_assert!(trace.schedule.check_cumulative(3));
            for (u, j) in &trace.grants {
                for (opt, _, set) in trace.schedule.iter_cumulative() {
                    prop_assert!(!set.contains(u) || opt == *j);
                }
            }
            for opt in trace.schedule.optimizations() {
                for t in 2..=3 {
                    prop_assert!(trace.schedule.cumulative(opt, t - 1).is_subset(&trace.schedule.cumulative(opt, t)));
                }
            }
            for b in &bids {
                let pay = trace.payment(b.user);
                match trace.grants.get(&b.user) {
                    Some(j) => {
                        let cs = trace.schedule.cumulative(*j, b.values.end);
                        prop_assert_eq!(pay, cat.cost(*j).unwrap().div_int(cs.len()));
                    }
                    None => prop_assert!(pay.is_zero()),
                }
            }
        }
    }
}
