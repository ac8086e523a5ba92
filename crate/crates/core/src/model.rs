//! Domain types shared by every mechanism: identifiers, the optimization
//! catalog, the four bid shapes, outcomes, payment ledgers and service
//! schedules, plus the valuation/cost arithmetic over outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

/// Time-slot index. Slots are numbered from 1.
pub type Slot = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OptId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for OptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A binary optimization the cloud may implement at a fixed cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Optimization {
    pub id: OptId,
    pub cost: Money,
}

impl Optimization {
    pub fn new(id: OptId, cost: Money) -> Result<Self> {
        if !cost.is_positive() {
            return Err(Error::NonPositiveCost(id));
        }
        Ok(Optimization { id, cost })
    }
}

/// The set of optimizations on offer, keyed by id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Optimization>", into = "Vec<Optimization>")]
pub struct Catalog {
    costs: BTreeMap<OptId, Money>,
}

impl Catalog {
    pub fn new(opts: impl IntoIterator<Item = Optimization>) -> Result<Self> {
        let mut costs = BTreeMap::new();
        for opt in opts {
            let opt = Optimization::new(opt.id, opt.cost)?;
            if costs.insert(opt.id, opt.cost).is_some() {
                return Err(Error::DuplicateOptimization(opt.id));
            }
        }
        Ok(Catalog { costs })
    }

    /// Convenience constructor from `(id, cost)` pairs.
    pub fn from_costs(costs: impl IntoIterator<Item = (u32, Money)>) -> Result<Self> {
        Catalog::new(costs.into_iter().map(|(id, cost)| Optimization {
            id: OptId(id),
            cost,
        }))
    }

    pub fn cost(&self, id: OptId) -> Result<&Money> {
        self.costs.get(&id).ok_or(Error::UnknownOptimization(id))
    }

    pub fn contains(&self, id: OptId) -> bool {
        self.costs.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = OptId> + '_ {
        self.costs.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (OptId, &Money)> + '_ {
        self.costs.iter().map(|(id, c)| (*id, c))
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn optimization(&self, id: OptId) -> Result<Optimization> {
        Ok(Optimization {
            id,
            cost: self.cost(id)?.clone(),
        })
    }
}

impl TryFrom<Vec<Optimization>> for Catalog {
    type Error = Error;
    fn try_from(opts: Vec<Optimization>) -> Result<Self> {
        Catalog::new(opts)
    }
}

impl From<Catalog> for Vec<Optimization> {
    fn from(c: Catalog) -> Self {
        c.costs
            .into_iter()
            .map(|(id, cost)| Optimization { id, cost })
            .collect()
    }
}

/// Number of slots `z` in the service period; slots run `1..=z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SlotHorizon(Slot);

impl SlotHorizon {
    pub fn new(z: Slot) -> Result<Self> {
        if z == 0 {
            return Err(Error::EmptyHorizon);
        }
        Ok(SlotHorizon(z))
    }

    pub fn z(&self) -> Slot {
        self.0
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> {
        1..=self.0
    }
}

impl TryFrom<u32> for SlotHorizon {
    type Error = Error;
    fn try_from(z: u32) -> Result<Self> {
        SlotHorizon::new(z)
    }
}

impl From<SlotHorizon> for u32 {
    fn from(h: SlotHorizon) -> u32 {
        h.0
    }
}

/// A single-period bid over independent optimizations. Absent entries are 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveOfflineBid {
    pub user: UserId,
    pub values: BTreeMap<OptId, Money>,
}

impl AdditiveOfflineBid {
    pub fn new(user: UserId, values: impl IntoIterator<Item = (u32, Money)>) -> Self {
        AdditiveOfflineBid {
            user,
            values: values.into_iter().map(|(j, v)| (OptId(j), v)).collect(),
        }
    }

    pub fn value(&self, opt: OptId) -> Money {
        self.values.get(&opt).cloned().unwrap_or_default()
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        for (opt, v) in &self.values {
            if !catalog.contains(*opt) {
                return Err(Error::UnknownOptimization(*opt));
            }
            if v.is_negative() {
                return Err(Error::InvalidBid {
                    user: self.user,
                    reason: format!("negative value for optimization {opt}"),
                });
            }
        }
        Ok(())
    }
}

/// Per-slot values over `[start, end]`, shared by both online bid shapes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValues {
    pub start: Slot,
    pub end: Slot,
    pub per_slot: Vec<Money>,
}

impl SlotValues {
    pub fn new(start: Slot, per_slot: Vec<Money>) -> Self {
        let end = start + per_slot.len().saturating_sub(1) as Slot;
        SlotValues {
            start,
            end,
            per_slot,
        }
    }

    /// The same amount in every slot of `[start, end]`.
    pub fn flat(start: Slot, end: Slot, value: Money) -> Self {
        let len = (end + 1).saturating_sub(start) as usize;
        SlotValues {
            start,
            end,
            per_slot: vec![value; len],
        }
    }

    /// Declared value at slot `t`; zero outside `[start, end]`.
    pub fn at(&self, t: Slot) -> Money {
        if t < self.start || t > self.end {
            return Money::zero();
        }
        self.per_slot
            .get((t - self.start) as usize)
            .cloned()
            .unwrap_or_default()
    }

    /// Residual value `sum_{tau >= t} b(tau)`.
    pub fn residual_from(&self, t: Slot) -> Money {
        if t > self.end {
            return Money::zero();
        }
        let skip = t.saturating_sub(self.start) as usize;
        self.per_slot.iter().skip(skip).sum()
    }

    pub fn total(&self) -> Money {
        self.per_slot.iter().sum()
    }

    pub fn is_active(&self, t: Slot) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn validate(&self, user: UserId, horizon: SlotHorizon) -> Result<()> {
        if self.start < 1 || self.start > self.end || self.end > horizon.z() {
            return Err(Error::SlotOutOfHorizon {
                user,
                start: self.start,
                end: self.end,
                horizon: horizon.z(),
            });
        }
        if self.per_slot.len() != (self.end - self.start + 1) as usize {
            return Err(Error::InvalidBid {
                user,
                reason: format!(
                    "{} per-slot values for interval {}..={}",
                    self.per_slot.len(),
                    self.start,
                    self.end
                ),
            });
        }
        if self.per_slot.iter().any(Money::is_negative) {
            return Err(Error::InvalidBid {
                user,
                reason: "negative per-slot value".into(),
            });
        }
        Ok(())
    }
}

/// `theta_ij = (s_i, e_i, b_ij)`: an online bid for one optimization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditiveOnlineBid {
    pub user: UserId,
    pub opt: OptId,
    #[serde(flatten)]
    pub values: SlotValues,
}

impl AdditiveOnlineBid {
    pub fn new(user: u32, opt: u32, start: Slot, per_slot: Vec<Money>) -> Self {
        AdditiveOnlineBid {
            user: UserId(user),
            opt: OptId(opt),
            values: SlotValues::new(start, per_slot),
        }
    }

    pub fn start(&self) -> Slot {
        self.values.start
    }

    pub fn end(&self) -> Slot {
        self.values.end
    }
}

/// `theta_i = (J_i, v_i)`: any one member of `substitutes` is worth `value`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutableOfflineBid {
    pub user: UserId,
    pub substitutes: BTreeSet<OptId>,
    pub value: Money,
}

impl SubstitutableOfflineBid {
    pub fn new(user: u32, substitutes: impl IntoIterator<Item = u32>, value: Money) -> Self {
        SubstitutableOfflineBid {
            user: UserId(user),
            substitutes: substitutes.into_iter().map(OptId).collect(),
            value,
        }
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        validate_substitutes(self.user, &self.substitutes, catalog)?;
        if self.value.is_negative() {
            return Err(Error::InvalidBid {
                user: self.user,
                reason: "negative value".into(),
            });
        }
        Ok(())
    }
}

/// `omega_i = (s_i, e_i, b_i, J_i)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutableOnlineBid {
    pub user: UserId,
    pub substitutes: BTreeSet<OptId>,
    #[serde(flatten)]
    pub values: SlotValues,
}

impl SubstitutableOnlineBid {
    pub fn new(
        user: u32,
        substitutes: impl IntoIterator<Item = u32>,
        start: Slot,
        per_slot: Vec<Money>,
    ) -> Self {
        SubstitutableOnlineBid {
            user: UserId(user),
            substitutes: substitutes.into_iter().map(OptId).collect(),
            values: SlotValues::new(start, per_slot),
        }
    }

    pub fn validate(&self, catalog: &Catalog, horizon: SlotHorizon) -> Result<()> {
        validate_substitutes(self.user, &self.substitutes, catalog)?;
        self.values.validate(self.user, horizon)
    }
}

fn validate_substitutes(
    user: UserId,
    substitutes: &BTreeSet<OptId>,
    catalog: &Catalog,
) -> Result<()> {
    if substitutes.is_empty() {
        return Err(Error::InvalidBid {
            user,
            reason: "empty substitute set".into(),
        });
    }
    match substitutes.iter().find(|j| !catalog.contains(**j)) {
        Some(j) => Err(Error::UnknownOptimization(*j)),
        None => Ok(()),
    }
}

/// An alternative: implemented optimizations plus grant pairs `(i, j)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub implemented: BTreeSet<OptId>,
    pub grants: BTreeSet<(UserId, OptId)>,
}

impl Outcome {
    /// Records a grant and implements its optimization.
    pub fn grant(&mut self, user: UserId, opt: OptId) {
        self.implemented.insert(opt);
        self.grants.insert((user, opt));
    }

    /// Every grant pair must name an implemented optimization.
    pub fn check(&self) -> bool {
        self.grants
            .iter()
            .all(|(_, j)| self.implemented.contains(j))
    }

    pub fn serviced(&self, opt: OptId) -> BTreeSet<UserId> {
        self.grants
            .iter()
            .filter(|(_, j)| *j == opt)
            .map(|(i, _)| *i)
            .collect()
    }

    pub fn grants_of(&self, user: UserId) -> impl Iterator<Item = OptId> + '_ {
        self.grants
            .iter()
            .filter(move |(i, _)| *i == user)
            .map(|(_, j)| *j)
    }
}

/// Cost-shares `p_ij`. Missing entries are 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PaymentLedger {
    entries: BTreeMap<(UserId, OptId), Money>,
}

impl PaymentLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `p_ij`, replacing any previous charge for the pair.
    pub fn charge(&mut self, user: UserId, opt: OptId, amount: Money) {
        debug_assert!(!amount.is_negative());
        if amount.is_zero() {
            self.entries.remove(&(user, opt));
        } else {
            self.entries.insert((user, opt), amount);
        }
    }

    pub fn get(&self, user: UserId, opt: OptId) -> Money {
        self.entries.get(&(user, opt)).cloned().unwrap_or_default()
    }

    /// `P_i`.
    pub fn user_total(&self, user: UserId) -> Money {
        self.entries
            .iter()
            .filter(|((i, _), _)| *i == user)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn opt_total(&self, opt: OptId) -> Money {
        self.entries
            .iter()
            .filter(|((_, j), _)| *j == opt)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total(&self) -> Money {
        self.entries.values().sum()
    }

    pub fn per_user(&self) -> BTreeMap<UserId, Money> {
        let mut out: BTreeMap<UserId, Money> = BTreeMap::new();
        for ((i, _), p) in &self.entries {
            *out.entry(*i).or_default() += p;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, OptId, &Money)> + '_ {
        self.entries.iter().map(|((i, j), p)| (*i, *j, p))
    }

    pub fn merge(&mut self, other: PaymentLedger) {
        for ((i, j), p) in other.entries {
            *self.entries.entry((i, j)).or_default() += &p;
        }
    }

    /// Renames users, adding up the charges of users mapped to the same id.
    pub fn relabel(&self, map: &BTreeMap<UserId, UserId>) -> PaymentLedger {
        let mut out = PaymentLedger::new();
        for ((i, j), p) in &self.entries {
            *out.entries
                .entry((*map.get(i).unwrap_or(i), *j))
                .or_default() += p;
        }
        out
    }
}

/// Per-slot serviced sets `S_j(t)` and cumulative sets `CS_j(t)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ServiceSchedule {
    served: BTreeMap<(OptId, Slot), BTreeSet<UserId>>,
    cumulative: BTreeMap<(OptId, Slot), BTreeSet<UserId>>,
}

impl ServiceSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the users served at `(opt, slot)`; the cumulative set is
    /// derived from earlier recorded slots.
    pub fn record_served(&mut self, opt: OptId, slot: Slot, users: BTreeSet<UserId>) {
        let mut cumulative = self
            .cumulative
            .range((opt, 0)..(opt, slot))
            .next_back()
            .map(|(_, s)| s.clone())
            .unwrap_or_default();
        cumulative.extend(users.iter().copied());
        self.set_slot(opt, slot, users, cumulative);
    }

    /// Records both sets as computed by a mechanism.
    pub fn set_slot(
        &mut self,
        opt: OptId,
        slot: Slot,
        served: BTreeSet<UserId>,
        cumulative: BTreeSet<UserId>,
    ) {
        if !served.is_empty() {
            self.served.insert((opt, slot), served);
        } else {
            self.served.remove(&(opt, slot));
        }
        if !cumulative.is_empty() {
            self.cumulative.insert((opt, slot), cumulative);
        } else {
            self.cumulative.remove(&(opt, slot));
        }
    }

    pub fn served(&self, opt: OptId, slot: Slot) -> BTreeSet<UserId> {
        self.served.get(&(opt, slot)).cloned().unwrap_or_default()
    }

    pub fn cumulative(&self, opt: OptId, slot: Slot) -> BTreeSet<UserId> {
        self.cumulative
            .get(&(opt, slot))
            .cloned()
            .unwrap_or_default()
    }

    /// Non-empty `S_j(t)` entries in `(opt, slot)` order.
    pub fn iter_served(&self) -> impl Iterator<Item = (OptId, Slot, &BTreeSet<UserId>)> + '_ {
        self.served.iter().map(|((j, t), s)| (*j, *t, s))
    }

    pub fn iter_cumulative(&self) -> impl Iterator<Item = (OptId, Slot, &BTreeSet<UserId>)> + '_ {
        self.cumulative.iter().map(|((j, t), s)| (*j, *t, s))
    }

    /// Optimizations that served or committed to at least one user.
    pub fn optimizations(&self) -> BTreeSet<OptId> {
        self.cumulative
            .keys()
            .chain(self.served.keys())
            .map(|(j, _)| *j)
            .collect()
    }

    pub fn last_slot(&self) -> Slot {
        self.cumulative
            .keys()
            .chain(self.served.keys())
            .map(|(_, t)| *t)
            .max()
            .unwrap_or(0)
    }

    /// Grants implied by the schedule: every (user, opt) ever served.
    pub fn outcome(&self) -> Outcome {
        let mut out = Outcome::default();
        for ((j, _), users) in self.served.iter().chain(self.cumulative.iter()) {
            for i in users {
                out.grant(*i, *j);
            }
        }
        out
    }

    /// Checks `CS_j(t) = union_{tau <= t} S_j(tau)` for every optimization and
    /// slot up to `z`. Mechanisms that pin users into `CS` before they are
    /// served (a user who departed stays in `CS`) still satisfy this because
    /// every member of `CS` was served at the slot it joined.
    pub fn check_cumulative(&self, z: Slot) -> bool {
        for opt in self.optimizations() {
            let mut union = BTreeSet::new();
            for t in 1..=z {
                union.extend(self.served(opt, t));
                let cs = self.cumulative(opt, t);
                if cs != union || !self.served(opt, t).is_subset(&cs) {
                    return false;
                }
            }
        }
        true
    }

    /// Renames users, merging the sets of users mapped to the same id.
    pub fn relabel(&self, map: &BTreeMap<UserId, UserId>) -> ServiceSchedule {
        let rename = |s: &BTreeSet<UserId>| {
            s.iter()
                .map(|u| *map.get(u).unwrap_or(u))
                .collect::<BTreeSet<_>>()
        };
        ServiceSchedule {
            served: self.served.iter().map(|(k, s)| (*k, rename(s))).collect(),
            cumulative: self
                .cumulative
                .iter()
                .map(|(k, s)| (*k, rename(s)))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: ServiceSchedule) {
        for (k, s) in other.served {
            self.served.entry(k).or_default().extend(s);
        }
        for (k, s) in other.cumulative {
            self.cumulative.entry(k).or_default().extend(s);
        }
    }
}

/// `B_i(a)`: the user's declared value summed over their grants.
pub fn value_of_outcome(bid: &AdditiveOfflineBid, outcome: &Outcome) -> Money {
    outcome.grants_of(bid.user).map(|j| bid.value(j)).sum()
}

/// `C(a)`: total cost of the implemented optimizations.
pub fn cost_of_outcome(catalog: &Catalog, outcome: &Outcome) -> Result<Money> {
    outcome
        .implemented
        .iter()
        .map(|j| catalog.cost(*j).cloned())
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().sum())
}

/// Why a bid revision was refused.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RevisionViolation {
    #[error("revision targets a different user or optimization")]
    Mismatch,
    #[error("start slot changed from {old} to {new}")]
    StartChanged { old: Slot, new: Slot },
    #[error("end slot shrank from {old} to {new}")]
    EndShrunk { old: Slot, new: Slot },
    #[error("value at past slot {slot} changed")]
    Retroactive { slot: Slot },
    #[error("value at slot {slot} revised downward")]
    Downward { slot: Slot },
    #[error("bid already settled at slot {end}")]
    Settled { end: Slot },
}

/// Accepts `new` as a revision of `old` made at slot `now`: same start, an
/// end that does not shrink, past slots untouched and future slots revised
/// upward only.
pub fn validate_revision(
    old: &AdditiveOnlineBid,
    new: &AdditiveOnlineBid,
    now: Slot,
) -> std::result::Result<(), RevisionViolation> {
    if old.user != new.user || old.opt != new.opt {
        return Err(RevisionViolation::Mismatch);
    }
    check_slot_revision(&old.values, &new.values, now)
}

pub(crate) fn check_slot_revision(
    old: &SlotValues,
    new: &SlotValues,
    now: Slot,
) -> std::result::Result<(), RevisionViolation> {
    if new.start != old.start {
        return Err(RevisionViolation::StartChanged {
            old: old.start,
            new: new.start,
        });
    }
    if new.end < old.end {
        return Err(RevisionViolation::EndShrunk {
            old: old.end,
            new: new.end,
        });
    }
    for t in old.start..=new.end {
        let (before, after) = (old.at(t), new.at(t));
        if t < now && before != after {
            return Err(RevisionViolation::Retroactive { slot: t });
        }
        if t >= now && after < before {
            return Err(RevisionViolation::Downward { slot: t });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: i64) -> Money {
        Money::from_integer(n)
    }

    fn outcome(grants: &[(u32, u32)]) -> Outcome {
        let mut o = Outcome::default();
        for (i, j) in grants {
            o.grant(UserId(*i), OptId(*j));
        }
        o
    }

    #[test]
    fn value_of_outcome_sums_granted_values() {
        let bid = AdditiveOfflineBid::new(UserId(1), [(1, m(100)), (2, m(60))]);
        assert_eq!(value_of_outcome(&bid, &outcome(&[(1, 1)])), m(100));
        assert_eq!(value_of_outcome(&bid, &Outcome::default()), m(0));
        let bid = AdditiveOfflineBid::new(UserId(1), [(1, m(3)), (2, m(4))]);
        assert_eq!(value_of_outcome(&bid, &outcome(&[(1, 1), (1, 2)])), m(7));
        // grants to other users and absent entries contribute nothing
        assert_eq!(value_of_outcome(&bid, &outcome(&[(2, 1), (1, 3)])), m(0));
    }

    #[test]
    fn value_is_additive_over_disjoint_grants() {
        let bid = AdditiveOfflineBid::new(UserId(1), [(1, m(3)), (2, m(4)), (3, m(9))]);
        let a = outcome(&[(1, 1)]);
        let b = outcome(&[(1, 2), (1, 3)]);
        let both = outcome(&[(1, 1), (1, 2), (1, 3)]);
        assert_eq!(
            value_of_outcome(&bid, &both),
            value_of_outcome(&bid, &a) + value_of_outcome(&bid, &b)
        );
    }

    #[test]
    fn cost_of_outcome_sums_implemented() {
        let catalog = Catalog::from_costs([(1, m(60)), (2, m(180)), (3, m(100))]).unwrap();
        let mut o = Outcome::default();
        o.implemented.extend([OptId(1), OptId(3)]);
        assert_eq!(cost_of_outcome(&catalog, &o).unwrap(), m(160));
        assert_eq!(
            cost_of_outcome(&catalog, &Outcome::default()).unwrap(),
            m(0)
        );
        let single = Catalog::from_costs([(1, m(60))]).unwrap();
        assert_eq!(
            cost_of_outcome(&single, &outcome(&[(1, 1)])).unwrap(),
            m(60)
        );
        assert!(matches!(
            cost_of_outcome(&single, &outcome(&[(1, 7)])),
            Err(Error::UnknownOptimization(OptId(7)))
        ));
    }

    #[test]
    fn catalog_rejects_bad_costs_and_duplicates() {
        assert!(matches!(
            Catalog::from_costs([(1, m(0))]),
            Err(Error::NonPositiveCost(_))
        ));
        assert!(matches!(
            Catalog::from_costs([(1, m(1)), (1, m(2))]),
            Err(Error::DuplicateOptimization(_))
        ));
        assert!(SlotHorizon::new(0).is_err());
    }

    #[test]
    fn revision_rules() {
        let old = AdditiveOnlineBid::new(1, 1, 1, vec![m(10), m(10), m(10)]);
        let raised = AdditiveOnlineBid::new(1, 1, 1, vec![m(10), m(20), m(10)]);
        assert_eq!(validate_revision(&old, &raised, 2), Ok(()));
        assert_eq!(validate_revision(&old, &old, 2), Ok(()));
        let lowered = AdditiveOnlineBid::new(1, 1, 1, vec![m(10), m(5), m(10)]);
        assert_eq!(
            validate_revision(&old, &lowered, 2),
            Err(RevisionViolation::Downward { slot: 2 })
        );
        let past = AdditiveOnlineBid::new(1, 1, 1, vec![m(11), m(10), m(10)]);
        assert_eq!(
            validate_revision(&old, &past, 2),
            Err(RevisionViolation::Retroactive { slot: 1 })
        );
        let shrunk = AdditiveOnlineBid::new(1, 1, 1, vec![m(10), m(10)]);
        assert_eq!(
            validate_revision(&old, &shrunk, 2),
            Err(RevisionViolation::EndShrunk { old: 3, new: 2 })
        );
        let extended = AdditiveOnlineBid::new(1, 1, 1, vec![m(10), m(10), m(10), m(4)]);
        assert_eq!(validate_revision(&old, &extended, 2), Ok(()));
        let moved = AdditiveOnlineBid::new(1, 1, 2, vec![m(10), m(10)]);
        assert!(matches!(
            validate_revision(&old, &moved, 2),
            Err(RevisionViolation::StartChanged { .. })
        ));
        let other = AdditiveOnlineBid::new(2, 1, 1, vec![m(10), m(10), m(10)]);
        assert_eq!(
            validate_revision(&old, &other, 2),
            Err(RevisionViolation::Mismatch)
        );
    }

    #[test]
    fn slot_values_residuals() {
        let v = SlotValues::new(2, vec![m(1), m(2), m(3)]);
        assert_eq!(v.end, 4);
        assert_eq!(v.residual_from(1), m(6));
        assert_eq!(v.residual_from(3), m(5));
        assert_eq!(v.residual_from(5), m(0));
        assert_eq!(v.at(1), m(0));
        assert_eq!(v.at(4), m(3));
        let h = SlotHorizon::new(4).unwrap();
        assert!(v.validate(UserId(1), h).is_ok());
        assert!(v.validate(UserId(1), SlotHorizon::new(3).unwrap()).is_err());
    }

    #[test]
    fn schedule_cumulative_identity() {
        let mut s = ServiceSchedule::new();
        s.record_served(OptId(1), 1, [UserId(1)].into());
        s.record_served(OptId(1), 2, [UserId(2)].into());
        s.record_served(OptId(1), 3, BTreeSet::new());
        assert_eq!(s.cumulative(OptId(1), 3), [UserId(1), UserId(2)].into());
        assert!(s.check_cumulative(3));
        s.set_slot(OptId(1), 2, [UserId(2)].into(), [UserId(2)].into());
        assert!(!s.check_cumulative(3));
    }

    #[test]
    fn ledger_totals() {
        let mut l = PaymentLedger::new();
        l.charge(UserId(1), OptId(1), m(3));
        l.charge(UserId(1), OptId(2), m(4));
        l.charge(UserId(2), OptId(1), m(5));
        assert_eq!(l.user_total(UserId(1)), m(7));
        assert_eq!(l.opt_total(OptId(1)), m(8));
        assert_eq!(l.total(), m(12));
    }
}
