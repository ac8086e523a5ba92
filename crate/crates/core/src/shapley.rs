//! The Shapley value cost-sharing mechanism for a single optimization, and
//! its per-optimization composition for additive offline games.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{AdditiveOfflineBid, Catalog, OptId, Outcome, PaymentLedger, UserId};
use crate::money::Money;

/// A bid as seen by the cost-sharing loop. `Unbounded` compares above every
/// finite amount and pins a user into the serviced set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Offer {
    Finite(Money),
    Unbounded,
}

impl Offer {
    pub fn covers(&self, share: &Money) -> bool {
        match self {
            Offer::Finite(b) => b >= share,
            Offer::Unbounded => true,
        }
    }
}

impl From<Money> for Offer {
    fn from(m: Money) -> Self {
        Offer::Finite(m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapleyResult {
    bidders: BTreeSet<UserId>,
    serviced: BTreeSet<UserId>,
    share: Option<Money>,
}

impl ShapleyResult {
    /// `S_j`: the users who get access.
    pub fn serviced(&self) -> &BTreeSet<UserId> {
        &self.serviced
    }

    /// The equal cost-share, present whenever someone is serviced.
    pub fn share(&self) -> Option<&Money> {
        self.share.as_ref()
    }

    pub fn is_implemented(&self) -> bool {
        !self.serviced.is_empty()
    }

    pub fn payment(&self, user: UserId) -> Money {
        match &self.share {
            Some(p) if self.serviced.contains(&user) => p.clone(),
            _ => Money::zero(),
        }
    }

    /// `p_ij` for every bidder, zero for the non-serviced.
    pub fn payments(&self) -> BTreeMap<UserId, Money> {
        self.bidders
            .iter()
            .map(|u| (*u, self.payment(*u)))
            .collect()
    }
}

/// Runs the Shapley value mechanism on one optimization of cost `cost`.
///
/// Starting from all bidders, repeatedly divides the cost evenly among the
/// remaining users and drops everyone whose bid is below the share, until
/// the set is stable or empty. A bid equal to the share is kept.
pub fn shapley<I>(cost: &Money, bids: I) -> Result<ShapleyResult>
where
    I: IntoIterator<Item = (UserId, Offer)>,
{
    let bids: Vec<(UserId, Offer)> = bids.into_iter().collect();
    let refs: Vec<(UserId, &Offer)> = bids.iter().map(|(u, o)| (*u, o)).collect();
    shapley_ref(cost, &refs)
}

pub(crate) fn shapley_ref(cost: &Money, bids: &[(UserId, &Offer)]) -> Result<ShapleyResult> {
    if !cost.is_positive() {
        return Err(Error::Domain(format!(
            "optimization cost must be positive, got {cost}"
        )));
    }
    let (serviced, share) = serviced_set(cost, bids);
    Ok(ShapleyResult {
        bidders: bids.iter().map(|(u, _)| *u).collect(),
        serviced: serviced.into_iter().collect(),
        share,
    })
}

/// The fixed-point loop itself; returns the serviced users and their share.
pub(crate) fn serviced_set(
    cost: &Money,
    bids: &[(UserId, &Offer)],
) -> (Vec<UserId>, Option<Money>) {
    let mut remaining: Vec<usize> = (0..bids.len()).collect();
    loop {
        if remaining.is_empty() {
            return (Vec::new(), None);
        }
        let share = cost.div_int(remaining.len());
        let before = remaining.len();
        remaining.retain(|&k| bids[k].1.covers(&share));
        if remaining.len() == before {
            return (
                remaining.into_iter().map(|k| bids[k].0).collect(),
                Some(share),
            );
        }
    }
}

/// Runs [`shapley`] independently on every optimization of the catalog.
pub fn add_off(catalog: &Catalog, bids: &[AdditiveOfflineBid]) -> Result<(Outcome, PaymentLedger)> {
    let mut seen = BTreeSet::new();
    for bid in bids {
        bid.validate(catalog)?;
        if !seen.insert(bid.user) {
            return Err(Error::DuplicateUser(bid.user));
        }
    }
    let mut outcome = Outcome::default();
    let mut ledger = PaymentLedger::new();
    for (opt, cost) in catalog.iter() {
        let column: Vec<(UserId, Offer)> = bids
            .iter()
            .map(|b| (b.user, Offer::Finite(b.value(opt))))
            .collect();
        let run = shapley(cost, column)?;
        settle_column(opt, &run, &mut outcome, &mut ledger);
    }
    Ok((outcome, ledger))
}

fn settle_column(
    opt: OptId,
    run: &ShapleyResult,
    outcome: &mut Outcome,
    ledger: &mut PaymentLedger,
) {
    if let Some(share) = run.share() {
        for user in run.serviced() {
            outcome.grant(*user, opt);
            ledger.charge(*user, opt, share.clone());
        }
    }
}
