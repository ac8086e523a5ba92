//! Online cost sharing for additive optimizations.
//!
//! Each slot re-runs the Shapley mechanism on residual bids. Anyone who has
//! ever been serviced stays pinned with an unbounded bid, so the cumulative
//! serviced set only grows and the share only falls. Users pay once, at the
//! slot their bid expires, whatever the share is at that moment.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{
    validate_revision, AdditiveOnlineBid, Catalog, OptId, Optimization, PaymentLedger,
    RevisionViolation, ServiceSchedule, Slot, SlotHorizon, UserId,
};
use crate::money::Money;
use crate::shapley::{serviced_set, Offer};

/// One optimization, a horizon and the bids for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OnlineAdditiveGame {
    pub optimization: Optimization,
    pub horizon: SlotHorizon,
    pub bids: Vec<AdditiveOnlineBid>,
}

impl OnlineAdditiveGame {
    pub fn new(
        optimization: Optimization,
        horizon: SlotHorizon,
        bids: Vec<AdditiveOnlineBid>,
    ) -> Result<Self> {
        let game = OnlineAdditiveGame {
            optimization,
            horizon,
            bids,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        Optimization::new(self.optimization.id, self.optimization.cost.clone())?;
        let mut seen = BTreeSet::new();
        for bid in &self.bids {
            if bid.opt != self.optimization.id {
                return Err(Error::UnknownOptimization(bid.opt));
            }
            bid.values.validate(bid.user, self.horizon)?;
            if !seen.insert(bid.user) {
                return Err(Error::DuplicateUser(bid.user));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OnlineTrace {
    pub schedule: ServiceSchedule,
    /// Final charge per bidder, fixed at the bid's end slot.
    pub payments: BTreeMap<UserId, Money>,
    /// `(t, C_j / |CS_j(t)|)` for every slot with a non-empty cumulative set.
    pub share_history: Vec<(Slot, Money)>,
}

impl OnlineTrace {
    pub fn ledger(&self, opt: OptId) -> PaymentLedger {
        let mut ledger = PaymentLedger::new();
        for (user, p) in &self.payments {
            ledger.charge(*user, opt, p.clone());
        }
        ledger
    }
}

/// What happened in one slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotReport {
    pub slot: Slot,
    pub serviced: BTreeSet<UserId>,
    pub departures: Vec<(UserId, Money)>,
}

struct Engine {
    opt: OptId,
    cost: Money,
    cumulative: BTreeSet<UserId>,
    trace: OnlineTrace,
}

impl Engine {
    fn new(optimization: &Optimization) -> Self {
        Engine {
            opt: optimization.id,
            cost: optimization.cost.clone(),
            cumulative: BTreeSet::new(),
            trace: OnlineTrace::default(),
        }
    }

    fn run_slot(&mut self, t: Slot, bids: &BTreeMap<UserId, AdditiveOnlineBid>) -> SlotReport {
        let offers: Vec<(UserId, Offer)> = bids
            .values()
            .filter_map(|b| {
                if self.cumulative.contains(&b.user) {
                    Some((b.user, Offer::Unbounded))
                } else if t >= b.start() {
                    // zero residuals can never cover a positive share
                    let residual = b.values.residual_from(t);
                    (!residual.is_zero()).then_some((b.user, Offer::Finite(residual)))
                } else {
                    None
                }
            })
            .collect();
        let refs: Vec<(UserId, &Offer)> = offers.iter().map(|(u, o)| (*u, o)).collect();
        let (members, share) = serviced_set(&self.cost, &refs);
        self.cumulative.extend(members);

        let serviced: BTreeSet<UserId> = self
            .cumulative
            .iter()
            .copied()
            .filter(|u| bids.get(u).is_some_and(|b| b.values.is_active(t)))
            .collect();
        if let Some(share) = &share {
            self.trace.share_history.push((t, share.clone()));
        }

        let mut departures = Vec::new();
        for bid in bids.values().filter(|b| b.end() == t) {
            let payment = match &share {
                Some(p) if self.cumulative.contains(&bid.user) => p.clone(),
                _ => Money::zero(),
            };
            self.trace.payments.insert(bid.user, payment.clone());
            departures.push((bid.user, payment));
        }
        self.trace
            .schedule
            .set_slot(self.opt, t, serviced.clone(), self.cumulative.clone());
        SlotReport {
            slot: t,
            serviced,
            departures,
        }
    }
}

/// Runs the online additive mechanism over every slot of the game.
pub fn add_on(game: &OnlineAdditiveGame) -> Result<OnlineTrace> {
    game.validate()?;
    let bids: BTreeMap<UserId, AdditiveOnlineBid> =
        game.bids.iter().map(|b| (b.user, b.clone())).collect();
    let mut engine = Engine::new(&game.optimization);
    for t in game.horizon.slots() {
        engine.run_slot(t, &bids);
    }
    Ok(engine.trace)
}

/// Runs [`add_on`] separately for every optimization in the catalog.
pub fn add_on_catalog(
    catalog: &Catalog,
    horizon: SlotHorizon,
    bids: &[AdditiveOnlineBid],
) -> Result<(ServiceSchedule, PaymentLedger)> {
    let mut by_opt: BTreeMap<OptId, Vec<AdditiveOnlineBid>> = BTreeMap::new();
    for bid in bids {
        if !catalog.contains(bid.opt) {
            return Err(Error::UnknownOptimization(bid.opt));
        }
        by_opt.entry(bid.opt).or_default().push(bid.clone());
    }
    let mut schedule = ServiceSchedule::new();
    let mut ledger = PaymentLedger::new();
    for (opt, bids) in by_opt {
        let game = OnlineAdditiveGame::new(catalog.optimization(opt)?, horizon, bids)?;
        let trace = add_on(&game)?;
        schedule.merge(trace.schedule.clone());
        ledger.merge(trace.ledger(opt));
    }
    Ok((schedule, ledger))
}

/// Incremental driver: bids arrive and are revised slot by slot.
pub struct AddOnSession {
    engine: Engine,
    horizon: SlotHorizon,
    bids: BTreeMap<UserId, AdditiveOnlineBid>,
    next_slot: Slot,
}

impl AddOnSession {
    pub fn new(optimization: Optimization, horizon: SlotHorizon) -> Result<Self> {
        let optimization = Optimization::new(optimization.id, optimization.cost)?;
        Ok(AddOnSession {
            engine: Engine::new(&optimization),
            horizon,
            bids: BTreeMap::new(),
            next_slot: 1,
        })
    }

    /// The next slot that has not been processed yet.
    pub fn next_slot(&self) -> Slot {
        self.next_slot
    }

    /// Accepts new and revised bids placed at `slot` and runs every slot up
    /// to and including it. Skipped slots are run with the bids already
    /// known. Nothing changes if any bid is rejected.
    pub fn step(
        &mut self,
        slot: Slot,
        bids: impl IntoIterator<Item = AdditiveOnlineBid>,
    ) -> Result<Vec<SlotReport>> {
        if slot < self.next_slot || slot > self.horizon.z() {
            return Err(Error::Sequencing {
                last: self.next_slot.saturating_sub(1),
                got: slot,
            });
        }
        let incoming: Vec<AdditiveOnlineBid> = bids.into_iter().collect();
        let mut batch = BTreeSet::new();
        for bid in &incoming {
            self.check_bid(bid, slot)?;
            if !batch.insert(bid.user) {
                return Err(Error::DuplicateUser(bid.user));
            }
        }

        let mut reports = Vec::new();
        while self.next_slot < slot {
            reports.push(self.engine.run_slot(self.next_slot, &self.bids));
            self.next_slot += 1;
        }
        for bid in incoming {
            self.bids.insert(bid.user, bid);
        }
        reports.push(self.engine.run_slot(slot, &self.bids));
        self.next_slot = slot + 1;
        Ok(reports)
    }

    fn check_bid(&self, bid: &AdditiveOnlineBid, now: Slot) -> Result<()> {
        if bid.opt != self.engine.opt {
            return Err(Error::UnknownOptimization(bid.opt));
        }
        bid.values.validate(bid.user, self.horizon)?;
        let revision_error = |violation| Error::Revision {
            user: bid.user,
            violation,
        };
        match self.bids.get(&bid.user) {
            None if bid.start() < now => Err(revision_error(RevisionViolation::Retroactive {
                slot: bid.start(),
            })),
            None => Ok(()),
            Some(old) if old.end() < now => Err(revision_error(RevisionViolation::Settled {
                end: old.end(),
            })),
            Some(old) => validate_revision(old, bid, now).map_err(revision_error),
        }
    }

    /// Trace so far.
    pub fn trace(&self) -> &OnlineTrace {
        &self.engine.trace
    }

    /// Runs the remaining slots with no further bids.
    pub fn finish(mut self) -> OnlineTrace {
        while self.next_slot <= self.horizon.z() {
            self.engine.run_slot(self.next_slot, &self.bids);
            self.next_slot += 1;
        }
        self.engine.trace
    }
}
