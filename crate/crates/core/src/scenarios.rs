//! Seeded generators for the simulated experiment families and for the
//! small random games used by the property suites.
//!
//! Every draw comes from a ChaCha8 stream seeded with the spec's seed.
//! Stream `(trial << 16) | user` feeds one user of one trial and stream
//! `(trial << 16) | 0xFFFF` feeds that trial's catalog, so adding users
//! never perturbs the draws of existing ones. Real-valued draws are
//! snapped to multiples of 10^-6 before they become money.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::Game;
use crate::model::{
    AdditiveOfflineBid, AdditiveOnlineBid, Catalog, OptId, Slot, SlotHorizon, SlotValues,
    SubstitutableOfflineBid, SubstitutableOnlineBid, UserId,
};
use crate::money::Money;

const MICROS: u64 = 1_000_000;
const CATALOG_STREAM: u64 = 0xFFFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CollabSize,
    OverlapSlots,
    DurationSpread,
    ArrivalSkew,
    Selectivity,
    UsecaseShape,
}

impl Family {
    pub fn is_substitutable(self) -> bool {
        self == Family::Selectivity
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skew {
    #[default]
    Uniform,
    Early,
    Late,
}

/// Mean of the exponential draw behind early and late arrivals.
pub const SKEW_MEAN: f64 = 1.2;

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: Family,
    pub users: u32,
    pub slots: u32,
    #[serde(default = "one")]
    pub opt_count: u32,
    /// The optimization cost, or the mean cost when costs are drawn.
    pub cost: Money,
    #[serde(default = "one")]
    pub substitutes_per_user: u32,
    #[serde(default = "one")]
    pub duration: u32,
    #[serde(default)]
    pub skew: Skew,
    pub seed: u64,
    pub trials: u32,
    /// Executions of each workload per slot, for `usecase_shape`.
    #[serde(default)]
    pub executions_per_slot: Option<u32>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.users == 0 || self.slots == 0 || self.opt_count == 0 || self.trials == 0 {
            return bad("users, slots, opt_count and trials must all be positive".into());
        }
        if self.substitutes_per_user == 0 || self.duration == 0 {
            return bad("substitutes_per_user and duration must be positive".into());
        }
        if self.users >= CATALOG_STREAM as u32 {
            return bad(format!("at most {} users per trial", CATALOG_STREAM - 1));
        }
        if self.substitutes_per_user > self.opt_count {
            return bad(format!(
                "substitutes_per_user {} exceeds opt_count {}",
                self.substitutes_per_user, self.opt_count
            ));
        }
        if self.duration > self.slots {
            return bad(format!(
                "duration {} exceeds the {} slots",
                self.duration, self.slots
            ));
        }
        if !self.cost.is_positive() {
            return bad("cost must be positive".into());
        }
        if self.family == Family::UsecaseShape && self.executions_per_slot.is_none() {
            return bad("usecase_shape needs executions_per_slot".into());
        }
        Ok(())
    }

    pub fn with_cost(&self, cost: Money) -> ScenarioSpec {
        ScenarioSpec {
            cost,
            ..self.clone()
        }
    }
}

/// Uniform draws on top of one ChaCha8 stream.
pub struct Draws(ChaCha8Rng);

impl Draws {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Draws(rng)
    }

    /// Uniform integer in `0..n` by widening multiplication.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.0.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform on `{0, 1/10^6, ..., 1}`.
    pub fn unit(&mut self) -> Money {
        Money::from_micros(self.below(MICROS + 1) as i64)
    }

    /// Uniform on `{1/10^6, ..., 1}`, never zero.
    pub fn unit_positive(&mut self) -> Money {
        Money::from_micros(1 + self.below(MICROS) as i64)
    }

    pub fn slot(&mut self, lo: Slot, hi: Slot) -> Slot {
        lo + self.below((hi - lo + 1) as u64) as Slot
    }

    /// Exponential with the given mean, from a uniform on `(0, 1]`.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        let u = ((self.0.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
        -mean * u.ln()
    }

    /// `k` distinct members of `0..n`, by partial Fisher-Yates.
    pub fn choose(&mut self, n: u32, k: u32) -> Vec<u32> {
        let mut pool: Vec<u32> = (0..n).collect();
        for i in 0..k as usize {
            let j = i + self.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k as usize);
        pool
    }
}

fn stream(trial: u32, lane: u64) -> u64 {
    ((trial as u64) << 16) | lane
}

fn start_slot(draws: &mut Draws, skew: Skew, z: Slot, duration: u32) -> Slot {
    let last = z - duration + 1;
    let clamp = |x: f64| (x.round().max(1.0) as Slot).min(last);
    match skew {
        Skew::Uniform => draws.slot(1, last),
        Skew::Early => clamp(1.0 + draws.exponential(SKEW_MEAN)),
        Skew::Late => clamp(z as f64 - draws.exponential(SKEW_MEAN)),
    }
}

/// Per-slot value of a view saved by one execution, in dollars, for each
/// of the six use-case users. The final snapshot view is by far the most
/// useful; every other view saves a cent per execution.
const USECASE_FINAL_VIEW_SAVINGS_CENTS: [i64; 6] = [18, 7, 3, 16, 9, 4];
const USECASE_VIEWS: u32 = 27;
const USECASE_STRIDES: [u32; 3] = [1, 2, 4];

/// The game for one trial of `spec`.
pub fn generate(spec: &ScenarioSpec, trial: u32) -> Result<Game> {
    spec.validate()?;
    if trial >= spec.trials {
        return Err(Error::InvalidScenario(format!(
            "trial {trial} out of range for {} trials",
            spec.trials
        )));
    }
    let horizon = SlotHorizon::new(spec.slots)?;
    let z = spec.slots;
    match spec.family {
        Family::CollabSize
        | Family::OverlapSlots
        | Family::DurationSpread
        | Family::ArrivalSkew => {
            let catalog = Catalog::from_costs([(1, spec.cost.clone())])?;
            let bids = (0..spec.users)
                .map(|u| {
                    let mut d = Draws::new(spec.seed, stream(trial, u as u64));
                    let value = d.unit();
                    let start = start_slot(&mut d, spec.skew, z, spec.duration);
                    let per_slot = value.div_int(spec.duration as usize);
                    AdditiveOnlineBid {
                        user: UserId(u + 1),
                        opt: OptId(1),
                        values: SlotValues::new(start, vec![per_slot; spec.duration as usize]),
                    }
                })
                .collect();
            Ok(Game::AdditiveOnline {
                catalog,
                horizon,
                bids,
            })
        }
        Family::Selectivity => {
            let mut c = Draws::new(spec.seed, stream(trial, CATALOG_STREAM));
            let catalog = Catalog::from_costs(
                (1..=spec.opt_count)
                    .map(|j| (j, spec.cost.mul_int(2) * &c.unit_positive()))
                    .collect::<Vec<_>>(),
            )?;
            let bids = (0..spec.users)
                .map(|u| {
                    let mut d = Draws::new(spec.seed, stream(trial, u as u64));
                    let value = d.unit();
                    let start = start_slot(&mut d, spec.skew, z, spec.duration);
                    let substitutes: BTreeSet<OptId> = d
                        .choose(spec.opt_count, spec.substitutes_per_user)
                        .into_iter()
                        .map(|j| OptId(j + 1))
                        .collect();
                    let per_slot = value.div_int(spec.duration as usize);
                    SubstitutableOnlineBid {
                        user: UserId(u + 1),
                        substitutes,
                        values: SlotValues::new(start, vec![per_slot; spec.duration as usize]),
                    }
                })
                .collect();
            Ok(Game::SubstitutableOnline {
                catalog,
                horizon,
                bids,
            })
        }
        Family::UsecaseShape => {
            let executions = spec.executions_per_slot.expect("validated") as i64;
            let catalog = Catalog::from_costs((1..=USECASE_VIEWS).map(|j| (j, spec.cost.clone())))?;
            let intervals: Vec<(Slot, Slot)> =
                (1..=z).flat_map(|s| (s..=z).map(move |e| (s, e))).collect();
            let mut bids = Vec::new();
            for u in 0..spec.users {
                let mut d = Draws::new(spec.seed, stream(trial, u as u64));
                let (start, end) = intervals[d.below(intervals.len() as u64) as usize];
                let stride = USECASE_STRIDES[u as usize % USECASE_STRIDES.len()];
                let final_cents = USECASE_FINAL_VIEW_SAVINGS_CENTS
                    [u as usize % USECASE_FINAL_VIEW_SAVINGS_CENTS.len()];
                for view in (1..=USECASE_VIEWS).filter(|k| (USECASE_VIEWS - k) % stride == 0) {
                    let cents = if view == USECASE_VIEWS {
                        final_cents
                    } else {
                        1
                    };
                    let per_slot = Money::new(cents * executions, 100);
                    bids.push(AdditiveOnlineBid {
                        user: UserId(u + 1),
                        opt: OptId(view),
                        values: SlotValues::flat(start, end, per_slot),
                    });
                }
            }
            Ok(Game::AdditiveOnline {
                catalog,
                horizon,
                bids,
            })
        }
    }
}

/// The four bid shapes a small game can take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameShape {
    AdditiveOffline,
    AdditiveOnline,
    SubstitutableOffline,
    SubstitutableOnline,
}

impl GameShape {
    pub const ALL: [GameShape; 4] = [
        GameShape::AdditiveOffline,
        GameShape::AdditiveOnline,
        GameShape::SubstitutableOffline,
        GameShape::SubstitutableOnline,
    ];
}

/// Size limits for [`small_game`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmallGameLimits {
    pub max_users: u32,
    pub max_opts: u32,
    pub max_slots: u32,
}

impl Default for SmallGameLimits {
    fn default() -> Self {
        SmallGameLimits {
            max_users: 4,
            max_opts: 3,
            max_slots: 3,
        }
    }
}

/// Values in cents so that ties and exact shares come up often.
fn cents(d: &mut Draws, max: u64) -> Money {
    Money::new(d.below(max + 1) as i64, 100)
}

/// A small random game of the given shape, determined by `(seed, index)`.
/// Values are multiples of 0.01 in `[0, 1]`; costs are multiples of 0.01
/// in `(0, 0.6 * users]` so that some games build nothing and some build
/// everything.
pub fn small_game(seed: u64, index: u32, shape: GameShape, limits: SmallGameLimits) -> Game {
    let mut g = Draws::new(seed, stream(index, CATALOG_STREAM));
    let users = 1 + g.below(limits.max_users as u64) as u32;
    let opts = 1 + g.below(limits.max_opts as u64) as u32;
    let z = 1 + g.below(limits.max_slots as u64) as u32;
    let cost_cap = 60 * users as u64;
    let catalog =
        Catalog::from_costs((1..=opts).map(|j| (j, Money::new(1 + g.below(cost_cap) as i64, 100))))
            .expect("positive costs");
    let horizon = SlotHorizon::new(z).expect("positive horizon");
    let window = |d: &mut Draws| {
        let a = d.slot(1, z);
        let b = d.slot(1, z);
        (a.min(b), a.max(b))
    };
    let subset = |d: &mut Draws| -> BTreeSet<OptId> {
        let k = 1 + d.below(opts as u64) as u32;
        d.choose(opts, k)
            .into_iter()
            .map(|j| OptId(j + 1))
            .collect()
    };
    match shape {
        GameShape::AdditiveOffline => Game::AdditiveOffline {
            catalog,
            bids: (1..=users)
                .map(|u| {
                    let mut d = Draws::new(seed, stream(index, u as u64));
                    let values = (1..=opts).map(|j| (OptId(j), cents(&mut d, 100))).collect();
                    AdditiveOfflineBid {
                        user: UserId(u),
                        values,
                    }
                })
                .collect(),
        },
        GameShape::AdditiveOnline => Game::AdditiveOnline {
            catalog,
            horizon,
            bids: (1..=users)
                .flat_map(|u| {
                    let mut d = Draws::new(seed, stream(index, u as u64));
                    (1..=opts)
                        .map(|j| {
                            let (s, e) = window(&mut d);
                            let per_slot = (s..=e).map(|_| cents(&mut d, 100)).collect();
                            AdditiveOnlineBid {
                                user: UserId(u),
                                opt: OptId(j),
                                values: SlotValues::new(s, per_slot),
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect(),
        },
        GameShape::SubstitutableOffline => Game::SubstitutableOffline {
            catalog,
            bids: (1..=users)
                .map(|u| {
                    let mut d = Draws::new(seed, stream(index, u as u64));
                    let substitutes = subset(&mut d);
                    SubstitutableOfflineBid {
                        user: UserId(u),
                        substitutes,
                        value: cents(&mut d, 100),
                    }
                })
                .collect(),
        },
        GameShape::SubstitutableOnline => Game::SubstitutableOnline {
            catalog,
            horizon,
            bids: (1..=users)
                .map(|u| {
                    let mut d = Draws::new(seed, stream(index, u as u64));
                    let substitutes = subset(&mut d);
                    let (s, e) = window(&mut d);
                    let per_slot = (s..=e).map(|_| cents(&mut d, 100)).collect();
                    SubstitutableOnlineBid {
                        user: UserId(u),
                        substitutes,
                        values: SlotValues::new(s, per_slot),
                    }
                })
                .collect(),
        },
    }
}

/// A single-optimization offline game whose cost sits strictly inside the
/// declared total, `cost in [0.1, 0.9] * total`, with two to four users
/// holding positive values. The pay-your-bid mechanism always builds here,
/// which leaves its largest bidder room to shade their bid.
pub fn naive_control_game(seed: u64, index: u32) -> Game {
    let mut g = Draws::new(seed, stream(index, CATALOG_STREAM));
    let users = 2 + g.below(3) as u32;
    let bids: Vec<AdditiveOfflineBid> = (1..=users)
        .map(|u| {
            let mut d = Draws::new(seed, stream(index, u as u64));
            AdditiveOfflineBid {
                user: UserId(u),
                values: [(OptId(1), Money::new(1 + d.below(100) as i64, 100))].into(),
            }
        })
        .collect();
    let total: Money = bids.iter().map(|b| b.value(OptId(1))).sum();
    let fraction = Money::new(10 + g.below(81) as i64, 100);
    let catalog = Catalog::from_costs([(1, total * &fraction)]).expect("positive cost");
    Game::AdditiveOffline { catalog, bids }
}
