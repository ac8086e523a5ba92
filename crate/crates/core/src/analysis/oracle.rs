use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mechanism::Game;
use crate::model::{OptId, Outcome, UserId};
use crate::money::Money;

/// Largest `users x optimizations` product the oracle will enumerate.
pub const MAX_GRANT_PAIRS: usize = 20;

/// Each user's total declared value per optimization, with substitutable
/// users valuing every member of their set at the same amount.
struct Totals {
    substitutable: bool,
    values: BTreeMap<UserId, BTreeMap<OptId, Money>>,
}

fn totals(game: &Game) -> Totals {
    let mut values: BTreeMap<UserId, BTreeMap<OptId, Money>> = BTreeMap::new();
    match game {
        Game::AdditiveOffline { bids, .. } => {
            for b in bids {
                values.entry(b.user).or_default().extend(b.values.clone());
            }
        }
        Game::AdditiveOnline { bids, .. } => {
            for b in bids {
                values
                    .entry(b.user)
                    .or_default()
                    .insert(b.opt, b.values.total());
            }
        }
        Game::SubstitutableOffline { bids, .. } => {
            for b in bids {
                values.insert(
                    b.user,
                    b.substitutes
                        .iter()
                        .map(|j| (*j, b.value.clone()))
                        .collect(),
                );
            }
        }
        Game::SubstitutableOnline { bids, .. } => {
            for b in bids {
                values.insert(
                    b.user,
                    b.substitutes
                        .iter()
                        .map(|j| (*j, b.values.total()))
                        .collect(),
                );
            }
        }
    }
    Totals {
        substitutable: game.is_substitutable(),
        values,
    }
}

/// The alternative maximizing total declared value minus cost, and that
/// maximum. Online games are judged on whole-window totals, since a grant
/// can cover every slot of a user's window at no extra cost.
pub fn efficient_outcome(game: &Game) -> Result<(Outcome, Money)> {
    let catalog = game.catalog();
    let pairs = game.users().len() * catalog.len();
    if pairs > MAX_GRANT_PAIRS {
        return Err(Error::InstanceTooLarge {
            pairs,
            limit: MAX_GRANT_PAIRS,
        });
    }
    let totals = totals(game);
    let opts: Vec<(OptId, Money)> = catalog.iter().map(|(j, c)| (j, c.clone())).collect();
    let mut best = (Outcome::default(), Money::zero());
    // Given the implemented set, granting every user with positive value
    // an implemented optimization they want is optimal.
    for mask in 1u32..(1 << opts.len()) {
        let chosen: Vec<&(OptId, Money)> = opts
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, o)| o)
            .collect();
        let mut outcome = Outcome::default();
        let mut utility = Money::zero();
        for (j, cost) in &chosen {
            outcome.implemented.insert(*j);
            utility -= cost;
        }
        for (user, values) in &totals.values {
            let wanted = chosen
                .iter()
                .filter_map(|(j, _)| values.get(j).filter(|v| v.is_positive()).map(|v| (*j, v)));
            if totals.substitutable {
                if let Some((j, v)) = wanted.max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) {
                    outcome.grant(*user, j);
                    utility += v;
                }
            } else {
                for (j, v) in wanted {
                    outcome.grant(*user, j);
                    utility += v;
                }
            }
        }
        if utility > best.1 {
            best = (outcome, utility);
        }
    }
    Ok(best)
}

/// Every alternative, enumerated literally over grant-pair subsets.
/// Exponential in the pair count; used to cross-check [`efficient_outcome`].
pub fn enumerate_alternatives(game: &Game) -> Result<Vec<(Outcome, Money)>> {
    let catalog = game.catalog();
    let users: Vec<UserId> = game.users().into_iter().collect();
    let pairs: Vec<(UserId, OptId)> = users
        .iter()
        .flat_map(|u| catalog.ids().map(move |j| (*u, j)))
        .collect();
    if pairs.len() > MAX_GRANT_PAIRS {
        return Err(Error::InstanceTooLarge {
            pairs: pairs.len(),
            limit: MAX_GRANT_PAIRS,
        });
    }
    let totals = totals(game);
    let mut out = Vec::new();
    for mask in 0u64..(1 << pairs.len()) {
        let grants: BTreeSet<(UserId, OptId)> = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, p)| *p)
            .collect();
        if totals.substitutable
            && users
                .iter()
                .any(|u| grants.iter().filter(|(i, _)| i == u).count() > 1)
        {
            continue;
        }
        let touched: BTreeSet<OptId> = grants.iter().map(|(_, j)| *j).collect();
        let idle: Vec<OptId> = catalog.ids().filter(|j| !touched.contains(j)).collect();
        for idle_mask in 0u32..(1 << idle.len()) {
            let mut outcome = Outcome {
                implemented: touched.clone(),
                grants: grants.clone(),
            };
            outcome.implemented.extend(
                idle.iter()
                    .enumerate()
                    .filter(|(k, _)| idle_mask >> k & 1 == 1)
                    .map(|(_, j)| *j),
            );
            let value: Money = grants
                .iter()
                .map(|(i, j)| {
                    totals
                        .values
                        .get(i)
                        .and_then(|v| v.get(j))
                        .cloned()
                        .unwrap_or_default()
                })
                .sum();
            let cost: Money = outcome
                .implemented
                .iter()
                .map(|j| catalog.cost(*j).cloned())
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum();
            out.push((outcome, value - cost));
        }
    }
    Ok(out)
}
