use thiserror::Error;

use crate::model::{OptId, RevisionViolation, Slot, UserId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse money amount {0:?}")]
    MoneyParse(String),

    #[error("optimization {0} must have a positive cost")]
    NonPositiveCost(OptId),

    #[error("{0}")]
    Domain(String),

    #[error("optimization {0} is not in the catalog")]
    UnknownOptimization(OptId),

    #[error("optimization {0} appears twice in the catalog")]
    DuplicateOptimization(OptId),

    #[error("user {0} has more than one bid where one is expected")]
    DuplicateUser(UserId),

    #[error("slot horizon must contain at least one slot")]
    EmptyHorizon,

    #[error("bid of user {user} covers slots {start}..={end}, outside 1..={horizon}")]
    SlotOutOfHorizon {
        user: UserId,
        start: Slot,
        end: Slot,
        horizon: Slot,
    },

    #[error("invalid bid from user {user}: {reason}")]
    InvalidBid { user: UserId, reason: String },

    #[error("bid revision rejected for user {user}: {violation}")]
    Revision {
        user: UserId,
        violation: RevisionViolation,
    },

    #[error("slot {got} must come after slot {last}")]
    Sequencing { last: Slot, got: Slot },

    #[error("instance has {pairs} grant pairs, enumeration is limited to {limit}")]
    InstanceTooLarge { pairs: usize, limit: usize },

    #[error("mechanism {mechanism} cannot run on a {game} game")]
    IncompatibleMechanism { mechanism: String, game: String },

    #[error("unknown mechanism {0:?}")]
    UnknownMechanism(String),

    #[error("unknown verification suite {0:?}")]
    UnknownSuite(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid config at {path}: {message}")]
    Config { path: String, message: String },

    #[error("schedule references user {0} who has no bid in the game")]
    UnknownUser(UserId),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
