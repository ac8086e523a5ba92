pub mod analysis;
pub mod error;
pub mod harness;
pub mod mechanism;
pub mod model;
pub mod money;
pub mod online;
pub mod regret;
pub mod scenarios;
pub mod shapley;
pub mod substitutable;
