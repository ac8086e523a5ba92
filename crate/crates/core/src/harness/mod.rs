//! Experiment sweeps, verification suites and single-game replay, as used
//! by the `cloudshare` binary.

pub mod config;
pub mod experiment;
pub mod golden;
pub mod verify;

use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::score;
use crate::error::{Error, Result};
use crate::mechanism::{run, Game, MechanismKind};

pub use config::{CostSweep, ExperimentConfig, OutputSpec, SCHEMA_VERSION};
pub use experiment::{
    run_experiment, run_to_dir, ExperimentResult, Moments, SummaryRow, TrialRecord, CSV_HEADER,
};
pub use verify::{verify, Suite, SuiteReport, VerifyOptions, Violation};

pub fn load_game(path: &Path) -> Result<Game> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: ".".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let game: Game = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })?;
    game.validate()?;
    Ok(game)
}

/// Runs one mechanism on one game and renders who was built, who pays
/// what, and the resulting utility and balance.
pub fn replay(game: &Game, kind: MechanismKind) -> Result<String> {
    let settlement = run(kind, game)?;
    let metrics = score(game, &settlement)?;
    let mut out = String::new();
    let implemented: Vec<String> = settlement
        .implemented
        .iter()
        .map(|j| j.to_string())
        .collect();
    writeln!(out, "mechanism {kind}").unwrap();
    writeln!(out, "implemented [{}]", implemented.join(", ")).unwrap();
    let payments = settlement.payments.per_user();
    for user in game.users() {
        let paid = payments.get(&user).cloned().unwrap_or_default();
        writeln!(
            out,
            "user {user} pays {paid} utility {}",
            metrics.per_user_utility[&user]
        )
        .unwrap();
    }
    writeln!(out, "total_utility {}", metrics.total_utility).unwrap();
    writeln!(out, "cloud_balance {}", metrics.cloud_balance).unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_prints_payments() {
        let text = replay(&golden::staggered_arrivals(), MechanismKind::AddOn).unwrap();
        let pays: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with("user"))
            .map(|l| l.split(' ').nth(3).unwrap())
            .collect();
        assert_eq!(pays, ["100", "25", "25", "25"]);
        assert!(text.contains("cloud_balance 75"));
    }

    #[test]
    fn loads_games_with_decimal_strings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        std::fs::write(
            &path,
            serde_json::to_string(&golden::steerable_substitutes()).unwrap(),
        )
        .unwrap();
        assert_eq!(load_game(&path).unwrap(), golden::steerable_substitutes());
        std::fs::write(
            &path,
            r#"{"kind": "additive_offline", "catalog": [], "bids": 3}"#,
        )
        .unwrap();
        assert!(matches!(load_game(&path), Err(Error::Config { .. })));
    }
}
