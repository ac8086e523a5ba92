use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::MechanismKind;
use crate::money::Money;
use crate::scenarios::ScenarioSpec;

pub const SCHEMA_VERSION: u32 = 1;

fn default_digits() -> u32 {
    9
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for result files; the command line can override it.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Fractional digits in the summary CSV.
    #[serde(default = "default_digits")]
    pub digits: u32,
    /// Also write one row per trial with exact numerators and denominators.
    #[serde(default)]
    pub detail: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            digits: default_digits(),
            detail: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSweep {
    List(Vec<Money>),
    Range {
        start: Money,
        end: Money,
        step: Money,
    },
}

impl CostSweep {
    pub fn points(&self) -> Vec<Money> {
        match self {
            CostSweep::List(list) => list.clone(),
            CostSweep::Range { start, end, step } => {
                let mut out = Vec::new();
                let mut c = start.clone();
                while &c <= end {
                    out.push(c.clone());
                    c += step;
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Stem of the result file names.
    pub name: String,
    pub scenario: ScenarioSpec,
    pub mechanisms: Vec<MechanismKind>,
    pub cost_sweep: CostSweep,
    #[serde(default)]
    pub output: OutputSpec,
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(invalid("name", "must be a plain, non-empty file stem"));
        }
        self.scenario.validate().map_err(|e| match e {
            Error::InvalidScenario(msg) => invalid("scenario", msg),
            other => other,
        })?;
        if self.mechanisms.is_empty() {
            return Err(invalid("mechanisms", "list at least one mechanism"));
        }
        let substitutable = self.scenario.family.is_substitutable();
        for (k, mech) in self.mechanisms.iter().enumerate() {
            let ok = match mech {
                MechanismKind::AddOff | MechanismKind::AddOn | MechanismKind::Naive => {
                    !substitutable
                }
                MechanismKind::SubstOff | MechanismKind::SubstOn => substitutable,
                MechanismKind::Regret => true,
            };
            if !ok {
                let family =
                    serde_json::to_string(&self.scenario.family).expect("family serializes");
                return Err(invalid(
                    &format!("mechanisms[{k}]"),
                    format!("{mech} cannot run on the {family} family"),
                ));
            }
        }
        match &self.cost_sweep {
            CostSweep::List(list) => {
                if list.is_empty() {
                    return Err(invalid("cost_sweep", "list at least one cost"));
                }
                if let Some(k) = list.iter().position(|c| !c.is_positive()) {
                    return Err(invalid(
                        &format!("cost_sweep[{k}]"),
                        "costs must be positive",
                    ));
                }
            }
            CostSweep::Range { start, end, step } => {
                if !start.is_positive() {
                    return Err(invalid("cost_sweep.start", "costs must be positive"));
                }
                if !step.is_positive() {
                    return Err(invalid("cost_sweep.step", "step must be positive"));
                }
                if end < start {
                    return Err(invalid("cost_sweep.end", "end must not precede start"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "schema_version": 1,
        "name": "collab6",
        "scenario": {"family": "collab_size", "users": 6, "slots": 12, "cost": "0.1", "seed": 1, "trials": 10},
        "mechanisms": ["add_on", "regret"],
        "cost_sweep": {"start": "0.5", "end": "1", "step": "0.25"}
    }"#;

    #[test]
    fn parses_and_expands_a_range() {
        let config = ExperimentConfig::from_json(GOOD).unwrap();
        let points: Vec<String> = config
            .cost_sweep
            .points()
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(points, ["0.5", "0.75", "1"]);
        assert_eq!(config.output, OutputSpec::default());
        assert_eq!(
            ExperimentConfig::from_json(&config.to_json()).unwrap(),
            config
        );
    }

    fn error_path(text: &str) -> String {
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_field_paths() {
        assert_eq!(
            error_path(&GOOD.replace("\"trials\": 10", "\"trials\": 0")),
            "scenario"
        );
        assert_eq!(
            error_path(&GOOD.replace("\"users\": 6", "\"users\": \"six\"")),
            "scenario.users"
        );
        assert_eq!(
            error_path(&GOOD.replace("\"regret\"", "\"subst_on\"")),
            "mechanisms[1]"
        );
        assert_eq!(
            error_path(&GOOD.replace("\"schema_version\": 1", "\"schema_version\": 2")),
            "schema_version"
        );
        assert_eq!(
            error_path(&GOOD.replace("\"step\": \"0.25\"", "\"step\": \"0\"")),
            "cost_sweep.step"
        );
        assert_eq!(
            error_path(&GOOD.replace("\"name\": \"collab6\"", "\"name\": \"../x\"")),
            "name"
        );
    }
}
