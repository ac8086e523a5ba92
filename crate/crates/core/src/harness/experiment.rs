use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::analysis::score;
use crate::error::Result;
use crate::mechanism::{run, MechanismKind};
use crate::money::{format_scaled, Money};
use crate::scenarios::generate;

use super::config::ExperimentConfig;

pub const CSV_HEADER: [&str; 8] = [
    "mechanism",
    "cost",
    "trials",
    "mean_total_utility",
    "sd_total_utility",
    "mean_cloud_balance",
    "sd_cloud_balance",
    "implemented_rate",
];

/// One mechanism on one generated game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialRecord {
    pub mechanism: MechanismKind,
    pub cost: Money,
    pub trial: u32,
    pub total_utility: Money,
    pub cloud_balance: Money,
    /// Fraction of the catalog that was implemented.
    pub implemented: Money,
}

/// Exact sample statistics of one column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Moments {
    pub mean: Money,
    /// Sample variance with the `n - 1` denominator; zero for one trial.
    pub variance: Money,
}

impl Moments {
    pub fn of<'a>(xs: impl IntoIterator<Item = &'a Money>) -> Moments {
        let xs: Vec<&Money> = xs.into_iter().collect();
        if xs.is_empty() {
            return Moments {
                mean: Money::zero(),
                variance: Money::zero(),
            };
        }
        let n = xs.len();
        let mean = xs.iter().copied().sum::<Money>().div_int(n);
        let variance = if n < 2 {
            Money::zero()
        } else {
            let squares: Money = xs
                .iter()
                .map(|x| {
                    let d = (*x).clone() - &mean;
                    d.clone() * &d
                })
                .sum();
            squares.div_int(n - 1)
        };
        Moments { mean, variance }
    }

    /// Standard deviation with `digits` fractional digits, rounded half to
    /// even from the exact square root.
    pub fn sd_fixed(&self, digits: u32) -> String {
        let scale = BigInt::from(10u32).pow(2 * digits);
        let v = self.variance.to_big() * num_rational::BigRational::from_integer(scale);
        let floor = v.floor().to_integer();
        let r = floor.sqrt();
        // sqrt(v) against r + 1/2, compared as 4v against (2r + 1)^2
        let twice = BigInt::from(2u8) * &r + 1u8;
        let lhs = v * num_rational::BigRational::from_integer(BigInt::from(4u8));
        let rhs = num_rational::BigRational::from_integer(&twice * &twice);
        let rounded = match lhs.cmp(&rhs) {
            std::cmp::Ordering::Less => r,
            std::cmp::Ordering::Greater => r + 1u8,
            std::cmp::Ordering::Equal if (&r % 2u8).is_zero() => r,
            std::cmp::Ordering::Equal => r + 1u8,
        };
        debug_assert!(!rounded.is_negative());
        format_scaled(&rounded, digits)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryRow {
    pub mechanism: MechanismKind,
    pub cost: Money,
    pub trials: usize,
    pub utility: Moments,
    pub balance: Moments,
    pub implemented_rate: Money,
}

impl SummaryRow {
    pub fn record(&self, digits: u32) -> Vec<String> {
        vec![
            self.mechanism.name().to_string(),
            self.cost.to_string(),
            self.trials.to_string(),
            self.utility.mean.to_fixed(digits),
            self.utility.sd_fixed(digits),
            self.balance.mean.to_fixed(digits),
            self.balance.sd_fixed(digits),
            self.implemented_rate.to_fixed(digits),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExperimentResult {
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentResult {
    pub fn row(&self, mechanism: MechanismKind, cost: &Money) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.mechanism == mechanism && &r.cost == cost)
    }

    pub fn summary_csv(&self, digits: u32) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.record(digits))?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    pub fn detail_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "mechanism",
            "cost",
            "trial",
            "total_utility_num",
            "total_utility_den",
            "cloud_balance_num",
            "cloud_balance_den",
            "implemented_num",
            "implemented_den",
        ])?;
        for t in &self.trials {
            w.write_record([
                t.mechanism.name().to_string(),
                t.cost.to_string(),
                t.trial.to_string(),
                t.total_utility.numer().to_string(),
                t.total_utility.denom().to_string(),
                t.cloud_balance.numer().to_string(),
                t.cloud_balance.denom().to_string(),
                t.implemented.numer().to_string(),
                t.implemented.denom().to_string(),
            ])?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

fn run_trial(config: &ExperimentConfig, cost: &Money, trial: u32) -> Result<Vec<TrialRecord>> {
    let game = generate(&config.scenario.with_cost(cost.clone()), trial)?;
    let catalog_size = game.catalog().len();
    config
        .mechanisms
        .iter()
        .map(|kind| {
            let metrics = score(&game, &run(*kind, &game)?)?;
            Ok(TrialRecord {
                mechanism: *kind,
                cost: cost.clone(),
                trial,
                total_utility: metrics.total_utility,
                cloud_balance: metrics.cloud_balance,
                implemented: Money::new(
                    metrics.implemented.len() as i64,
                    catalog_size.max(1) as i64,
                ),
            })
        })
        .collect()
}

/// Runs every cost point and trial of `config`. Trials run in parallel on
/// the current rayon pool; results are aggregated in trial order, so the
/// output never depends on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut result = ExperimentResult::default();
    for cost in config.cost_sweep.points() {
        let per_trial: Vec<Vec<TrialRecord>> = (0..config.scenario.trials)
            .into_par_iter()
            .map(|trial| run_trial(config, &cost, trial))
            .collect::<Result<_>>()?;
        for (k, kind) in config.mechanisms.iter().enumerate() {
            let records: Vec<&TrialRecord> = per_trial.iter().map(|t| &t[k]).collect();
            let n = records.len();
            result.rows.push(SummaryRow {
                mechanism: *kind,
                cost: cost.clone(),
                trials: n,
                utility: Moments::of(records.iter().map(|r| &r.total_utility)),
                balance: Moments::of(records.iter().map(|r| &r.cloud_balance)),
                implemented_rate: records
                    .iter()
                    .map(|r| r.implemented.clone())
                    .sum::<Money>()
                    .div_int(n),
            });
        }
        if config.output.detail {
            result.trials.extend(per_trial.into_iter().flatten());
        }
    }
    Ok(result)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Runs `config` and writes `<name>.csv`, plus `<name>.detail.csv` when the
/// config asks for it, into `out` (or the config's own directory, or the
/// working directory). Nothing is written unless every trial succeeds.
pub fn run_to_dir(config: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let result = run_experiment(config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let summary = result.summary_csv(config.output.digits)?;
    let detail = if config.output.detail {
        Some(result.detail_csv()?)
    } else {
        None
    };
    let mut written = Vec::new();
    let path = dir.join(format!("{}.csv", config.name));
    write_atomic(&path, &summary)?;
    written.push(path);
    if let Some(detail) = detail {
        let path = dir.join(format!("{}.detail.csv", config.name));
        write_atomic(&path, &detail)?;
        written.push(path);
    }
    Ok(written)
}
