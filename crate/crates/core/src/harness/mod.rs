//! Parameter sweeps over the power budget and the RIS location.

mod output;
pub mod trends;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::realize;
use crate::error::{Error, Result};
use crate::leader::{response_table, solve_scheme, EquilibriumReport, Scheme};
use crate::scenario::{Point, Scenario};

pub use output::{
    audit_dir, emit_csv, emit_reports, emit_row, emit_summary, emit_trace, plot_script, read_reports, write_outputs,
    AuditReport, ReportRecord, PLOT_FILE, REPORTS_FILE, SUMMARY_FILE, SWEEP_FILE,
};

pub const POWER_RANGE_DBM: (f64, f64) = (-20.0, 30.0);
pub const CENTER_X_RANGE: (f64, f64) = (12.5, 200.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Base-station power budget in dBm.
    Power,
    /// x coordinate of the diamond's intersection in metres.
    Location,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Power => "power",
            SweepVariable::Location => "location",
        }
    }

    /// Values used when none are given.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepVariable::Power => (0..7).map(|i| -10.0 + 5.0 * i as f64).collect(),
            SweepVariable::Location => (0..8).map(|i| 12.5 + 187.5 * i as f64 / 7.0).collect(),
        }
    }

    /// Applies one sweep value to the base scenario.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        let scenario = match self {
            SweepVariable::Power => base.clone().with_power_dbm(value),
            SweepVariable::Location => base.clone().with_diamond_center(Point::new(value, 0.0))?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn range(self) -> (f64, f64) {
        match self {
            SweepVariable::Power => POWER_RANGE_DBM,
            SweepVariable::Location => CENTER_X_RANGE,
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" | "power_budget_dbm" => Ok(SweepVariable::Power),
            "location" | "diamond_center_x" => Ok(SweepVariable::Location),
            other => Err(Error::parse(
                "sweep",
                format!("unknown sweep `{other}`, expected power or location"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Channel realizations averaged at every point.
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// Default values, all four schemes, seeds `0..seeds`.
    pub fn new(variable: SweepVariable, seeds: u64) -> Self {
        SweepSpec {
            variable,
            values: variable.default_values(),
            schemes: Scheme::ALL.to_vec(),
            seeds: (0..seeds).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::validation("values", "sweep needs at least one value"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "sweep needs at least one seed"));
        }
        if self.schemes.is_empty() {
            return Err(Error::validation("scheme", "sweep needs at least one scheme"));
        }
        let (lo, hi) = self.variable.range();
        if let Some(v) = self.values.iter().find(|v| !(**v >= lo && **v <= hi)) {
            return Err(Error::validation(
                self.variable.name(),
                format!("value {v} outside [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }
}

/// Parses `a..b` (inclusive), `a..=b` or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |why: String| Error::parse("seeds", why);
    let number = |s: &str| s.trim().parse::<u64>().map_err(|e| bad(format!("`{s}`: {e}")));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (number(a)?, number(b.trim_start_matches('='))?);
        if b < a {
            return Err(bad(format!("empty range {text}")));
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(number).collect()
}

/// Parses a comma-separated list of floats.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse("values", format!("`{s}`: {e}")))
        })
        .collect()
}

/// Outcome of one scheme at one sweep point and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub u_bs: f64,
    pub rounds: usize,
    /// Outer loop and the final follower solve both converged.
    pub converged: bool,
    pub ris_utilities: Vec<f64>,
    pub prices: Vec<f64>,
    pub purchased: Vec<bool>,
    pub scenario: Scenario,
    pub report: EquilibriumReport,
}

impl SweepRow {
    pub fn new(variable: SweepVariable, value: f64, seed: u64, scenario: Scenario, report: EquilibriumReport) -> Self {
        SweepRow {
            variable,
            value,
            scheme: report.scheme,
            seed,
            u_bs: report.bs_utility,
            rounds: report.rounds,
            converged: report.converged && report.follower.converged,
            ris_utilities: report.ris_utilities.clone(),
            prices: report.prices.as_slice().to_vec(),
            purchased: report.follower.phase.purchased.clone(),
            scenario,
            report,
        }
    }
}

/// Seed average for one (value, scheme) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub scheme: Scheme,
    pub seeds: usize,
    pub u_bs: MeanStderr,
    pub rounds: f64,
    pub converged: f64,
    pub ris_utilities: Vec<MeanStderr>,
    pub prices: Vec<MeanStderr>,
    /// Fraction of seeds in which each RIS was bought.
    pub purchased: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let stderr = if samples.len() < 2 {
            0.0
        } else {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        MeanStderr { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub num_ris: usize,
    /// Ordered by value, then scheme, then seed, as in the spec.
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepTable {
    pub fn empty(variable: SweepVariable, num_ris: usize) -> Self {
        SweepTable {
            variable,
            num_ris,
            rows: Vec::new(),
            aggregates: Vec::new(),
        }
    }

    /// Seed-averaged curve of `field` for one scheme, in value order.
    pub fn mean_curve(&self, scheme: Scheme, field: impl Fn(&Aggregate) -> f64) -> Vec<f64> {
        self.aggregates
            .iter()
            .filter(|a| a.scheme == scheme)
            .map(field)
            .collect()
    }

    pub fn values(&self) -> Vec<f64> {
        let mut values: Vec<f64> = Vec::new();
        for a in &self.aggregates {
            if !values.contains(&a.value) {
                values.push(a.value);
            }
        }
        values
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

fn aggregate(rows: &[&SweepRow]) -> Aggregate {
    let s = rows[0].ris_utilities.len();
    let column = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Aggregate {
        value: rows[0].value,
        scheme: rows[0].scheme,
        seeds: rows.len(),
        u_bs: MeanStderr::of(&column(&|r| r.u_bs)),
        rounds: mean(column(&|r| r.rounds as f64)),
        converged: mean(column(&|r| r.converged as u8 as f64)),
        ris_utilities: (0..s)
            .map(|i| MeanStderr::of(&column(&|r| r.ris_utilities[i])))
            .collect(),
        prices: (0..s).map(|i| MeanStderr::of(&column(&|r| r.prices[i]))).collect(),
        purchased: (0..s).map(|i| mean(column(&|r| r.purchased[i] as u8 as f64))).collect(),
    }
}

/// Runs every scheme at every (value, seed) point. Points are solved in
/// parallel; each builds one follower table shared by all schemes.
pub fn run_sweep(spec: &SweepSpec, base: &Scenario) -> Result<SweepTable> {
    spec.validate()?;
    let mut scenarios = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let scenario = spec.variable.apply(base, value).map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field,
                message: format!("at {} = {value}: {message}", spec.variable),
            },
            other => other,
        })?;
        scenarios.push(scenario);
    }
    let points: Vec<(usize, u64)> = (0..spec.values.len())
        .flat_map(|v| spec.seeds.iter().map(move |&seed| (v, seed)))
        .collect();
    let solved: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|&(v, seed)| {
            let mut scenario = scenarios[v].clone();
            scenario.rng_seed = seed;
            let (_, channels) = realize(&scenario);
            let table = response_table(&channels, &scenario)?;
            spec.schemes
                .iter()
                .map(|&scheme| {
                    let report = solve_scheme(&table, scheme)?;
                    Ok(SweepRow::new(
                        spec.variable,
                        spec.values[v],
                        seed,
                        scenario.clone(),
                        report,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(points.len() * spec.schemes.len());
    let mut aggregates = Vec::new();
    for (v, &value) in spec.values.iter().enumerate() {
        for (j, &scheme) in spec.schemes.iter().enumerate() {
            let group: Vec<&SweepRow> = (0..spec.seeds.len())
                .map(|i| &solved[v * spec.seeds.len() + i][j])
                .collect();
            rows.extend(group.iter().map(|r| (*r).clone()));
            let mut agg = aggregate(&group);
            agg.value = value;
            agg.scheme = scheme;
            aggregates.push(agg);
        }
    }
    Ok(SweepTable {
        variable: spec.variable,
        num_ris: base.num_ris(),
        rows,
        aggregates,
    })
}
