use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use csv::{Terminator, WriterBuilder};
use serde::{Deserialize, Serialize};

use super::{Aggregate, SweepRow, SweepTable, SweepVariable};
use crate::channel::realize;
use crate::error::{Error, Result};
use crate::follower::IterationRecord;
use crate::leader::{EquilibriumReport, Scheme};
use crate::metrics::bs_utility;
use crate::scenario::ScenarioConfig;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const PLOT_FILE: &str = "plot.py";

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Serde(format!("{}: {other:?}", path.display())),
    }
}

fn header(num_ris: usize) -> Vec<String> {
    let mut h: Vec<String> = ["sweep", "value", "scheme", "seed", "u_bs", "rounds", "converged"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["v", "q", "psi"] {
        h.extend((1..=num_ris).map(|s| format!("{prefix}_{s}")));
    }
    h
}

/// Writes the sweep CSV: one row per (value, scheme, seed) followed, for every
/// (value, scheme), by a row whose seed column reads `mean`. In mean rows
/// `rounds` is the average round count and `converged` and `psi_s` are fractions.
pub fn emit_csv(table: &SweepTable, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let fail = |e| csv_error(path, e);
    w.write_record(header(table.num_ris)).map_err(fail)?;
    let sweep = table.variable.name();
    let mut rows = table.rows.iter().peekable();
    for agg in &table.aggregates {
        while let Some(row) = rows.next_if(|r| r.value == agg.value && r.scheme == agg.scheme) {
            w.write_record(data_record(row)).map_err(fail)?;
        }
        let mut record = vec![
            sweep.to_string(),
            agg.value.to_string(),
            agg.scheme.name().to_string(),
            "mean".to_string(),
            agg.u_bs.mean.to_string(),
            agg.rounds.to_string(),
            agg.converged.to_string(),
        ];
        record.extend(agg.ris_utilities.iter().map(|m| m.mean.to_string()));
        record.extend(agg.prices.iter().map(|m| m.mean.to_string()));
        record.extend(agg.purchased.iter().map(f64::to_string));
        w.write_record(&record).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn data_record(row: &SweepRow) -> Vec<String> {
    let mut record = vec![
        row.variable.name().to_string(),
        row.value.to_string(),
        row.scheme.name().to_string(),
        row.seed.to_string(),
        row.u_bs.to_string(),
        row.rounds.to_string(),
        row.converged.to_string(),
    ];
    record.extend(row.ris_utilities.iter().map(f64::to_string));
    record.extend(row.prices.iter().map(f64::to_string));
    record.extend(row.purchased.iter().map(|&b| (b as u8).to_string()));
    record
}

/// Header plus a single data row, in the sweep CSV schema.
pub fn emit_row(row: &SweepRow, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let fail = |e| csv_error(path, e);
    w.write_record(header(row.ris_utilities.len())).map_err(fail)?;
    w.write_record(data_record(row)).map_err(fail)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-pass follower diagnostics: `iter,surrogate,power_used,max_alpha_gap`.
pub fn emit_trace(records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let fail = |e| csv_error(path, e);
    w.write_record(["iter", "surrogate", "power_used", "max_alpha_gap"])
        .map_err(fail)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.surrogate.to_string(),
            r.power_used.to_string(),
            r.max_alpha_gap.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one row per (value, scheme) with seed means and standard errors.
pub fn emit_summary(table: &SweepTable, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let fail = |e| csv_error(path, e);
    let n = table.num_ris;
    let mut h: Vec<String> = [
        "sweep",
        "value",
        "scheme",
        "seeds",
        "u_bs_mean",
        "u_bs_stderr",
        "rounds_mean",
        "converged_fraction",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["v", "q"] {
        for s in 1..=n {
            h.push(format!("{prefix}_{s}_mean"));
            h.push(format!("{prefix}_{s}_stderr"));
        }
    }
    h.extend((1..=n).map(|s| format!("psi_{s}_fraction")));
    w.write_record(&h).map_err(fail)?;
    for agg in &table.aggregates {
        w.write_record(summary_record(table.variable, agg)).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn summary_record(variable: SweepVariable, agg: &Aggregate) -> Vec<String> {
    let mut r = vec![
        variable.name().to_string(),
        agg.value.to_string(),
        agg.scheme.name().to_string(),
        agg.seeds.to_string(),
        agg.u_bs.mean.to_string(),
        agg.u_bs.stderr.to_string(),
        agg.rounds.to_string(),
        agg.converged.to_string(),
    ];
    for column in [&agg.ris_utilities, &agg.prices] {
        for m in column {
            r.push(m.mean.to_string());
            r.push(m.stderr.to_string());
        }
    }
    r.extend(agg.purchased.iter().map(f64::to_string));
    r
}

/// Final state of one sweep row, enough to re-evaluate its utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub sweep: SweepVariable,
    pub value: f64,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub report: EquilibriumReport,
}

/// Writes one JSON record per sweep row, in CSV order.
pub fn emit_reports(table: &SweepTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in &table.rows {
        let record = ReportRecord {
            sweep: row.variable,
            value: row.value,
            seed: row.seed,
            scenario: row.scenario.to_config(),
            report: row.report.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Python script that plots `summary.csv` from its own directory.
pub fn plot_script(variable: SweepVariable) -> String {
    let xlabel = match variable {
        SweepVariable::Power => "BS power budget (dBm)",
        SweepVariable::Location => "x coordinate of the RIS diamond center (m)",
    };
    format!(
        r#"#!/usr/bin/env python3
# Plots summary.csv next to this script: BS utility, RIS 1 utility and RIS 1 price.
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "{SUMMARY_FILE}"))))
panels = [("u_bs", "BS utility"), ("v_1", "utility of RIS 1"), ("q_1", "price of RIS 1")]
fig, axes = plt.subplots(1, len(panels), figsize=(15, 4))
for scheme in dict.fromkeys(r["scheme"] for r in rows):
    sub = [r for r in rows if r["scheme"] == scheme]
    x = [float(r["value"]) for r in sub]
    for ax, (key, title) in zip(axes, panels):
        y = [float(r[key + "_mean"]) for r in sub]
        e = [float(r[key + "_stderr"]) for r in sub]
        ax.errorbar(x, y, yerr=e, marker="o", capsize=3, label=scheme)
        ax.set_title(title)
        ax.set_xlabel("{xlabel}")
axes[0].legend()
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "{name}.png")
fig.savefig(out, dpi=150)
print(out)
"#,
        name = variable.name()
    )
}

/// Writes the sweep CSV, summary CSV, report records and plot script into `dir`.
pub fn write_outputs(table: &SweepTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = [SWEEP_FILE, SUMMARY_FILE, REPORTS_FILE, PLOT_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    emit_csv(table, &paths[0])?;
    emit_summary(table, &paths[1])?;
    emit_reports(table, &paths[2])?;
    std::fs::write(&paths[3], plot_script(table.variable)).map_err(|e| Error::io(&paths[3], e))?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows: usize,
    pub max_abs_error: f64,
    /// (csv data row index, scheme, seed, csv value, recomputed value)
    pub mismatches: Vec<(usize, Scheme, u64, f64, f64)>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-evaluates the base-station utility of every CSV data row from its
/// serialized final state, regenerating the channels from the stored scenario.
pub fn audit_dir(dir: &Path, tolerance: f64) -> Result<AuditReport> {
    let csv_path = dir.join(SWEEP_FILE);
    let records = read_reports(&dir.join(REPORTS_FILE))?;
    let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(&csv_path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Serde(format!("{}: missing column {name}", csv_path.display())))
    };
    let (seed_col, u_col, scheme_col) = (col("seed")?, col("u_bs")?, col("scheme")?);
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&csv_path, e))?;
        if &record[seed_col] == "mean" {
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| Error::Serde(format!("{}: bad number `{}`", csv_path.display(), &record[i])))
        };
        data.push((record[scheme_col].to_string(), parse(seed_col)? as u64, parse(u_col)?));
    }
    if data.len() != records.len() {
        return Err(Error::validation(
            "audit",
            format!("{} CSV data rows but {} report records", data.len(), records.len()),
        ));
    }
    let mut audit = AuditReport {
        rows: data.len(),
        max_abs_error: 0.0,
        mismatches: Vec::new(),
    };
    for (i, ((scheme, seed, u_csv), record)) in data.into_iter().zip(records).enumerate() {
        let scenario = record.scenario.into_scenario()?;
        let (_, channels) = realize(&scenario);
        let f = &record.report.follower;
        let u = bs_utility(&channels, &f.phase, &f.beamformers, &record.report.prices, &scenario)?;
        let err = (u - u_csv).abs();
        audit.max_abs_error = audit.max_abs_error.max(err);
        let consistent = scheme == record.report.scheme.name() && seed == record.seed && seed == scenario.rng_seed;
        if !consistent || !(err <= tolerance * u_csv.abs().max(1.0)) {
            audit.mismatches.push((i, record.report.scheme, seed, u_csv, u));
        }
    }
    Ok(audit)
}
