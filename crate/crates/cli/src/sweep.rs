use std::fmt;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use fedcm::fl::{run_experiment, Aggregation, ExperimentSummary};
use fedcm::scenario::ScenarioConfig;
use fedcm::seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{csv_error, OutputDir};
use crate::{CliError, CliResult, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Clients,
    Dropout,
}

impl SweepAxis {
    pub fn default_values(&self) -> Vec<f64> {
        match self {
            Self::Clients => vec![2.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            Self::Dropout => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

/// Aggregation rule plus recovery mode. The `-restart` variants disable
/// checkpointing, so failed clients restart from the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Method {
    pub aggregation: Aggregation,
    pub checkpointing: bool,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, checkpointing) = match s.strip_suffix("-restart") {
            Some(n) => (n, false),
            None => (s, true),
        };
        let aggregation = match name {
            "adaptive" => Aggregation::Adaptive,
            "fedavg" => Aggregation::Fedavg,
            _ => return Err(format!("unknown method `{s}` (adaptive, fedavg, adaptive-restart, fedavg-restart)")),
        };
        Ok(Self {
            aggregation,
            checkpointing,
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.aggregation.label())?;
        if !self.checkpointing {
            f.write_str("-restart")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub over: SweepAxis,
    /// Comma-separated values; defaults to the standard grid of the axis.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "adaptive,fedavg")]
    pub methods: Vec<Method>,
    /// Seeds per (value, method) cell.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub final_accuracy: Option<f64>,
    pub final_auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct CellRecord<'a> {
    method: &'a str,
    sweep_value: f64,
    seed: u64,
    summary: &'a ExperimentSummary,
}

/// Seed of repeat `repeat`. It does not depend on the method or sweep
/// value, so every cell of a repeat sees the same data and fault draws.
pub fn cell_seed(master: u64, repeat: usize) -> u64 {
    seed::derive(&[master, seed::stream::CELL, repeat as u64])
}

fn cell_config(base: &ScenarioConfig, axis: SweepAxis, value: f64, method: Method, seed: u64) -> CliResult<ScenarioConfig> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.aggregation = method.aggregation;
    cfg.checkpoint.enabled = base.checkpoint.enabled && method.checkpointing;
    match axis {
        SweepAxis::Clients => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::Config(format!("client count {value} is not a positive integer")));
            }
            cfg.n_clients = value as usize;
            cfg.degrade.client_ids.retain(|&id| id < cfg.n_clients);
        }
        SweepAxis::Dropout => cfg.dropout_rate = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `sweep.csv` (one row per cell, failed cells carry an error) and
/// `sweep_cells.jsonl` with the summaries of the successful cells.
pub fn cmd_sweep(base: &ScenarioConfig, args: &SweepArgs) -> CliResult<Outcome> {
    if args.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    if args.methods.is_empty() {
        return Err(CliError::Config("--methods is empty".into()));
    }
    let values = if args.values.is_empty() {
        args.over.default_values()
    } else {
        args.values.clone()
    };
    let mut cells = Vec::new();
    for &value in &values {
        for &method in &args.methods {
            for repeat in 0..args.repeats {
                let seed = cell_seed(base.seed, repeat);
                cells.push((value, method, seed, cell_config(base, args.over, value, method, seed)?));
            }
        }
    }
    let results: Vec<Result<ExperimentSummary, String>> = cells
        .par_iter()
        .map(|(_, _, _, cfg)| run_experiment(cfg).map(|r| r.summary).map_err(|e| e.to_string()))
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut records = String::new();
    for ((value, method, seed, _), result) in cells.iter().zip(&results) {
        let label = method.to_string();
        let row = match result {
            Ok(s) => {
                let rec = CellRecord {
                    method: &label,
                    sweep_value: *value,
                    seed: *seed,
                    summary: s,
                };
                records.push_str(&serde_json::to_string(&rec).map_err(|e| CliError::Runtime(e.to_string()))?);
                records.push('\n');
                SweepRow {
                    method: label,
                    sweep_value: *value,
                    seed: *seed,
                    final_accuracy: Some(s.final_accuracy),
                    final_auc: s.final_auc,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("cell {label} @ {value} seed {seed} failed: {e}");
                SweepRow {
                    method: label,
                    sweep_value: *value,
                    seed: *seed,
                    final_accuracy: None,
                    final_auc: None,
                    error: Some(e.clone()),
                }
            }
        };
        rows.push(row);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(csv_error)?;
    }
    let table = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = OutputDir::new();
    out.add("sweep.csv", table);
    out.add_text("sweep_cells.jsonl", records);
    out.commit(&base.output_dir)?;

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} cells, {} failed", rows.len(), failed);
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} sweep cells failed", rows.len())));
    }
    Ok(Outcome::Success)
}
