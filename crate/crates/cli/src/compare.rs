use std::path::{Path, PathBuf};

use clap::Args;
use fedcm::metrics::{mann_whitney_u, Alternative, UTestResult};
use serde::Serialize;

use crate::output::OutputDir;
use crate::{CliError, CliResult, Outcome};

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Sample expected to be greater.
    pub report_a: PathBuf,
    pub report_b: PathBuf,
    /// Numeric column holding one value per seed.
    #[arg(long, default_value = "final_auc")]
    pub column: String,
    /// Keep only rows of file A whose `method` column equals this.
    #[arg(long)]
    pub method_a: Option<String>,
    #[arg(long)]
    pub method_b: Option<String>,
    #[arg(long, value_enum, default_value = "greater")]
    pub alternative: AlternativeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlternativeArg {
    Greater,
    TwoSided,
}

impl From<AlternativeArg> for Alternative {
    fn from(a: AlternativeArg) -> Self {
        match a {
            AlternativeArg::Greater => Alternative::Greater,
            AlternativeArg::TwoSided => Alternative::TwoSided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub column: String,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(flatten)]
    pub test: UTestResult,
    pub significant: bool,
}

/// Values of `column` in a CSV file with a header row, optionally filtered
/// on the `method` column. Empty cells are skipped.
pub fn read_samples(path: &Path, column: &str, method: Option<&str>) -> CliResult<Vec<f64>> {
    let schema = |m: String| CliError::Runtime(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| schema(e.to_string()))?;
    let headers = r.headers().map_err(|e| schema(e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| schema(format!("schema mismatch: no `{column}` column")))?;
    let method_col = match method {
        Some(_) => Some(
            headers
                .iter()
                .position(|h| h == "method")
                .ok_or_else(|| schema("schema mismatch: no `method` column".into()))?,
        ),
        None => None,
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        if let (Some(mc), Some(m)) = (method_col, method) {
            if rec.get(mc) != Some(m) {
                continue;
            }
        }
        let cell = rec.get(col).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| schema(format!("row {}: `{cell}` is not a number", i + 2)))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(schema(format!("no values in column `{column}`")));
    }
    Ok(out)
}

/// Prints U and p and writes `compare.json` when an output directory is
/// given. Succeeds only when `p < 0.05`.
pub fn cmd_compare(args: &CompareArgs, out_dir: Option<&Path>) -> CliResult<Outcome> {
    let a = read_samples(&args.report_a, &args.column, args.method_a.as_deref())?;
    let b = read_samples(&args.report_b, &args.column, args.method_b.as_deref())?;
    if a.len() < 2 || b.len() < 2 {
        eprintln!(
            "warning: {} vs {} samples; the test has almost no power at this size",
            a.len(),
            b.len()
        );
    }
    let test = mann_whitney_u(&a, &b, args.alternative.into()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = CompareReport {
        column: args.column.clone(),
        n_a: a.len(),
        n_b: b.len(),
        test,
        significant: test.p_value < SIGNIFICANCE,
    };
    println!("U = {}  p = {}  (n_a = {}, n_b = {})", test.u_statistic, test.p_value, a.len(), b.len());
    if let Some(dir) = out_dir {
        let mut out = OutputDir::new();
        let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
        json.push('\n');
        out.add_text("compare.json", json);
        out.commit(dir)?;
    }
    Ok(if report.significant {
        Outcome::Success
    } else {
        Outcome::NotSignificant
    })
}
