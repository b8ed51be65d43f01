use std::fmt::Write as _;

use fedcm::fault::CheckpointStore;
use fedcm::fl::{run_prepared, ExperimentResult, ExperimentSummary, Federation};
use fedcm::scenario::{ScenarioConfig, StoreKind};

use crate::output::{csv_bytes, OutputDir};
use crate::{CliError, CliResult, Outcome};

fn json_error(e: serde_json::Error) -> CliError {
    CliError::Runtime(format!("json: {e}"))
}

/// Deterministic plain-text rendering of a summary.
pub(crate) fn summary_text(s: &ExperimentSummary) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
    let mut t = String::new();
    writeln!(t, "aggregation: {}", s.aggregation.label()).unwrap();
    writeln!(t, "clients: {}", s.n_clients).unwrap();
    writeln!(t, "rounds: {}", s.n_rounds).unwrap();
    writeln!(t, "final_accuracy: {}", s.final_accuracy).unwrap();
    writeln!(t, "final_auc: {}", opt(s.final_auc)).unwrap();
    writeln!(t, "recoveries: {}", s.recovery_count).unwrap();
    writeln!(t, "drops: {}", s.drop_count).unwrap();
    writeln!(t, "lost_epochs: {}", s.lost_epochs).unwrap();
    writeln!(t, "empty_rounds: {}", s.empty_rounds).unwrap();
    writeln!(t, "simulated_time: {}", s.simulated_time).unwrap();
    writeln!(t, "checkpoint_interval: {}", opt(s.checkpoint_interval)).unwrap();
    t
}

/// Writes `rounds.jsonl`, `summary.json`, `summary.txt`, `fault_plan.csv` and
/// `timing.txt`. Only the last one varies between identical runs.
pub fn cmd_federate(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    if !cfg.detector.runs_federated() {
        return Err(CliError::Config("detector is `som`; federate needs `mlp-federated` or `both`".into()));
    }
    let mut fed = Federation::<f64>::from_scenario(cfg)?;
    let store = match cfg.checkpoint.store {
        StoreKind::Memory => CheckpointStore::in_memory(),
        StoreKind::Directory => CheckpointStore::open(cfg.output_dir.join("checkpoints")).map_err(fedcm::Error::from)?,
    };
    let result: ExperimentResult<f64> = run_prepared(&mut fed, &store)?;

    let mut out = OutputDir::new();
    let mut lines = String::new();
    for r in &result.reports {
        lines.push_str(&serde_json::to_string(r).map_err(json_error)?);
        lines.push('\n');
    }
    out.add_text("rounds.jsonl", lines);
    let mut json = serde_json::to_string_pretty(&result.summary).map_err(json_error)?;
    json.push('\n');
    out.add_text("summary.json", json);
    let text = summary_text(&result.summary);
    out.add_text("summary.txt", text.clone());
    out.add("fault_plan.csv", csv_bytes(|b| fed.plan.write_csv(b))?);

    let mut timing = format!("wall_time_s: {:.6}\n", result.wall_time.as_secs_f64());
    for r in &result.reports {
        writeln!(timing, "round {}: {:.6}", r.round, r.wall_time.as_secs_f64()).unwrap();
    }
    out.add_text("timing.txt", timing);

    print!("{text}");
    println!("wall_time_s: {:.3}", result.wall_time.as_secs_f64());
    out.commit(&cfg.output_dir)?;
    Ok(Outcome::Success)
}
