use std::fmt::Write as _;

use fedcm::pipeline::run_detection;
use fedcm::scenario::ScenarioConfig;
use fedcm::som::write_detection_csv;

use crate::output::{csv_bytes, OutputDir};
use crate::{CliError, CliResult, Outcome};

/// Writes `detection_trace.csv`, `sensor_ranking.csv` and `detect_summary.txt`.
pub fn cmd_detect(cfg: &ScenarioConfig) -> CliResult<Outcome> {
    if !cfg.detector.runs_som() {
        return Err(CliError::Config("detector is `mlp-federated`; detect needs `som` or `both`".into()));
    }
    let run = run_detection::<f64>(cfg)?;
    let mut out = OutputDir::new();
    out.add(
        "detection_trace.csv",
        csv_bytes(|b| write_detection_csv(b, run.frame.timestamps(), &run.detections))?,
    );
    out.add("sensor_ranking.csv", csv_bytes(|b| run.localization.write_csv(b))?);

    let loc = &run.localization;
    let mut s = String::new();
    writeln!(s, "rows: {}", run.frame.n_rows()).unwrap();
    writeln!(s, "baseline_rows: {}", run.baseline_rows).unwrap();
    writeln!(s, "threshold: {}", run.threshold.threshold).unwrap();
    writeln!(s, "evaluation_anomaly_rate: {}", run.evaluation_anomaly_rate()).unwrap();
    match run.auc() {
        Some(a) => writeln!(s, "auc_roc: {a}").unwrap(),
        None => writeln!(s, "auc_roc: n/a").unwrap(),
    }
    if let Some(&top) = loc.ranking.first() {
        writeln!(s, "top_sensor: {} ({} exceedances)", loc.sensor_names[top], loc.per_sensor_counts[top]).unwrap();
    }
    print!("{s}");
    out.add_text("detect_summary.txt", s);
    out.commit(&cfg.output_dir)?;
    Ok(Outcome::Success)
}
