//! The SOM detection pipeline: prepare data, train on the baseline, score
//! every row and localize the faulty sensors.

use crate::data::TimeSeriesFrame;
use crate::localization::{cumulative_counts, per_sensor_thresholds, sensor_anomaly_scores, SensorAnomalyReport};
use crate::metrics::{auc_roc, ScoredLabels};
use crate::scalar::Scalar;
use crate::scenario::{prepare_data, ScenarioConfig};
use crate::seed;
use crate::som::{compute_threshold, detect, train_som, AnomalyThreshold, Detection, SomConfig, SomGrid};
use crate::Result;

#[derive(Debug, Clone)]
pub struct DetectionRun<T> {
    /// Preprocessed frame, baseline rows first.
    pub frame: TimeSeriesFrame<T>,
    pub baseline_rows: usize,
    pub grid: SomGrid<T>,
    pub threshold: AnomalyThreshold<T>,
    /// One detection per row of `frame`.
    pub detections: Vec<Detection<T>>,
    /// Counts over the rows after the baseline.
    pub localization: SensorAnomalyReport<T>,
}

impl<T: Scalar> DetectionRun<T> {
    /// Share of post-baseline rows flagged anomalous.
    pub fn evaluation_anomaly_rate(&self) -> f64 {
        let eval = &self.detections[self.baseline_rows..];
        if eval.is_empty() {
            return 0.0;
        }
        eval.iter().filter(|d| d.is_anomaly).count() as f64 / eval.len() as f64
    }

    /// AUC-ROC of quantization error against the frame labels. `None` when
    /// the frame is unlabeled or single-class.
    pub fn auc(&self) -> Option<f64> {
        let labels = self.frame.labels()?.to_vec();
        let scores = self.detections.iter().map(|d| d.quantization_error.as_f64()).collect();
        auc_roc(&ScoredLabels::new(scores, labels).ok()?).ok()
    }
}

/// Runs detection for a scenario. The SOM seed is derived from the master
/// seed and `som.seed`.
pub fn run_detection<T: Scalar>(config: &ScenarioConfig) -> Result<DetectionRun<T>> {
    let data = prepare_data::<T>(config)?;
    let som = SomConfig {
        seed: seed::derive(&[config.seed, seed::stream::SOM, config.som.seed]),
        ..config.som.clone()
    };
    let baseline = data.baseline();
    let grid = train_som(baseline.values(), &som)?;
    let threshold = compute_threshold(&grid, baseline.values())?;
    let detections = detect(&grid, &threshold, data.frame.values())?;
    let thresholds = per_sensor_thresholds(&grid, baseline.values())?;
    let evaluation = data.evaluation();
    let scores = sensor_anomaly_scores(&grid, evaluation.values())?;
    let localization = cumulative_counts(&scores, &thresholds, evaluation.sensor_names())?;
    Ok(DetectionRun {
        frame: data.frame,
        baseline_rows: data.baseline_rows,
        grid,
        threshold,
        detections,
        localization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::scenario::DataSource;

    fn scenario(faulty: &[usize], seed: u64) -> ScenarioConfig {
        let mut c = ScenarioConfig {
            seed,
            data: DataSource::Synthetic(SyntheticSpec {
                faulty_sensors: faulty.iter().copied().collect(),
                ..Default::default()
            }),
            ..Default::default()
        };
        c.preprocess.lowpass_window = Some(20);
        c
    }

    #[test]
    fn faulty_sensor_ranks_first() {
        let run: DetectionRun<f64> = run_detection(&scenario(&[4], 1)).unwrap();
        assert_eq!(run.localization.ranking[0], 4);
        assert_eq!(run.detections.len(), 1000);
        assert!(run.auc().unwrap() >= 0.95);
    }

    #[test]
    fn healthy_data_is_rarely_flagged() {
        let run: DetectionRun<f64> = run_detection(&scenario(&[], 2)).unwrap();
        assert!(run.evaluation_anomaly_rate() <= 0.02, "{}", run.evaluation_anomaly_rate());
    }
}
