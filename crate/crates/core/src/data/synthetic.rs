use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesFrame};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed;

/// Gradual-degradation generator specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_sensors: usize,
    pub seed: u64,
    pub fault_onset_fraction: f64,
    pub faulty_sensors: BTreeSet<usize>,
    /// Final-row drift in units of `noise_sigma`.
    pub drift_magnitude: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_rows: 1000,
            n_sensors: 6,
            seed: 0,
            fault_onset_fraction: 0.6,
            faulty_sensors: BTreeSet::from([2]),
            drift_magnitude: 8.0,
            noise_sigma: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n_rows == 0 || self.n_sensors == 0 {
            return bad("n_rows and n_sensors must be positive".into());
        }
        if !(self.fault_onset_fraction > 0.0 && self.fault_onset_fraction < 1.0) {
            return bad(format!(
                "fault_onset_fraction {} not in (0, 1)",
                self.fault_onset_fraction
            ));
        }
        if let Some(&j) = self.faulty_sensors.iter().find(|&&j| j >= self.n_sensors) {
            return bad(format!("faulty sensor {j} out of range"));
        }
        if !(self.drift_magnitude >= 0.0 && self.drift_magnitude.is_finite()) {
            return bad("drift_magnitude must be >= 0".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be > 0".into());
        }
        Ok(())
    }

    pub fn onset_row(&self) -> usize {
        (self.fault_onset_fraction * self.n_rows as f64).floor() as usize
    }

    /// Drift added to a faulty sensor at `row`: zero before onset, then a
    /// linear ramp that reaches `drift_magnitude * noise_sigma` on the last row.
    pub fn drift_at(&self, row: usize) -> f64 {
        let onset = self.onset_row();
        if row < onset {
            return 0.0;
        }
        let full = self.drift_magnitude * self.noise_sigma;
        let span = self.n_rows.saturating_sub(1).saturating_sub(onset);
        if span == 0 {
            full
        } else {
            full * (row - onset) as f64 / span as f64
        }
    }

    /// Per-sensor baseline mean.
    pub fn sensor_means(&self) -> Vec<f64> {
        let mut rng = seed::rng_for(&[self.seed, seed::stream::DATA_MEANS]);
        (0..self.n_sensors).map(|_| rng.random_range(-5.0..5.0)).collect()
    }
}

/// Gaussian sensor noise around per-sensor means, with a linear drift ramp
/// on the faulty sensors after onset. Labels flip to 1 at onset. The output
/// is a pure function of `spec`.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<TimeSeriesFrame<T>, DataError> {
    generate_with_noise(spec, seed::rng_for(&[spec.seed, seed::stream::DATA]))
}

/// Another run of the same machine: identical sensor means, onset and drift
/// ramp as [`generate_synthetic`], with an independent noise stream keyed by
/// `replica`.
pub fn generate_synthetic_replica<T: Scalar>(spec: &SyntheticSpec, replica: u64) -> Result<TimeSeriesFrame<T>, DataError> {
    generate_with_noise(spec, seed::rng_for(&[spec.seed, seed::stream::TEST_DATA, replica]))
}

fn generate_with_noise<T: Scalar>(spec: &SyntheticSpec, mut rng: seed::SimRng) -> Result<TimeSeriesFrame<T>, DataError> {
    spec.validate()?;
    let means = spec.sensor_means();
    let onset = spec.onset_row();
    let mut values = Matrix::zeros(spec.n_rows, spec.n_sensors);
    for i in 0..spec.n_rows {
        let drift = spec.drift_at(i);
        for (j, &mu) in means.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let mut v = mu + spec.noise_sigma * z;
            if spec.faulty_sensors.contains(&j) {
                v += drift;
            }
            values.set(i, j, T::of(v));
        }
    }
    let labels = (0..spec.n_rows).map(|i| u8::from(i >= onset)).collect();
    TimeSeriesFrame::from_matrix(values, Some(labels))
}
