//! Self-organizing map detector.
//!
//! The map is trained on baseline (healthy) rows. Each input is scored by
//! its quantization error, the Euclidean distance to its best matching unit
//! (BMU), and flagged when the error is strictly above
//! `mean + 3 * std` of the baseline errors.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{squared_distance, Matrix};
use crate::scalar::{mean_and_pop_std, Scalar};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum SomError {
    #[error("baseline has no rows")]
    EmptyBaseline,
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("dimension mismatch: map has {expected} features, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid SOM config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SomConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Full passes over the baseline.
    pub iterations: usize,
    pub initial_learning_rate: f64,
    /// Defaults to `max(grid_rows, grid_cols) / 2`.
    pub initial_radius: Option<f64>,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            grid_rows: 50,
            grid_cols: 50,
            iterations: 50,
            initial_learning_rate: 0.5,
            initial_radius: None,
            seed: 0,
        }
    }
}

impl SomConfig {
    pub fn with_grid(rows: usize, cols: usize) -> Self {
        Self {
            grid_rows: rows,
            grid_cols: cols,
            ..Self::default()
        }
    }

    pub fn radius(&self) -> f64 {
        self.initial_radius
            .unwrap_or(self.grid_rows.max(self.grid_cols) as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<(), SomError> {
        let bad = |m: &str| Err(SomError::InvalidConfig(m.to_string()));
        if self.grid_rows == 0 || self.grid_cols == 0 || self.iterations == 0 {
            return bad("grid dimensions and iterations must be positive");
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate <= 1.0) {
            return bad("initial_learning_rate must lie in (0, 1]");
        }
        if !(self.radius() > 0.0 && self.radius().is_finite()) {
            return bad("initial_radius must be positive");
        }
        Ok(())
    }

    /// Learning rate during pass `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        self.initial_learning_rate * (-(t as f64) / self.iterations as f64).exp()
    }

    /// Neighborhood radius during pass `t`.
    pub fn radius_at(&self, t: usize) -> f64 {
        self.radius() * (-(t as f64) / self.iterations as f64).exp()
    }
}

/// Trained codebook, one weight vector per neuron in row-major grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid<T> {
    weights: Vec<T>,
    grid_rows: usize,
    grid_cols: usize,
    n_features: usize,
}

/// `threshold == mean_error + 3 * std_error` with population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyThreshold<T> {
    pub mean_error: T,
    pub std_error: T,
    pub threshold: T,
}

impl<T: Scalar> AnomalyThreshold<T> {
    pub fn from_errors(errors: &[T]) -> Self {
        let (mean_error, std_error) = mean_and_pop_std(errors);
        Self {
            mean_error,
            std_error,
            threshold: mean_error + T::of(3.0) * std_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub bmu: usize,
    pub quantization_error: T,
    pub is_anomaly: bool,
}

impl<T: Scalar> SomGrid<T> {
    /// Wraps an explicit codebook (`weights` rows are neurons).
    pub fn from_weights(grid_rows: usize, grid_cols: usize, weights: Matrix<T>) -> Result<Self, SomError> {
        if weights.rows() != grid_rows * grid_cols || weights.rows() == 0 {
            return Err(SomError::InvalidConfig(format!(
                "{} codebook vectors for a {grid_rows}x{grid_cols} grid",
                weights.rows()
            )));
        }
        if !weights.all_finite() {
            return Err(SomError::NonFiniteInput);
        }
        Ok(Self {
            n_features: weights.cols(),
            weights: weights.into_vec(),
            grid_rows,
            grid_cols,
        })
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_neurons(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    #[inline]
    pub fn neuron(&self, k: usize) -> &[T] {
        &self.weights[k * self.n_features..(k + 1) * self.n_features]
    }

    pub fn codebook(&self) -> Matrix<T> {
        Matrix::from_vec(self.n_neurons(), self.n_features, self.weights.clone())
            .expect("codebook shape is an invariant")
    }

    fn check_dim(&self, got: usize) -> Result<(), SomError> {
        if got != self.n_features {
            return Err(SomError::DimensionMismatch {
                expected: self.n_features,
                got,
            });
        }
        Ok(())
    }

    /// Nearest neuron and the distance to it. Ties go to the lowest index.
    pub fn find_bmu(&self, x: &[T]) -> Result<(usize, T), SomError> {
        self.check_dim(x.len())?;
        let (k, d2) = self.nearest(x);
        Ok((k, d2.sqrt()))
    }

    #[inline]
    fn nearest(&self, x: &[T]) -> (usize, T) {
        let mut best = (0, T::infinity());
        for k in 0..self.n_neurons() {
            let d2 = squared_distance(x, self.neuron(k));
            if d2 < best.1 {
                best = (k, d2);
            }
        }
        best
    }

    /// Quantization error of every row.
    pub fn quantization_errors(&self, rows: &Matrix<T>) -> Result<Vec<T>, SomError> {
        self.check_dim(rows.cols())?;
        Ok(rows.iter_rows().map(|r| self.nearest(r).1.sqrt()).collect())
    }
}

/// Sequential online SOM training with exponentially decaying learning rate
/// and Gaussian neighborhood radius.
pub fn train_som<T: Scalar>(baseline: &Matrix<T>, config: &SomConfig) -> Result<SomGrid<T>, SomError> {
    config.validate()?;
    if baseline.is_empty() || baseline.cols() == 0 {
        return Err(SomError::EmptyBaseline);
    }
    if !baseline.all_finite() {
        return Err(SomError::NonFiniteInput);
    }
    let n_neurons = config.grid_rows * config.grid_cols;
    let dim = baseline.cols();
    let ranges = baseline.column_ranges();
    let mut rng = seed::rng_for(&[config.seed, seed::stream::SOM]);
    let mut weights = Vec::with_capacity(n_neurons * dim);
    for _ in 0..n_neurons {
        for &(lo, hi) in &ranges {
            let u: f64 = rng.random();
            weights.push(lo + (hi - lo) * T::of(u));
        }
    }
    let mut grid = SomGrid {
        weights,
        grid_rows: config.grid_rows,
        grid_cols: config.grid_cols,
        n_features: dim,
    };

    let coords: Vec<(f64, f64)> = (0..n_neurons)
        .map(|k| ((k / config.grid_cols) as f64, (k % config.grid_cols) as f64))
        .collect();
    let mut influence = vec![T::zero(); n_neurons];
    for t in 0..config.iterations {
        let rate = config.learning_rate_at(t);
        let radius = config.radius_at(t);
        let two_r2 = 2.0 * radius * radius;
        for x in baseline.iter_rows() {
            let (bmu, _) = grid.nearest(x);
            let (br, bc) = coords[bmu];
            for (k, &(r, c)) in coords.iter().enumerate() {
                let d2 = (r - br) * (r - br) + (c - bc) * (c - bc);
                influence[k] = T::of(rate * (-d2 / two_r2).exp());
            }
            for (k, &h) in influence.iter().enumerate() {
                let w = &mut grid.weights[k * dim..(k + 1) * dim];
                for (wi, &xi) in w.iter_mut().zip(x) {
                    *wi += h * (xi - *wi);
                }
            }
        }
    }
    Ok(grid)
}

/// Mean and population std of the baseline quantization errors.
pub fn compute_threshold<T: Scalar>(
    grid: &SomGrid<T>,
    baseline: &Matrix<T>,
) -> Result<AnomalyThreshold<T>, SomError> {
    if baseline.is_empty() {
        return Err(SomError::EmptyBaseline);
    }
    let errors = grid.quantization_errors(baseline)?;
    Ok(AnomalyThreshold::from_errors(&errors))
}

/// Flags rows whose quantization error is strictly above the threshold.
pub fn detect<T: Scalar>(
    grid: &SomGrid<T>,
    threshold: &AnomalyThreshold<T>,
    rows: &Matrix<T>,
) -> Result<Vec<Detection<T>>, SomError> {
    grid.check_dim(rows.cols())?;
    Ok(rows
        .iter_rows()
        .map(|r| {
            let (bmu, d2) = grid.nearest(r);
            let e = d2.sqrt();
            Detection {
                bmu,
                quantization_error: e,
                is_anomaly: e > threshold.threshold,
            }
        })
        .collect())
}

/// Writes `row_index,timestamp,quantization_error,is_anomaly`.
pub fn write_detection_csv<T: Scalar, W: Write>(
    out: W,
    timestamps: &[T],
    detections: &[Detection<T>],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row_index", "timestamp", "quantization_error", "is_anomaly"])?;
    for (i, (t, d)) in timestamps.iter().zip(detections).enumerate() {
        w.write_record([
            i.to_string(),
            t.to_string(),
            d.quantization_error.to_string(),
            u8::from(d.is_anomaly).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
