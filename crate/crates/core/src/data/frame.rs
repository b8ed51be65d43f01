use std::ops::Range;

use super::DataError;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Timestamped multivariate sensor readings with optional binary labels.
///
/// Construction validates every invariant, so a frame in hand always has
/// matching lengths, finite values and nondecreasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame<T> {
    timestamps: Vec<T>,
    values: Matrix<T>,
    sensor_names: Vec<String>,
    labels: Option<Vec<u8>>,
}

impl<T: Scalar> TimeSeriesFrame<T> {
    pub fn new(
        timestamps: Vec<T>,
        values: Matrix<T>,
        sensor_names: Vec<String>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self, DataError> {
        if timestamps.len() != values.rows() {
            return Err(DataError::Shape(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                values.rows()
            )));
        }
        if sensor_names.len() != values.cols() {
            return Err(DataError::Shape(format!(
                "{} sensor names for {} columns",
                sensor_names.len(),
                values.cols()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.rows() {
                return Err(DataError::Shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    values.rows()
                )));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(DataError::Shape("labels must be 0 or 1".into()));
            }
        }
        if let Some(i) = (0..values.rows()).find(|&i| values.row(i).iter().any(|v| !v.is_finite())) {
            return Err(DataError::Shape(format!("non-finite value in row {i}")));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(DataError::Shape("non-finite timestamp".into()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(DataError::NonMonotonicTime(i + 1));
        }
        Ok(Self {
            timestamps,
            values,
            sensor_names,
            labels,
        })
    }

    /// Frame whose timestamps are the row indices and sensors are named
    /// `sensor_0`, `sensor_1`, ...
    pub fn from_matrix(values: Matrix<T>, labels: Option<Vec<u8>>) -> Result<Self, DataError> {
        let timestamps = (0..values.rows()).map(|i| T::of(i as f64)).collect();
        let names = (0..values.cols()).map(|j| format!("sensor_{j}")).collect();
        Self::new(timestamps, values, names, labels)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn n_sensors(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn timestamps(&self) -> &[T] {
        &self.timestamps
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.sensor_names
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn into_parts(self) -> (Vec<T>, Matrix<T>, Vec<String>, Option<Vec<u8>>) {
        (self.timestamps, self.values, self.sensor_names, self.labels)
    }

    /// Same metadata, new values. The caller keeps values finite.
    pub(crate) fn with_values(&self, values: Matrix<T>) -> Self {
        debug_assert_eq!(values.rows(), self.n_rows());
        debug_assert_eq!(values.cols(), self.n_sensors());
        Self {
            timestamps: self.timestamps.clone(),
            values,
            sensor_names: self.sensor_names.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self, DataError> {
        if labels.len() != self.n_rows() || labels.iter().any(|&l| l > 1) {
            return Err(DataError::Shape("label vector does not match frame".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values.slice_rows(range.start, range.end),
            sensor_names: self.sensor_names.clone(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    /// Rows in the given order. Timestamps must stay nondecreasing, so
    /// `idx` should be ascending.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        debug_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        Self {
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            values: self.values.select_rows(idx),
            sensor_names: self.sensor_names.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            values: self.values.select_columns(idx),
            sensor_names: idx.iter().map(|&j| self.sensor_names[j].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Appends `other` below `self`. Both must share sensor layout and
    /// label presence, and time must not run backwards at the seam.
    pub fn concat(&self, other: &Self) -> Result<Self, DataError> {
        if self.sensor_names != other.sensor_names {
            return Err(DataError::Shape("sensor layouts differ".into()));
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(DataError::Shape("label presence differs".into())),
        };
        let mut values = self.values.clone();
        values.append_rows(&other.values);
        let timestamps = self.timestamps.iter().chain(&other.timestamps).copied().collect();
        Self::new(timestamps, values, self.sensor_names.clone(), labels)
    }
}
