use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesFrame};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub normalize: bool,
    pub epsilon: f64,
    pub lowpass_window: Option<usize>,
    /// `(short, long)` moving-average windows.
    pub bandpass_windows: Option<(usize, usize)>,
    pub drop_invalid_rows: bool,
    /// Keep only sensors whose permutation importance reaches this value.
    pub min_importance: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            epsilon: DEFAULT_EPSILON,
            lowpass_window: None,
            bandpass_windows: None,
            drop_invalid_rows: false,
            min_importance: None,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(DataError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.lowpass_window == Some(0) {
            return Err(DataError::ZeroWindow);
        }
        if let Some((short, long)) = self.bandpass_windows {
            if short == 0 || short >= long {
                return Err(DataError::InvalidWindowOrder { short, long });
            }
        }
        Ok(())
    }

    /// Applies the configured filters (low-pass, then band-pass).
    pub fn filter<T: Scalar>(&self, frame: &TimeSeriesFrame<T>) -> Result<TimeSeriesFrame<T>, DataError> {
        let mut out = frame.clone();
        if let Some(w) = self.lowpass_window {
            out = low_pass_filter(&out, w)?;
        }
        if let Some((s, l)) = self.bandpass_windows {
            out = band_pass_filter(&out, s, l)?;
        }
        Ok(out)
    }
}

/// Per-sensor min-max transform fitted on one frame and reusable on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler<T> {
    pub ranges: Vec<(T, T)>,
    pub epsilon: T,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn fit(values: &Matrix<T>, epsilon: T) -> Result<Self, DataError> {
        if values.is_empty() {
            return Err(DataError::EmptyFrame);
        }
        Ok(Self {
            ranges: values.column_ranges(),
            epsilon,
        })
    }

    pub fn transform_matrix(&self, values: &Matrix<T>) -> Result<Matrix<T>, DataError> {
        if values.cols() != self.ranges.len() {
            return Err(DataError::Shape(format!(
                "scaler fitted on {} sensors, got {}",
                self.ranges.len(),
                values.cols()
            )));
        }
        let mut out = values.clone();
        for i in 0..out.rows() {
            for (v, &(lo, hi)) in out.row_mut(i).iter_mut().zip(&self.ranges) {
                let span = hi - lo;
                let unit = if span > T::zero() { (*v - lo) / span } else { T::zero() };
                *v = unit + self.epsilon;
            }
        }
        Ok(out)
    }

    pub fn transform(&self, frame: &TimeSeriesFrame<T>) -> Result<TimeSeriesFrame<T>, DataError> {
        Ok(frame.with_values(self.transform_matrix(frame.values())?))
    }
}

/// Maps every sensor to `[0, 1]` and adds `epsilon`. Constant sensors map to
/// `epsilon`. Also returns the fitted `(min, max)` per sensor.
pub fn min_max_normalize<T: Scalar>(
    frame: &TimeSeriesFrame<T>,
    epsilon: T,
) -> Result<(TimeSeriesFrame<T>, Vec<(T, T)>), DataError> {
    let scaler = MinMaxScaler::fit(frame.values(), epsilon)?;
    let out = scaler.transform(frame)?;
    Ok((out, scaler.ranges))
}

fn moving_average<T: Scalar>(values: &Matrix<T>, window: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(values.rows(), values.cols());
    for i in 0..values.rows() {
        let start = (i + 1).saturating_sub(window);
        let n = T::of((i + 1 - start) as f64);
        for j in 0..values.cols() {
            // direct sum keeps each output independent of accumulated rounding
            let mut acc = T::zero();
            for k in start..=i {
                acc += values.get(k, j);
            }
            out.set(i, j, acc / n);
        }
    }
    out
}

/// Trailing moving average over `window` samples; the first `window - 1`
/// rows average the available prefix.
pub fn low_pass_filter<T: Scalar>(
    frame: &TimeSeriesFrame<T>,
    window: usize,
) -> Result<TimeSeriesFrame<T>, DataError> {
    if window == 0 {
        return Err(DataError::ZeroWindow);
    }
    if window > frame.n_rows() {
        return Err(DataError::WindowExceedsLength {
            window,
            rows: frame.n_rows(),
        });
    }
    Ok(frame.with_values(moving_average(frame.values(), window)))
}

/// Difference of two trailing moving averages: `low_pass(short) - low_pass(long)`.
pub fn band_pass_filter<T: Scalar>(
    frame: &TimeSeriesFrame<T>,
    short: usize,
    long: usize,
) -> Result<TimeSeriesFrame<T>, DataError> {
    if short == 0 || short >= long {
        return Err(DataError::InvalidWindowOrder { short, long });
    }
    let fast = low_pass_filter(frame, short)?;
    let slow = low_pass_filter(frame, long)?;
    let mut out = fast.values().clone();
    for (o, &s) in out.as_mut_slice().iter_mut().zip(slow.values().as_slice()) {
        *o -= s;
    }
    Ok(frame.with_values(out))
}

/// Time-ordered split at `floor(fraction * n_rows)`.
pub fn split_baseline<T: Scalar>(
    frame: &TimeSeriesFrame<T>,
    fraction: f64,
) -> Result<(TimeSeriesFrame<T>, TimeSeriesFrame<T>), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    let n = frame.n_rows();
    let cut = (fraction * n as f64).floor() as usize;
    if cut == 0 || cut >= n {
        return Err(DataError::EmptySplit { fraction, rows: n });
    }
    Ok((frame.slice_rows(0..cut), frame.slice_rows(cut..n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> TimeSeriesFrame<f64> {
        let rows: Vec<[f64; 1]> = v.iter().map(|&x| [x]).collect();
        TimeSeriesFrame::from_matrix(Matrix::from_rows(&rows).unwrap(), None).unwrap()
    }

    #[test]
    fn normalize_linear_map() {
        let (f, ranges) = min_max_normalize(&column(&[-2.0, 0.0, 2.0]), 1e-10).unwrap();
        assert_eq!(ranges, vec![(-2.0, 2.0)]);
        assert_eq!(f.values().column(0), vec![1e-10, 0.5 + 1e-10, 1.0 + 1e-10]);
    }

    #[test]
    fn normalize_constant_column() {
        let (f, _) = min_max_normalize(&column(&[5.0, 5.0, 5.0]), DEFAULT_EPSILON).unwrap();
        assert_eq!(f.values().column(0), vec![1e-10; 3]);
    }

    #[test]
    fn normalize_empty_frame() {
        let f = TimeSeriesFrame::<f64>::from_matrix(Matrix::zeros(0, 2), None).unwrap();
        assert!(matches!(min_max_normalize(&f, 1e-10), Err(DataError::EmptyFrame)));
    }

    #[test]
    fn low_pass_examples() {
        let f = low_pass_filter(&column(&[3.0, 3.0, 3.0, 3.0]), 2).unwrap();
        assert_eq!(f.values().column(0), vec![3.0; 4]);
        let f = low_pass_filter(&column(&[0.0, 2.0, 0.0, 2.0]), 2).unwrap();
        assert_eq!(f.values().column(0), vec![0.0, 1.0, 1.0, 1.0]);
        let src = column(&[0.3, -1.2, 7.0]);
        assert_eq!(low_pass_filter(&src, 1).unwrap(), src);
        assert!(matches!(
            low_pass_filter(&src, 4),
            Err(DataError::WindowExceedsLength { window: 4, rows: 3 })
        ));
    }

    #[test]
    fn band_pass_examples() {
        let f = band_pass_filter(&column(&[4.0; 5]), 2, 3).unwrap();
        assert_eq!(f.values().column(0), vec![0.0; 5]);
        let f = band_pass_filter(&column(&[0.0, 2.0, 0.0, 2.0]), 1, 2).unwrap();
        assert_eq!(f.values().column(0), vec![0.0, 1.0, -1.0, 1.0]);
        assert!(matches!(
            band_pass_filter(&column(&[1.0, 2.0]), 1, 1),
            Err(DataError::InvalidWindowOrder { short: 1, long: 1 })
        ));
    }

    #[test]
    fn split_floor_rule() {
        let f = column(&(0..10).map(f64::from).collect::<Vec<_>>());
        let (a, b) = split_baseline(&f, 0.6).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (6, 4));
        let (a, b) = split_baseline(&f, 0.99).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (9, 1));
        let (a, b) = split_baseline(&column(&[1.0, 2.0]), 0.5).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (1, 1));
        assert!(matches!(split_baseline(&f, 0.05), Err(DataError::EmptySplit { .. })));
        assert!(matches!(split_baseline(&f, 1.0), Err(DataError::InvalidFraction(_))));
    }

    #[test]
    fn config_validation() {
        let mut c = PreprocessConfig::default();
        assert!(c.validate().is_ok());
        c.bandpass_windows = Some((3, 3));
        assert!(c.validate().is_err());
        c.bandpass_windows = None;
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
    }
}
