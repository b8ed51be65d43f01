//! Component-level localization.
//!
//! Each row is decomposed into per-sensor residuals against its BMU
//! codebook vector; a sensor's cumulative count is the number of rows whose
//! residual is strictly above that sensor's baseline `mean + 3 std`.
//! Sensors are ranked by count.

use std::io::Write;

use crate::matrix::Matrix;
use crate::scalar::{mean_and_pop_std, Scalar};
use crate::som::{SomError, SomGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorAnomalyReport<T> {
    pub sensor_names: Vec<String>,
    pub per_sensor_counts: Vec<usize>,
    pub per_sensor_thresholds: Vec<T>,
    /// Sensor indices by descending count, ties by ascending index.
    pub ranking: Vec<usize>,
}

/// `A[i][j] = |x[i][j] - w_bmu(i)[j]|`.
pub fn sensor_anomaly_scores<T: Scalar>(grid: &SomGrid<T>, rows: &Matrix<T>) -> Result<Matrix<T>, SomError> {
    if rows.cols() != grid.n_features() {
        return Err(SomError::DimensionMismatch {
            expected: grid.n_features(),
            got: rows.cols(),
        });
    }
    let mut out = Matrix::zeros(rows.rows(), rows.cols());
    for (i, x) in rows.iter_rows().enumerate() {
        let (bmu, _) = grid.find_bmu(x)?;
        let w = grid.neuron(bmu);
        for (o, (&xi, &wi)) in out.row_mut(i).iter_mut().zip(x.iter().zip(w)) {
            *o = (xi - wi).abs();
        }
    }
    Ok(out)
}

/// Per-sensor `mean + 3 * population std` of baseline residuals.
pub fn per_sensor_thresholds<T: Scalar>(grid: &SomGrid<T>, baseline: &Matrix<T>) -> Result<Vec<T>, SomError> {
    if baseline.is_empty() {
        return Err(SomError::EmptyBaseline);
    }
    let scores = sensor_anomaly_scores(grid, baseline)?;
    Ok(column_thresholds(&scores))
}

pub(crate) fn column_thresholds<T: Scalar>(scores: &Matrix<T>) -> Vec<T> {
    (0..scores.cols())
        .map(|j| {
            let (m, s) = mean_and_pop_std(&scores.column(j));
            m + T::of(3.0) * s
        })
        .collect()
}

/// Counts strict exceedances per sensor and ranks sensors.
pub fn cumulative_counts<T: Scalar>(
    scores: &Matrix<T>,
    thresholds: &[T],
    sensor_names: &[String],
) -> Result<SensorAnomalyReport<T>, SomError> {
    if thresholds.len() != scores.cols() || sensor_names.len() != scores.cols() {
        return Err(SomError::DimensionMismatch {
            expected: scores.cols(),
            got: thresholds.len(),
        });
    }
    let mut counts = vec![0usize; scores.cols()];
    for r in scores.iter_rows() {
        for ((c, &a), &t) in counts.iter_mut().zip(r).zip(thresholds) {
            if a > t {
                *c += 1;
            }
        }
    }
    let mut ranking: Vec<usize> = (0..counts.len()).collect();
    // stable sort keeps ascending index among equal counts
    ranking.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
    Ok(SensorAnomalyReport {
        sensor_names: sensor_names.to_vec(),
        per_sensor_counts: counts,
        per_sensor_thresholds: thresholds.to_vec(),
        ranking,
    })
}

impl<T: Scalar> SensorAnomalyReport<T> {
    /// Writes `sensor_name,cumulative_count,rank` in ranking order (rank 1 first).
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sensor_name", "cumulative_count", "rank"])?;
        for (rank, &j) in self.ranking.iter().enumerate() {
            w.write_record([
                self.sensor_names[j].clone(),
                self.per_sensor_counts[j].to_string(),
                (rank + 1).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_neuron() -> SomGrid<f64> {
        SomGrid::from_weights(2, 1, Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap()).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("s{j}")).collect()
    }

    #[test]
    fn residual_examples() {
        let g = two_neuron();
        let a = sensor_anomaly_scores(&g, &Matrix::from_rows(&[[1.0, 1.0], [0.9, 0.5]]).unwrap()).unwrap();
        assert_eq!(a.row(0), &[0.0, 0.0]);
        assert!((a.get(1, 0) - 0.1).abs() < 1e-12);
        assert!((a.get(1, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_sensor_matches_quantization_error() {
        let g = SomGrid::from_weights(3, 1, Matrix::from_rows(&[[0.0f64], [0.5], [2.0]]).unwrap()).unwrap();
        let rows = Matrix::from_rows(&[[0.1f64], [1.4], [-3.0], [2.2]]).unwrap();
        let a = sensor_anomaly_scores(&g, &rows).unwrap();
        assert_eq!(a.column(0), g.quantization_errors(&rows).unwrap());
    }

    #[test]
    fn threshold_examples() {
        let g = two_neuron();
        let base = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(per_sensor_thresholds(&g, &base).unwrap(), vec![0.0, 0.0]);

        let single = Matrix::from_rows(&[[0.2, 0.3]]).unwrap();
        let t = per_sensor_thresholds(&g, &single).unwrap();
        assert!((t[0] - 0.2).abs() < 1e-15 && (t[1] - 0.3).abs() < 1e-15);

        let scores = Matrix::from_rows(&[[1.0f64], [2.0], [3.0]]).unwrap();
        assert!((column_thresholds(&scores)[0] - 4.449_489_742_783_178).abs() < 1e-12);
    }

    #[test]
    fn count_examples() {
        let zeros = Matrix::<f64>::zeros(4, 3);
        let r = cumulative_counts(&zeros, &[0.1, 0.1, 0.1], &names(3)).unwrap();
        assert_eq!(r.per_sensor_counts, vec![0, 0, 0]);
        assert_eq!(r.ranking, vec![0, 1, 2]);

        let a = Matrix::from_rows(&[[0.0, 5.0], [0.0, 5.0], [2.0, 0.0]]).unwrap();
        let r = cumulative_counts(&a, &[1.0, 1.0], &names(2)).unwrap();
        assert_eq!(r.per_sensor_counts, vec![1, 2]);
        assert_eq!(r.ranking, vec![1, 0]);

        assert!(cumulative_counts(&a, &[1.0], &names(2)).is_err());
    }

    #[test]
    fn report_csv() {
        let a = Matrix::from_rows(&[[0.0, 5.0]]).unwrap();
        let r = cumulative_counts(&a, &[1.0, 1.0], &names(2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sensor_name,cumulative_count,rank\ns1,1,1\ns0,0,2\n"
        );
    }

    proptest! {
        #[test]
        fn counts_are_bounded_and_equivariant(
            data in proptest::collection::vec(0.0f64..1.0, 12..60),
            thr in proptest::collection::vec(0.0f64..1.0, 3),
            rot in 0usize..3,
        ) {
            let rows = data.len() / 3;
            let a = Matrix::from_vec(rows, 3, data[..rows * 3].to_vec()).unwrap();
            let r = cumulative_counts(&a, &thr, &names(3)).unwrap();
            prop_assert!(r.per_sensor_counts.iter().all(|&c| c <= rows));
            let mut sorted = r.ranking.clone();
            sorted.sort();
            prop_assert_eq!(sorted, vec![0, 1, 2]);
            prop_assert_eq!(r.per_sensor_counts[r.ranking[0]], *r.per_sensor_counts.iter().max().unwrap());

            let perm: Vec<usize> = (0..3).map(|j| (j + rot) % 3).collect();
            let pa = a.select_columns(&perm);
            let pt: Vec<f64> = perm.iter().map(|&j| thr[j]).collect();
            let pr = cumulative_counts(&pa, &pt, &names(3)).unwrap();
            for (k, &j) in perm.iter().enumerate() {
                prop_assert_eq!(pr.per_sensor_counts[k], r.per_sensor_counts[j]);
            }
        }
    }
}
