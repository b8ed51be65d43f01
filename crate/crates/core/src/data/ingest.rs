use std::path::Path;

use super::{DataError, TimeSeriesFrame};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const TIME_COLUMN_NAMES: [&str; 3] = ["t", "timestamp", "time"];

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Header name of a 0/1 label column.
    pub label_column: Option<String>,
    /// Skip rows with unparsable or non-finite cells instead of failing.
    pub drop_invalid_rows: bool,
}

/// Reads a comma-separated sensor file.
///
/// With a header whose first column is `t`, `timestamp` or `time`, that
/// column becomes the timestamps; otherwise the row index is used.
pub fn ingest_csv<T: Scalar>(
    path: impl AsRef<Path>,
    options: &CsvOptions,
) -> Result<TimeSeriesFrame<T>, DataError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DataError::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, options)
}

pub(crate) fn parse_csv<T: Scalar>(
    text: &str,
    options: &CsvOptions,
) -> Result<TimeSeriesFrame<T>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header: Option<Vec<String>> = if options.has_header {
        match records.next() {
            None => return Err(DataError::EmptyFile),
            Some(r) => {
                let r = r.map_err(|e| malformed(&e, 1))?;
                Some(r.iter().map(str::to_string).collect())
            }
        }
    } else {
        None
    };

    if header.is_none() && options.label_column.is_some() {
        return Err(DataError::UnknownLabelColumn(
            options.label_column.clone().unwrap_or_default(),
        ));
    }

    let has_time = header.as_ref().is_some_and(|h| {
        h.first()
            .is_some_and(|c| TIME_COLUMN_NAMES.contains(&c.to_ascii_lowercase().as_str()))
    });
    let label_idx = match (&options.label_column, &header) {
        (Some(name), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| DataError::UnknownLabelColumn(name.clone()))?,
        ),
        _ => None,
    };

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut times = Vec::new();
    let mut values: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut n_cols = None;
    let mut saw_record = false;

    for rec in records {
        let rec = rec.map_err(|e| malformed(&e, 0))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        saw_record = true;
        let w = *width.get_or_insert(rec.len());
        match parse_record::<T>(&rec, w, has_time, label_idx) {
            Ok((t, row, label)) => {
                n_cols.get_or_insert(row.len());
                times.push(t.unwrap_or_else(|| T::of(times.len() as f64)));
                values.extend(row);
                if let Some(l) = label {
                    labels.push(l);
                }
            }
            Err(reason) if options.drop_invalid_rows => {
                log::warn!("dropping row at line {line}: {reason}");
            }
            Err(reason) => return Err(DataError::MalformedRow { line, reason }),
        }
    }

    if !saw_record {
        return Err(DataError::EmptyFile);
    }
    if times.is_empty() {
        return Err(DataError::EmptyFrame);
    }
    if !has_time {
        // row index substitutes for time; renumber after drops
        for (i, t) in times.iter_mut().enumerate() {
            *t = T::of(i as f64);
        }
    }

    let cols = n_cols.unwrap_or(0);
    let names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|&(i, _)| !(has_time && i == 0) && Some(i) != label_idx)
            .map(|(_, n)| n.clone())
            .collect(),
        None => (0..cols).map(|j| format!("sensor_{j}")).collect(),
    };
    let rows = times.len();
    let matrix = Matrix::from_vec(rows, cols, values)
        .ok_or_else(|| DataError::Shape("ragged rows".into()))?;
    TimeSeriesFrame::new(times, matrix, names, label_idx.map(|_| labels))
}

type ParsedRow<T> = (Option<T>, Vec<T>, Option<u8>);

fn parse_record<T: Scalar>(
    rec: &csv::StringRecord,
    width: usize,
    has_time: bool,
    label_idx: Option<usize>,
) -> Result<ParsedRow<T>, String> {
    if rec.len() != width {
        return Err(format!("expected {width} fields, found {}", rec.len()));
    }
    let mut time = None;
    let mut label = None;
    let mut row = Vec::with_capacity(width);
    for (i, cell) in rec.iter().enumerate() {
        let v: f64 = cell
            .parse()
            .map_err(|_| format!("field {} (`{cell}`) is not a number", i + 1))?;
        if !v.is_finite() {
            return Err(format!("field {} is not finite", i + 1));
        }
        if Some(i) == label_idx {
            label = Some(match v {
                x if x == 0.0 => 0,
                x if x == 1.0 => 1,
                _ => return Err(format!("label `{cell}` is not 0 or 1")),
            });
        } else if has_time && i == 0 {
            time = Some(T::of(v));
        } else {
            row.push(T::of(v));
        }
    }
    Ok((time, row, label))
}

fn malformed(e: &csv::Error, fallback_line: u64) -> DataError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    DataError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(header: bool) -> CsvOptions {
        CsvOptions {
            has_header: header,
            ..Default::default()
        }
    }

    #[test]
    fn parses_header_with_time_column() {
        let f: TimeSeriesFrame<f64> = parse_csv("t,s1,s2\n0,1.0,2.0\n1,1.5,2.5", &opts(true)).unwrap();
        assert_eq!(f.n_rows(), 2);
        assert_eq!(f.n_sensors(), 2);
        assert_eq!(f.timestamps(), &[0.0, 1.0]);
        assert_eq!(f.sensor_names(), &["s1".to_string(), "s2".to_string()]);
        assert_eq!(f.values().row(1), &[1.5, 2.5]);
    }

    #[test]
    fn drops_invalid_rows_when_asked() {
        let text = "t,s1,s2\n0,1.0,2.0\n1,1.5,2.5\n2,abc,3.0\n3,4.0,5.0";
        let mut o = opts(true);
        o.drop_invalid_rows = true;
        let f: TimeSeriesFrame<f64> = parse_csv(text, &o).unwrap();
        assert_eq!(f.n_rows(), 3);
        assert_eq!(f.timestamps(), &[0.0, 1.0, 3.0]);

        o.drop_invalid_rows = false;
        match parse_csv::<f64>(text, &o) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_csv::<f64>("", &opts(false)), Err(DataError::EmptyFile)));
        assert!(matches!(parse_csv::<f64>("t,a\n", &opts(true)), Err(DataError::EmptyFile)));
    }

    #[test]
    fn label_column_by_name() {
        let mut o = opts(true);
        o.label_column = Some("y".into());
        let f: TimeSeriesFrame<f64> = parse_csv("a,y,b\n1,0,2\n3,1,4", &o).unwrap();
        assert_eq!(f.labels(), Some(&[0u8, 1][..]));
        assert_eq!(f.values().row(1), &[3.0, 4.0]);
        assert_eq!(f.timestamps(), &[0.0, 1.0]);

        o.label_column = Some("nope".into());
        assert!(matches!(
            parse_csv::<f64>("a,y\n1,0", &o),
            Err(DataError::UnknownLabelColumn(_))
        ));
    }

    #[test]
    fn headerless_uses_row_index() {
        let f: TimeSeriesFrame<f32> = parse_csv("1,2\n3,4\n", &opts(false)).unwrap();
        assert_eq!(f.timestamps(), &[0.0, 1.0]);
        assert_eq!(f.n_sensors(), 2);
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse_csv::<f64>("1,2\n3\n", &opts(false)) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            ingest_csv::<f64>("/definitely/not/here.csv", &opts(true)),
            Err(DataError::FileNotFound(_))
        ));
    }
}
