//! The observed data matrix and CSV ingestion.

use std::collections::HashSet;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column affine map applied at ingestion: `scaled = (raw - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// An `n × d` matrix of finite reals with row and column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    column_names: Vec<String>,
    row_ids: Vec<u64>,
    class_labels: Option<Vec<String>>,
    scaling: Option<ColumnScaling>,
}

impl DataMatrix {
    /// Builds a matrix with default column names (`x1..xd`) and row ids `0..n`.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        let ids = (0..values.nrows() as u64).collect();
        Self::with_metadata(values, names, ids, None)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn with_metadata(
        values: DMatrix<f64>,
        column_names: Vec<String>,
        row_ids: Vec<u64>,
        class_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, d) = values.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidData(format!("matrix must be non-empty, got {n}x{d}")));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                idx % n,
                idx / n
            )));
        }
        if column_names.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: column_names.len() });
        }
        if row_ids.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: row_ids.len() });
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = row_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidData(format!("duplicate row id {dup}")));
        }
        if let Some(labels) = &class_labels {
            if labels.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: labels.len() });
            }
        }
        Ok(Self { values, column_names, row_ids, class_labels, scaling: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.nrows() {
            return Err(Error::DimensionMismatch { expected: self.nrows(), actual: labels.len() });
        }
        self.class_labels = Some(labels);
        Ok(self)
    }

    /// Records the ingestion scaling of already-scaled values.
    pub fn with_scaling(mut self, scaling: Option<ColumnScaling>) -> Result<Self> {
        if let Some(s) = &scaling {
            if s.shift.len() != self.ncols() || s.scale.len() != self.ncols() {
                return Err(Error::DimensionMismatch { expected: self.ncols(), actual: s.shift.len() });
            }
        }
        self.scaling = scaling;
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn class_labels(&self) -> Option<&[String]> {
        self.class_labels.as_deref()
    }

    pub fn scaling(&self) -> Option<&ColumnScaling> {
        self.scaling.as_ref()
    }

    /// Maps row ids back to row indices. Unknown ids are an error.
    pub fn indices_of(&self, ids: &[u64]) -> Result<Vec<usize>> {
        let lookup: std::collections::HashMap<u64, usize> =
            self.row_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        ids.iter()
            .map(|id| {
                lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::InvalidData(format!("unknown row id {id}")))
            })
            .collect()
    }

    /// Rows carrying the given class label, in row order.
    pub fn rows_with_label(&self, label: &str) -> Vec<usize> {
        self.class_labels
            .iter()
            .flat_map(|labels| labels.iter().enumerate())
            .filter(|(_, l)| l.as_str() == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct class labels in first-appearance order.
    pub fn distinct_labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.class_labels
            .iter()
            .flatten()
            .filter(|l| seen.insert(l.as_str()))
            .cloned()
            .collect()
    }

    /// Shifts every column to zero mean and unit (population) variance.
    /// Constant columns are only centered.
    pub fn standardized(&self) -> Self {
        let n = self.nrows() as f64;
        let d = self.ncols();
        let mut shift = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            let mean = self.values.column(j).sum() / n;
            let var = self.values.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.apply(|v| *v = (*v - mean) / sd);
            shift.push(mean);
            scale.push(sd);
        }
        Self {
            values,
            column_names: self.column_names.clone(),
            row_ids: self.row_ids.clone(),
            class_labels: self.class_labels.clone(),
            scaling: Some(ColumnScaling { shift, scale }),
        }
    }

    /// Population covariance of the full data.
    pub fn covariance(&self) -> DMatrix<f64> {
        crate::linalg::covariance(&self.values).1
    }

    /// Parses CSV with a header row. See [`CsvOptions`].
    pub fn from_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let find = |name: &Option<String>| -> Result<Option<usize>> {
            match name {
                None => Ok(None),
                Some(name) => headers
                    .iter()
                    .position(|h| h == name)
                    .map(Some)
                    .ok_or_else(|| Error::InvalidData(format!("column `{name}` not found in header"))),
            }
        };
        let label_col = find(&options.label_column)?;
        let id_col = find(&options.id_column)?;
        if label_col.is_some() && label_col == id_col {
            return Err(Error::InvalidData("label and id column must differ".into()));
        }
        let numeric: Vec<usize> =
            (0..headers.len()).filter(|&j| Some(j) != label_col && Some(j) != id_col).collect();

        let mut flat = Vec::new();
        let mut labels = label_col.map(|_| Vec::new());
        let mut ids = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row,
                    column: "*".into(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            for &j in &numeric {
                let cell = &record[j];
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: headers[j].clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: headers[j].clone(),
                        message: format!("`{cell}` is not finite"),
                    });
                }
                flat.push(v);
            }
            if let (Some(j), Some(labels)) = (label_col, labels.as_mut()) {
                labels.push(record[j].to_owned());
            }
            match id_col {
                Some(j) => ids.push(record[j].parse::<u64>().map_err(|_| Error::Parse {
                    row,
                    column: headers[j].clone(),
                    message: format!("`{}` is not a non-negative integer id", &record[j]),
                })?),
                None => ids.push(r as u64),
            }
        }
        let n = ids.len();
        let d = numeric.len();
        if n == 0 || d == 0 {
            return Err(Error::InvalidData(format!("need at least one row and one numeric column, got {n}x{d}")));
        }
        let values = DMatrix::from_row_slice(n, d, &flat);
        let names = numeric.iter().map(|&j| headers[j].clone()).collect();
        let data = Self::with_metadata(values, names, ids, labels)?;
        Ok(if options.standardize { data.standardized() } else { data })
    }

    /// Writes the matrix as CSV, with an optional label column appended.
    pub fn write_csv<W: std::io::Write>(&self, writer: W, label_header: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.column_names.clone();
        let labels = label_header.zip(self.class_labels.as_ref());
        if let Some((name, _)) = labels {
            header.push(name.to_owned());
        }
        w.write_record(&header)?;
        for i in 0..self.nrows() {
            let mut rec: Vec<String> = self.values.row(i).iter().map(|v| v.to_string()).collect();
            if let Some((_, l)) = labels {
                rec.push(l[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ingestion switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Column holding a categorical class tag.
    pub label_column: Option<String>,
    /// Column holding integer row ids; rows are numbered from 0 otherwise.
    pub id_column: Option<String>,
    /// Standardize columns to zero mean and unit variance.
    pub standardize: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { label_column: None, id_column: None, standardize: true }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_and_standardizes() {
        let csv = "a,b,cls\n1,10,x\n2,20,y\n3,30,x\n";
        let opts = CsvOptions { label_column: Some("cls".into()), ..Default::default() };
        let data = DataMatrix::from_csv(csv.as_bytes(), &opts).unwrap();
        assert_eq!(data.nrows(), 3);
        assert_eq!(data.column_names(), &["a", "b"]);
        assert_eq!(data.rows_with_label("x"), vec![0, 2]);
        let col = data.values().column(0);
        assert!(col.sum().abs() < 1e-12);
        assert!((col.norm_squared() / 3.0 - 1.0).abs() < 1e-12);
        assert_eq!(data.scaling().unwrap().shift, vec![2.0, 20.0]);
    }

    #[test]
    fn parse_failure_reports_position() {
        let csv = "a,b\n1,2\n3,oops\n";
        let err = DataMatrix::from_csv(csv.as_bytes(), &CsvOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_duplicate_ids() {
        let csv = "a\nNaN\n";
        assert!(DataMatrix::from_csv(csv.as_bytes(), &CsvOptions::default()).is_err());
        let csv = "id,a\n1,0.5\n1,0.7\n";
        let opts = CsvOptions { id_column: Some("id".into()), standardize: false, ..Default::default() };
        assert!(DataMatrix::from_csv(csv.as_bytes(), &opts).is_err());
    }

    #[test]
    fn constant_column_is_only_centered() {
        let data = DataMatrix::from_rows(&[vec![2.0, 1.0], vec![2.0, 3.0]]).unwrap().standardized();
        assert_eq!(data.values().column(0).as_slice(), &[0.0, 0.0]);
        assert_eq!(data.values().column(1).as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn csv_round_trip_keeps_values() {
        let data = DataMatrix::from_rows(&[vec![0.25, -1.5], vec![3.0, 1e-3]])
            .unwrap()
            .with_labels(vec!["p".into(), "q".into()])
            .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf, Some("label")).unwrap();
        let opts = CsvOptions { label_column: Some("label".into()), standardize: false, ..Default::default() };
        let back = DataMatrix::from_csv(buf.as_slice(), &opts).unwrap();
        assert_eq!(back, data);
    }
}
