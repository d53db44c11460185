use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::rng::{gaussian_vector, Stream};

/// Binary-labelled feature table. Row `i` of `features` is sample `a_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows vs labels",
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        crate::linalg::ensure_finite_matrix(&features, "dataset features")?;
        if let Some(bad) = labels.iter().find(|&&b| b != 0.0 && b != 1.0) {
            return Err(Error::Data(format!("labels must be 0 or 1, found {bad}")));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> DenseVector {
        self.features.row(i).transpose()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&b| b == 1.0).count()
    }

    /// Error out when every label is the same.
    pub fn ensure_two_classes(&self, what: &str) -> Result<()> {
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(Error::Data(format!("{what} has a single class ({pos} of {} positive)", self.len())));
        }
        Ok(())
    }

    /// Two Gaussian blobs at `+/- separation * w` with unit isotropic spread.
    pub fn blobs(n: usize, w: &DenseVector, separation: f64, rng: &mut Stream) -> Self {
        let d = w.len();
        let mut features = DenseMatrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let b: bool = rng.r#gen();
            let sign = if b { 1.0 } else { -1.0 };
            let a = w * (sign * separation) + gaussian_vector(rng, d, 1.0);
            features.set_row(i, &a.transpose());
            labels.push(if b { 1.0 } else { 0.0 });
        }
        Dataset { features, labels }
    }

    /// CSV with header `label,f0,f1,...`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("label") || headers.len() < 2 {
            return Err(Error::Data(format!(
                "{}: header must be label,f0,f1,...",
                path.display()
            )));
        }
        let d = headers.len() - 1;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::Data(format!("row {} has {} fields, expected {}", line + 1, rec.len(), d + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {}: {e}: {s:?}", line + 1)))
            };
            labels.push(parse(&rec[0])?);
            for j in 1..=d {
                rows.push(parse(&rec[j])?);
            }
        }
        let n = labels.len();
        Dataset::new(DenseMatrix::from_row_slice(n, d, &rows), labels)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![format!("{}", self.labels[i])];
            rec.extend(self.features.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = stream(1);
        let w = gaussian_vector(&mut rng, 3, 1.0);
        let ds = Dataset::blobs(25, &w, 1.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_labels_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "label,f0\n2,0.5\n").unwrap();
        assert!(matches!(Dataset::read_csv(&p), Err(Error::Data(_))));
        std::fs::write(&p, "y,f0\n1,0.5\n").unwrap();
        assert!(matches!(Dataset::read_csv(&p), Err(Error::Data(_))));
    }

    #[test]
    fn single_class_detected() {
        let ds = Dataset::new(DenseMatrix::zeros(3, 2), vec![1.0; 3]).unwrap();
        assert!(ds.ensure_two_classes("train").is_err());
    }
}
