//! Dense square matrices indexed by DC (or VM) pairs.

use std::fmt::Display;
use std::io::{Read, Write};
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major `n x n` matrix. Serialized as a nested array of rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Clone> SquareMatrix<T> {
    pub fn filled(n: usize, value: T) -> Self {
        SquareMatrix {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).map(<[T]>::to_vec).collect()
    }
}

impl<T> SquareMatrix<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Iterates `(i, j, &value)` in row-major order.
    pub fn iter_indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let n = self.n;
        self.data.iter().enumerate().map(move |(k, v)| (k / n, k % n, v))
    }

    /// Off-diagonal `(i, j)` pairs in row-major order.
    pub fn off_diagonal_pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn map<U>(&self, mut f: impl FnMut(usize, usize, &T) -> U) -> SquareMatrix<U> {
        SquareMatrix::from_fn(self.n, |i, j| f(i, j, &self[(i, j)]))
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of bounds for n = {}", self.n);
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        assert!(i < self.n && j < self.n, "index ({i}, {j}) out of bounds for n = {}", self.n);
        &mut self.data[i * self.n + j]
    }
}

impl<T: Serialize + Clone> Serialize for SquareMatrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de, T: Deserialize<'de> + Clone> Deserialize<'de> for SquareMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(deserializer)?;
        SquareMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

impl<T: Display> SquareMatrix<T> {
    /// Writes the matrix as CSV: a header row of labels, then one row per matrix row.
    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<()> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: labels.len(),
            });
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(labels)?;
        for i in 0..self.n {
            w.write_record(self.row(i).iter().map(ToString::to_string))?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<T: FromStr> SquareMatrix<T> {
    /// Reads a matrix written by [`SquareMatrix::write_csv`]. Returns the header labels too.
    pub fn read_csv<R: Read>(input: R) -> Result<(Vec<String>, Self)> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let labels: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let n = labels.len();
        let mut data = Vec::with_capacity(n * n);
        let mut rows = 0;
        for record in r.records() {
            let record = record?;
            if record.len() != n {
                return Err(Error::validation(format!(
                    "matrix row {rows} has {} fields, expected {n}",
                    record.len()
                )));
            }
            for field in record.iter() {
                let v = field
                    .trim()
                    .parse::<T>()
                    .map_err(|_| Error::validation(format!("unparseable matrix entry {field:?}")))?;
                data.push(v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::validation(format!("matrix has {rows} rows but {n} labels")));
        }
        Ok((labels, SquareMatrix { n, data }))
    }
}

/// Pairwise bandwidth between DCs (or VMs) in Mbps. Every entry is finite and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BandwidthMatrix(SquareMatrix<f64>);

impl BandwidthMatrix {
    pub fn new(values: SquareMatrix<f64>) -> Result<Self> {
        if let Some((i, j, v)) = values.iter_indexed().find(|(_, _, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::validation(format!(
                "bandwidth ({i}, {j}) = {v} must be finite and nonnegative"
            )));
        }
        Ok(BandwidthMatrix(values))
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(rows)?)
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(SquareMatrix::from_fn(n, f))
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn values(&self) -> &SquareMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> SquareMatrix<f64> {
        self.0
    }

    /// Smallest off-diagonal entry, or `None` for a 1x1 matrix.
    pub fn min_off_diagonal(&self) -> Option<f64> {
        self.0
            .off_diagonal_pairs()
            .map(|(i, j)| self.get(i, j))
            .min_by(f64::total_cmp)
    }

    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<()> {
        self.0.write_csv(labels, out)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<(Vec<String>, Self)> {
        let (labels, m) = SquareMatrix::<f64>::read_csv(input)?;
        Ok((labels, BandwidthMatrix::new(m)?))
    }
}

impl<'de> Deserialize<'de> for BandwidthMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = SquareMatrix::<f64>::deserialize(deserializer)?;
        BandwidthMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_labels_and_values() {
        let m = BandwidthMatrix::from_rows(vec![vec![1000.0, 400.5], vec![380.0, 1000.0]]).unwrap();
        let labels = vec!["use1".to_string(), "usw1".to_string()];
        let mut buf = Vec::new();
        m.write_csv(&labels, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "use1,usw1\n1000,400.5\n380,1000\n");
        let (l2, m2) = BandwidthMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(l2, labels);
        assert_eq!(m2, m);
    }

    #[test]
    fn rejects_ragged_and_negative() {
        assert!(SquareMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(BandwidthMatrix::from_rows(vec![vec![1.0, -2.0], vec![3.0, 1.0]]).is_err());
        assert!(BandwidthMatrix::from_rows(vec![vec![1.0, f64::NAN], vec![3.0, 1.0]]).is_err());
    }

    #[test]
    fn csv_row_count_must_match_header() {
        let input = "a,b\n1,2\n";
        assert!(BandwidthMatrix::read_csv(input.as_bytes()).is_err());
    }

    #[test]
    fn json_is_nested_rows() {
        let m = SquareMatrix::from_rows(vec![vec![1u32, 2], vec![3, 4]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1,2],[3,4]]");
        let back: SquareMatrix<u32> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
