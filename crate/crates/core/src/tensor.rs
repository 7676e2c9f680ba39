//! Dense and compressed-sparse-row matrices with the handful of kernels the
//! backbones need.
//!
//! Every reduction walks its indices in ascending order, so two runs over the
//! same inputs produce bitwise-identical results.

use serde::{Deserialize, Serialize};

use crate::error::TensorError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value]).expect("1x1")
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::Shape(format!(
                "buffer of length {} cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(TensorError::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    /// The single entry of a 1x1 matrix.
    pub fn item(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the first row holding a non-finite entry.
    pub fn first_non_finite_row(&self) -> Option<usize> {
        (0..self.rows).find(|&r| self.row(r).iter().any(|v| !v.is_finite()))
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Selects rows in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Dense product `self * rhs`, accumulating over the inner index in
    /// ascending order.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.cols != rhs.rows {
            return Err(TensorError::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += aik * bj;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.rows != rhs.rows {
            return Err(TensorError::Shape(format!(
                "t_matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = rhs.row(k);
            for (i, &aki) in a.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += aki * bj;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhsᵀ`.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.cols != rhs.cols {
            return Err(TensorError::Shape(format!(
                "matmul_t {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                let b = rhs.row(j);
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    acc += x * y;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, rhs: &DenseMatrix) -> Result<(), TensorError> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::Shape(format!(
                "add {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape());
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-row argmax, ties resolved to the lowest column index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Numerically stable softmax over each row.
///
/// Rejects non-finite input, naming the first offending row.
pub fn row_softmax(logits: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
    if let Some(row) = logits.first_non_finite_row() {
        return Err(TensorError::NonFinite {
            context: "row_softmax",
            row,
        });
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCSR {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCSR {
    /// Validates raw CSR arrays.
    pub fn new(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, TensorError> {
        if offsets.len() != rows + 1 {
            return Err(TensorError::Csr(format!(
                "offsets has length {}, expected {}",
                offsets.len(),
                rows + 1
            )));
        }
        if offsets[0] != 0 || *offsets.last().unwrap() != indices.len() {
            return Err(TensorError::Csr("offsets must span [0, nnz]".into()));
        }
        if indices.len() != values.len() {
            return Err(TensorError::Csr("indices and values differ in length".into()));
        }
        for r in 0..rows {
            if offsets[r] > offsets[r + 1] {
                return Err(TensorError::Csr(format!("offsets decrease at row {r}")));
            }
            let cols_r = &indices[offsets[r]..offsets[r + 1]];
            for (k, &c) in cols_r.iter().enumerate() {
                if c >= cols {
                    return Err(TensorError::Csr(format!(
                        "column {c} out of range in row {r}"
                    )));
                }
                if k > 0 && cols_r[k - 1] >= c {
                    return Err(TensorError::Csr(format!(
                        "row {r} columns not strictly increasing"
                    )));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from (row, col, value) triplets. Duplicates are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, TensorError> {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for (k, &(r, c, v)) in sorted.iter().enumerate() {
            if r >= rows {
                return Err(TensorError::Csr(format!("row {r} out of range")));
            }
            if k > 0 && sorted[k - 1].0 == r && sorted[k - 1].1 == c {
                return Err(TensorError::Csr(format!("duplicate entry ({r}, {c})")));
            }
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Self::new(rows, cols, offsets, indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, &triplets).expect("transpose of valid CSR")
    }
}

/// Sparse-dense product `a * b`, summing each output row over ascending
/// column index of `a`.
pub fn spmm(a: &SparseCSR, b: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
    if a.cols != b.rows() {
        return Err(TensorError::Shape(format!(
            "spmm {}x{} by {}x{}",
            a.rows,
            a.cols,
            b.rows(),
            b.cols()
        )));
    }
    let n = b.cols();
    let mut out = DenseMatrix::zeros(a.rows, n);
    for r in 0..a.rows {
        let (cols, vals) = a.row(r);
        let o = out.row_mut(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (oj, &bj) in o.iter_mut().zip(b.row(c)) {
                *oj += v * bj;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let z = DenseMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![2f64.ln(), 0.0],
            vec![1000.0, 0.0],
        ])
        .unwrap();
        let p = row_softmax(&z).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!((p.get(1, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.get(2, 0) - 1.0).abs() < 1e-12);
        assert!(p.get(2, 1).abs() < 1e-12);
        assert!(p.is_finite());
    }

    #[test]
    fn softmax_rejects_nan_with_row() {
        let z = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 0.0]]).unwrap();
        match row_softmax(&z) {
            Err(TensorError::NonFinite { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spmm_examples() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(spmm(&SparseCSR::identity(3), &b).unwrap(), b);

        let a = SparseCSR::from_triplets(3, 3, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let out = spmm(&a, &b).unwrap();
        assert_eq!(
            out,
            DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap()
        );

        let zero = SparseCSR::from_triplets(3, 3, &[]).unwrap();
        assert_eq!(spmm(&zero, &b).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn spmm_shape_mismatch() {
        let b = DenseMatrix::zeros(2, 2);
        assert!(spmm(&SparseCSR::identity(3), &b).is_err());
    }

    #[test]
    fn csr_rejects_duplicates_and_unsorted() {
        assert!(SparseCSR::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(SparseCSR::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseCSR::new(1, 3, vec![0, 1], vec![3], vec![1.0]).is_err());
    }

    #[test]
    fn transposed_products_agree() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(b.matmul_t(&b).unwrap(), b.matmul(&b.transpose()).unwrap());
    }

    #[test]
    fn argmax_ties_go_low() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.1, 0.2]]).unwrap();
        assert_eq!(m.argmax_rows(), vec![0, 1]);
    }
}
