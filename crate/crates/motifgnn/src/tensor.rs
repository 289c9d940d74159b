//! Dense and sparse matrix storage.
//!
//! Dense tensors are `ndarray::Array2<f64>` throughout; this module adds
//! the compressed-sparse-row matrix used for adjacency operators and
//! bag-of-words feature matrices, plus the few products the training
//! path needs.

use ndarray::Array2;

use crate::{Error, Result};

/// Dense row-major f64 matrix. Scalars are 1×1, row vectors 1×D,
/// column vectors n×1.
pub type DMat = Array2<f64>;

/// Compressed-sparse-row f64 matrix.
///
/// Column indices are strictly increasing within each row and every
/// stored entry is addressable; duplicates are rejected at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets. Triplets may arrive in any
    /// order; duplicate coordinates are an error.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Integrity(format!(
                    "sparse entry ({r}, {c}) outside {rows}x{cols} matrix"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Integrity(format!(
                    "duplicate sparse entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            indptr[r + 1] += 1;
            indices.push(c as u32);
            values.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
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

    /// (column, value) pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Mutable view of the stored values (structure is fixed).
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dense copy, for small oracles and tests.
    pub fn to_dense(&self) -> DMat {
        let mut out = DMat::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// `self · dense` -> dense.
    pub fn matmul_dense(&self, rhs: &DMat) -> Result<DMat> {
        if self.cols != rhs.nrows() {
            return Err(Error::Shape {
                op: "sparse × dense".into(),
                details: format!(
                    "{}x{} × {}x{}",
                    self.rows,
                    self.cols,
                    rhs.nrows(),
                    rhs.ncols()
                ),
            });
        }
        let k = rhs.ncols();
        let mut out = DMat::zeros((self.rows, k));
        let rhs_s = rhs.as_slice().expect("dense matrices are standard layout");
        let out_s = out.as_slice_mut().expect("standard layout");
        for r in 0..self.rows {
            let dst = &mut out_s[r * k..(r + 1) * k];
            for idx in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[idx] as usize;
                let v = self.values[idx];
                let src = &rhs_s[c * k..(c + 1) * k];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense` -> dense, without materializing the transpose.
    /// Accumulation order is fixed (row-major over `self`), so results
    /// are reproducible.
    pub fn transpose_matmul_dense(&self, rhs: &DMat) -> Result<DMat> {
        if self.rows != rhs.nrows() {
            return Err(Error::Shape {
                op: "sparseᵀ × dense".into(),
                details: format!(
                    "{}x{} (transposed) × {}x{}",
                    self.rows,
                    self.cols,
                    rhs.nrows(),
                    rhs.ncols()
                ),
            });
        }
        let k = rhs.ncols();
        let mut out = DMat::zeros((self.cols, k));
        let rhs_s = rhs.as_slice().expect("standard layout");
        let out_s = out.as_slice_mut().expect("standard layout");
        for r in 0..self.rows {
            let src = &rhs_s[r * k..(r + 1) * k];
            for idx in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[idx] as usize;
                let v = self.values[idx];
                let dst = &mut out_s[c * k..(c + 1) * k];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }
}
