//! Compressed sparse row matrices for the assembled FEM operators.
//!
//! Assembly produces triplets in mesh-traversal order. `from_triplets`
//! canonicalizes them (sorted by row, column, then value bits before
//! summation) so the stored matrix is independent of element enumeration
//! order, bit for bit.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .iter()
            .copied()
            .filter(|&(_, _, v)| v != 0.0)
            .collect();
        // Value bits participate in the sort key so duplicate (i,j) entries
        // are summed in a canonical order.
        entries.sort_by(|a, b| {
            (a.0, a.1, a.2.to_bits()).cmp(&(b.0, b.1, b.2.to_bits()))
        });

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &(i, j, v) in &entries {
            assert!(i < nrows && j < ncols, "triplet out of bounds");
            if row_ptr[i + 1] > 0 && *col_idx.last().unwrap() == j {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
            }
        }
        // prefix-sum the per-row counts
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// y = A x for a dense block of vectors (columns of x).
    pub fn matmul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for c in 0..x.ncols() {
                    y[(i, c)] += v * x[(j, c)];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Weighted sum of matrices with identical dimensions.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        assert!(!terms.is_empty());
        let nrows = terms[0].1.nrows;
        let ncols = terms[0].1.ncols;
        let mut triplets = Vec::new();
        for &(w, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "dimension mismatch");
            for i in 0..nrows {
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    triplets.push((i, j, w * v));
                }
            }
        }
        CsrMatrix::from_triplets(nrows, ncols, &triplets)
    }

    /// Largest absolute asymmetry max|A(i,j) - A(j,i)| over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Half-bandwidth: max |i - j| over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        let mut b = 0usize;
        for i in 0..self.nrows {
            let (cols, _) = self.row(i);
            for &j in cols {
                b = b.max(i.abs_diff(j));
            }
        }
        b
    }

    /// Write in Matrix Market coordinate format (symmetric, lower triangle,
    /// 1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::InvalidArgument(
                "matrix market symmetric export requires a square matrix".into(),
            ));
        }
        let mut entries = Vec::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    entries.push((i, j, v));
                }
            }
        }
        let mut out = Vec::new();
        writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, entries.len())?;
        for (i, j, v) in entries {
            writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Cholesky factorization in banded storage. The factor keeps the lower
/// triangle, diagonals stored by offset.
pub struct BandCholesky {
    n: usize,
    bandwidth: usize,
    // factor[d][i] = L(i, i - d) for offset d in 0..=bandwidth
    factor: Vec<Vec<f64>>,
}

impl BandCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("band Cholesky needs a square matrix".into()));
        }
        let n = a.nrows();
        let bw = a.half_bandwidth();
        let mut band = vec![vec![0.0; n]; bw + 1];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    band[i - j][i] = v;
                }
            }
        }
        // in-place banded LL^T
        for j in 0..n {
            let mut d = band[0][j];
            let lo = j.saturating_sub(bw);
            for k in lo..j {
                let l_jk = band[j - k][j];
                d -= l_jk * l_jk;
            }
            if d <= 0.0 {
                return Err(Error::Definiteness(format!(
                    "band Cholesky pivot {d:.3e} at column {j}"
                )));
            }
            let l_jj = d.sqrt();
            band[0][j] = l_jj;
            let hi = (j + bw + 1).min(n);
            for i in (j + 1)..hi {
                let mut s = band[i - j][i];
                let lo_i = i.saturating_sub(bw).max(lo);
                for k in lo_i..j {
                    s -= band[i - k][i] * band[j - k][j];
                }
                band[i - j][i] = s / l_jj;
            }
        }
        Ok(BandCholesky {
            n,
            bandwidth: bw,
            factor: band,
        })
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.clone();
        let bw = self.bandwidth;
        // forward: L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.factor[i - k][i] * x[k];
            }
            x[i] = s / self.factor[0][i];
        }
        // backward: L^T x = y
        for i in (0..self.n).rev() {
            let hi = (i + bw + 1).min(self.n);
            let mut s = x[i];
            for k in (i + 1)..hi {
                s -= self.factor[k - i][k] * x[k];
            }
            x[i] = s / self.factor[0][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 0.5)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 0.5);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn canonicalization_is_order_independent() {
        let t1 = vec![(0, 1, 0.1), (0, 1, 0.3), (1, 1, 2.0), (0, 0, 1.0)];
        let mut t2 = t1.clone();
        t2.reverse();
        let a = CsrMatrix::from_triplets(2, 2, &t1);
        let b = CsrMatrix::from_triplets(2, 2, &t2);
        assert_eq!(a, b);
    }

    #[test]
    fn band_cholesky_solves_spd_system() {
        // tridiagonal SPD
        let mut t = Vec::new();
        let n = 20;
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let chol = BandCholesky::new(&a).unwrap();
        let b = DVector::from_element(n, 1.0);
        let x = chol.solve(&b);
        let r = &a.matvec(&x) - &b;
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn band_cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(matches!(BandCholesky::new(&a), Err(Error::Definiteness(_))));
    }

    #[test]
    fn matrix_market_header_and_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mtx");
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 0.5), (0, 1, 0.5), (1, 1, 2.0)]);
        a.write_matrix_market(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "%%MatrixMarket matrix coordinate real symmetric"
        );
        assert_eq!(lines.next().unwrap(), "2 2 3");
        assert!(text.contains("2 1 "));
    }
}
