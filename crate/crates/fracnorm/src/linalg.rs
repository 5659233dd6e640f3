//! Compressed sparse row storage for assembled forms, plus SPD
//! factorisations (sparse and dense) backed by `faer`.

use std::io::{self, Write};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("sparse factorisation failed: {0}")]
    Factorisation(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, f64)>) -> CsrMatrix {
        trip.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            assert!(i < n_rows && j < n_cols, "triplet ({i},{j}) out of range");
            if last == Some((i, j)) {
                *values.last_mut().expect("value present") += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(n_rows, n_cols, Vec::new())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension");
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mv = self.matvec(v);
        u.iter().zip(&mv).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic(&self, u: &[f64]) -> f64 {
        self.bilinear(u, u)
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> CsrMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let trip = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, alpha * v)))
            .collect();
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, trip)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_pos = vec![usize::MAX; self.n_cols];
        for (p, &j) in cols.iter().enumerate() {
            col_pos[j] = p;
        }
        let mut trip = Vec::new();
        for (p, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_pos[j] != usize::MAX {
                    trip.push((p, col_pos[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), trip)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest |A_ij − A_ji|.
    pub fn symmetry_defect(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// Sparse Cholesky factorisation of an SPD matrix.
pub struct SpdSolver {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSolver").field("n", &self.n).finish()
    }
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix) -> Result<SpdSolver, LinalgError> {
        if a.n_rows != a.n_cols {
            return Err(LinalgError::Dimension {
                expected: a.n_rows,
                got: a.n_cols,
            });
        }
        let trip: Vec<Triplet<usize, usize, f64>> = a
            .triplets()
            .filter(|&(i, j, _)| i >= j)
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let sp = SparseColMat::<usize, f64>::try_new_from_triplets(a.n_rows, a.n_cols, &trip)
            .map_err(|e| LinalgError::Factorisation(format!("{e:?}")))?;
        let llt = sp
            .sp_cholesky(Side::Lower)
            .map_err(|_| LinalgError::NotPositiveDefinite)?;
        Ok(SpdSolver { n: a.n_rows, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs dimension");
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Solves the SPD system `a x = b`.
pub fn spd_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    Ok(SpdSolver::new(a)?.solve(b))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 4.0]);
        assert!((m.symmetry_defect() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn sparse_cholesky_solves() {
        let a = laplace_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x);
        let y = spd_solve(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-11);
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(SpdSolver::new(&a).is_err());
    }

    #[test]
    fn submatrix_and_dense() {
        let a = laplace_1d(5);
        let s = a.submatrix(&[1, 2, 3], &[1, 2, 3]);
        let d = s.to_dense();
        assert_eq!(d[(0, 0)], 2.0);
        assert_eq!(d[(0, 1)], -1.0);
        assert_eq!(d[(0, 2)], 0.0);
    }

    #[test]
    fn matrix_market_header() {
        let a = laplace_1d(3);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
        assert_eq!(lines.next().unwrap(), "3 3 7");
    }
}
