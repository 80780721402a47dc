//! Dense linear algebra for the small per-step Patankar systems.
//!
//! The systems arising from a Patankar step are at most a handful of unknowns
//! wide, so everything here is plain row-major storage and O(n³) elimination.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is reported singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// Square real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows; every row must have the same length as the
    /// number of rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::arg(format!(
                    "row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x;
            }
        }
        sums
    }

    /// Sum of absolute values per column.
    pub fn column_abs_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x.abs();
            }
        }
        sums
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dimension mismatch in mul_vec");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Inverse by solving against each unit vector.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let lu = Lu::factor(self)?;
        let mut inv = Self::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.n).map(|i| self.row(i)))
            .finish()
    }
}

/// LU factorization with row partial pivoting, `P A = L U` packed in place.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.n;
        if !a.is_finite() {
            return Err(Error::arg("matrix has non-finite entries"));
        }
        let scales = column_max(a);
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let threshold = PIVOT_TOL * scales[k];
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::Singular {
                    column: k,
                    pivot,
                    threshold,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let diag = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / diag;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Elimination without pivoting for a Z-matrix with known non-negative
    /// column sums. Pivots are rebuilt as `column sum + Σ |off-diagonal|`
    /// and every update adds terms of equal sign, so no cancellation occurs.
    fn factor_mmatrix(a: &DenseMatrix, col_sums: &[f64]) -> Result<Self> {
        let n = a.n;
        if col_sums.len() != n {
            return Err(Error::arg("column sums have the wrong length"));
        }
        if !a.is_finite() {
            return Err(Error::arg("matrix has non-finite entries"));
        }
        if let Some(j) = col_sums.iter().position(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::arg(format!("column sum {j} is {}", col_sums[j])));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)] > 0.0 {
                    return Err(Error::arg(format!(
                        "off-diagonal entry ({i}, {j}) = {} is positive",
                        a[(i, j)]
                    )));
                }
            }
        }
        let mut lu = a.data.clone();
        let mut c = col_sums.to_vec();
        for k in 0..n {
            let below: f64 = (k + 1..n).map(|i| lu[i * n + k]).sum();
            // never smaller than the remaining column sum, so only an exact
            // zero signals singularity
            let pivot = c[k] - below;
            if !(pivot > 0.0) {
                return Err(Error::Singular {
                    column: k,
                    pivot,
                    threshold: 0.0,
                });
            }
            lu[k * n + k] = pivot;
            for j in k + 1..n {
                c[j] -= lu[k * n + j] * c[k] / pivot;
            }
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        if j != i {
                            lu[i * n + j] -= factor * lu[k * n + j];
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            lu,
            perm: (0..n).collect(),
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A x = b` by Gaussian elimination with row partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot falls below `PIVOT_TOL` times
/// the largest entry of its original column.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n {
        return Err(Error::arg(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            a.n,
            a.n
        )));
    }
    Ok(Lu::factor(a)?.solve(b))
}

fn column_max(a: &DenseMatrix) -> Vec<f64> {
    let mut m = vec![0.0f64; a.n];
    for i in 0..a.n {
        for (mj, x) in m.iter_mut().zip(a.row(i)) {
            *mj = mj.max(x.abs());
        }
    }
    m
}

/// Solves `A x = b` for a Z-matrix (non-positive off-diagonal entries) whose
/// column sums are known to be `col_sums >= 0`.
///
/// The diagonal of `A` is not read; it is implied by `col_sums`. Patankar
/// step matrices have unit column sums, and for them this route keeps full
/// relative accuracy in every component of `x` however large `Δt` is, so a
/// positive `b` gives a positive `x` whose sum equals `Σ b` to round-off.
pub fn solve_mmatrix(a: &DenseMatrix, col_sums: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.n {
        return Err(Error::arg(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            a.n,
            a.n
        )));
    }
    Ok(Lu::factor_mmatrix(a, col_sums)?.solve(b))
}

/// Inverse of a Z-matrix with known column sums, see [`solve_mmatrix`].
pub fn inverse_mmatrix(a: &DenseMatrix, col_sums: &[f64]) -> Result<DenseMatrix> {
    let n = a.n;
    let lu = Lu::factor_mmatrix(a, col_sums)?;
    let mut inv = DenseMatrix::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

/// Solves a diagonal system `diag(d) x = b`; all `d_i` must be positive.
pub fn solve_diagonal(d: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if d.len() != b.len() {
        return Err(Error::arg(format!(
            "diagonal has length {}, right-hand side {}",
            d.len(),
            b.len()
        )));
    }
    if let Some(i) = d.iter().position(|&di| !(di > 0.0)) {
        return Err(Error::arg(format!(
            "diagonal entry {i} is {} (must be > 0)",
            d[i]
        )));
    }
    Ok(b.iter().zip(d).map(|(bi, di)| bi / di).collect())
}
