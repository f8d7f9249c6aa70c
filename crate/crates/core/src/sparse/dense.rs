//! Small dense blocks: coarsest-level factorization and thin QR.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DenseBlock {
    pub fn zeros(rows: usize, cols: usize) -> DenseBlock {
        DenseBlock {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, values: Vec<f64>) -> DenseBlock {
        assert_eq!(rows * cols, values.len());
        DenseBlock { rows, cols, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[i * self.cols + j]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cached LU factorization with partial pivoting.
///
/// Row pivoting keeps the factorization stable for the symmetric indefinite
/// blocks the coarsest level can produce; singularity is flagged when a pivot
/// falls below 1e-14 of the matrix magnitude.
#[derive(Debug, Clone)]
pub struct DenseFactor {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseFactor {
    pub fn new(a: &DenseBlock) -> Result<DenseFactor> {
        assert_eq!(a.rows, a.cols, "factorization needs a square block");
        let n = a.rows;
        let mut lu = a.values.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_mag = lu[k * n + k].abs();
            for i in k + 1..n {
                let mag = lu[i * n + k].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = i;
                }
            }
            if pivot_mag <= tol {
                return Err(Error::Singular {
                    step: k,
                    pivot: lu[pivot_row * n + k],
                });
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                for j in k + 1..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }
        Ok(DenseFactor { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// Solves A x = b for a square block via the pivoted factorization.
pub fn dense_solve(a: &DenseBlock, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.cols {
        return Err(Error::DimensionMismatch {
            context: "dense_solve rhs length",
            expected: a.cols,
            got: b.len(),
        });
    }
    Ok(DenseFactor::new(a)?.solve(b))
}

/// Rank-revealing thin QR of a block, columns processed left to right.
///
/// `q` holds only the surviving orthonormal columns; `r` is the full
/// cols x cols upper triangle with zero rows at the positions of dependent
/// columns; `survivors` maps q's columns back to B's column indices.
#[derive(Debug, Clone)]
pub struct QrRank {
    pub q: DenseBlock,
    pub r: DenseBlock,
    pub survivors: Vec<usize>,
}

const QR_RANK_TOL: f64 = 1e-12;

/// Modified Gram-Schmidt with one re-orthogonalization pass.
/// A column whose residual falls below 1e-12 of its norm is marked dependent.
pub fn qr_rank(b: &DenseBlock) -> QrRank {
    let (n, k) = (b.rows, b.cols);
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut survivors = Vec::new();
    let mut r = DenseBlock::zeros(k, k);
    for j in 0..k {
        let mut v = b.col(j);
        let col_norm = norm(&v);
        // two projection passes for orthogonality near machine precision
        let mut coeffs = vec![0.0; q_cols.len()];
        for _ in 0..2 {
            for (qi, q) in q_cols.iter().enumerate() {
                let c = dot(q, &v);
                coeffs[qi] += c;
                axpy(&mut v, -c, q);
            }
        }
        let res_norm = norm(&v);
        if res_norm <= QR_RANK_TOL * col_norm || col_norm == 0.0 {
            // dependent column: zero row of R, no new Q column
            continue;
        }
        for (qi, &c) in coeffs.iter().enumerate() {
            *r.at_mut(survivors[qi], j) = c;
        }
        *r.at_mut(j, j) = res_norm;
        v.iter_mut().for_each(|x| *x /= res_norm);
        q_cols.push(v);
        survivors.push(j);
    }
    let mut q = DenseBlock::zeros(n, q_cols.len());
    for (jq, col) in q_cols.iter().enumerate() {
        for i in 0..n {
            *q.at_mut(i, jq) = col[i];
        }
    }
    QrRank { q, r, survivors }
}

/// Thin QR decomposition, B = Q R with orthonormal Q and R upper triangular
/// with non-negative diagonal. Dependent columns of B produce zero rows of R;
/// the matching Q columns are filled deterministically with the canonical
/// basis vector of largest residual, orthogonalized against the columns
/// already placed.
pub fn thin_qr(b: &DenseBlock) -> (DenseBlock, DenseBlock) {
    assert!(b.rows >= b.cols, "thin_qr needs rows >= cols");
    let QrRank { q, r, survivors } = qr_rank(b);
    if survivors.len() == b.cols {
        return (q, r);
    }
    let (n, k) = (b.rows, b.cols);
    let mut cols: Vec<Option<Vec<f64>>> = vec![None; k];
    for (jq, &jb) in survivors.iter().enumerate() {
        cols[jb] = Some(q.col(jq));
    }
    for j in 0..k {
        if cols[j].is_some() {
            continue;
        }
        let placed: Vec<&Vec<f64>> = cols.iter().flatten().collect();
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = -1.0;
        for axis in 0..n {
            let mut v = vec![0.0; n];
            v[axis] = 1.0;
            for _ in 0..2 {
                for q in &placed {
                    let c = dot(q, &v);
                    axpy(&mut v, -c, q);
                }
            }
            let nv = norm(&v);
            if nv > best_norm {
                best_norm = nv;
                best = Some(v);
            }
        }
        let mut v = best.expect("rows >= cols guarantees a completion direction");
        v.iter_mut().for_each(|x| *x /= best_norm);
        cols[j] = Some(v);
    }
    let mut qfull = DenseBlock::zeros(n, k);
    for (j, col) in cols.iter().enumerate() {
        let col = col.as_ref().unwrap();
        for i in 0..n {
            *qfull.at_mut(i, j) = col[i];
        }
    }
    (qfull, r)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
