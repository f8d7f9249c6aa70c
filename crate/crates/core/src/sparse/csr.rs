//! Compressed sparse row matrix and kernels.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::DenseBlock;

/// Square or rectangular sparse matrix in CSR form.
///
/// Two row layouts exist and are declared by `diag_last`:
/// when unset, columns within a row are sorted ascending; when set, each row
/// stores its off-diagonal entries (sorted) first and the diagonal entry in
/// the final slot. The flag is a storage convention of the assembly path;
/// every kernel here honors both.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub diag_last: bool,
}

impl SparseMatrix {
    /// Builds a sorted-column CSR matrix from (row, col, value) triplets.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> SparseMatrix {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut col_indices: Vec<usize> = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut rows: Vec<usize> = Vec::with_capacity(entries.len());
        for &(i, j, v) in &entries {
            assert!(i < n_rows && j < n_cols, "triplet out of bounds");
            if rows.last() == Some(&i) && col_indices.last() == Some(&j) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col_indices.push(j);
                values.push(v);
            }
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        for &i in &rows {
            row_offsets[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            diag_last: false,
        }
    }

    pub fn identity(n: usize) -> SparseMatrix {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            diag_last: false,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Entry lookup by row scan. Zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter()
            .position(|&c| c == j)
            .map_or(0.0, |k| vals[k])
    }

    /// Slot of the diagonal entry within row `i`, honoring the layout flag.
    pub fn diag_index(&self, i: usize) -> Option<usize> {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        if lo == hi {
            return None;
        }
        if self.diag_last {
            if self.col_indices[hi - 1] == i {
                return Some(hi - 1);
            }
            // fall back to a scan in case the row carries no diagonal
            self.col_indices[lo..hi]
                .iter()
                .position(|&c| c == i)
                .map(|k| lo + k)
        } else {
            self.col_indices[lo..hi]
                .binary_search(&i)
                .ok()
                .map(|k| lo + k)
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.diag_index(i).map_or(0.0, |k| self.values[k]))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Returns D^-1 A with rows scaled by the inverse diagonal.
    /// Rows with zero diagonal are left unscaled.
    pub fn inv_diag_scaled(&self) -> SparseMatrix {
        let diag = self.diag();
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let d = diag[i];
            if d != 0.0 {
                let lo = self.row_offsets[i];
                let hi = self.row_offsets[i + 1];
                for v in &mut out.values[lo..hi] {
                    *v /= d;
                }
            }
        }
        out
    }

    /// Copy with columns sorted ascending within each row (diag_last cleared).
    pub fn sorted(&self) -> SparseMatrix {
        if !self.diag_last {
            return self.clone();
        }
        let mut out = self.clone();
        out.diag_last = false;
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            scratch.clear();
            scratch.extend(
                self.col_indices[lo..hi]
                    .iter()
                    .copied()
                    .zip(self.values[lo..hi].iter().copied()),
            );
            scratch.sort_by_key(|&(c, _)| c);
            for (k, &(c, v)) in scratch.iter().enumerate() {
                out.col_indices[lo + k] = c;
                out.values[lo + k] = v;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseBlock {
        let mut d = DenseBlock::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                *d.at_mut(i, j) += v;
            }
        }
        d
    }

    /// Checks the structural CSR invariants.
    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.n_rows + 1 {
            return Err(Error::InvalidConfig("row_offsets length".into()));
        }
        if self.row_offsets[0] != 0 || *self.row_offsets.last().unwrap() != self.col_indices.len() {
            return Err(Error::InvalidConfig("row_offsets bounds".into()));
        }
        if self.col_indices.len() != self.values.len() {
            return Err(Error::InvalidConfig("col/value length mismatch".into()));
        }
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            if hi < lo {
                return Err(Error::InvalidConfig("row_offsets not non-decreasing".into()));
            }
            let cols = &self.col_indices[lo..hi];
            if cols.iter().any(|&c| c >= self.n_cols) {
                return Err(Error::InvalidConfig("column index out of range".into()));
            }
            let mut seen = cols.to_vec();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidConfig("duplicate column within a row".into()));
            }
            if !self.diag_last && cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig("columns not sorted".into()));
            }
        }
        Ok(())
    }
}

/// y = A x. Per-row accumulation runs in storage order so single-threaded
/// runs are bit-reproducible.
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.n_cols {
        return Err(Error::DimensionMismatch {
            context: "spmv vector length",
            expected: a.n_cols,
            got: x.len(),
        });
    }
    let mut y = vec![0.0; a.n_rows];
    spmv_into(a, x, &mut y);
    Ok(y)
}

/// In-place spmv for hot paths. Panics on dimension mismatch.
pub fn spmv_into(a: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), a.n_cols);
    assert_eq!(y.len(), a.n_rows);
    for i in 0..a.n_rows {
        let lo = a.row_offsets[i];
        let hi = a.row_offsets[i + 1];
        let mut acc = 0.0;
        for (&j, &v) in a.col_indices[lo..hi].iter().zip(&a.values[lo..hi]) {
            acc += v * x[j];
        }
        y[i] = acc;
    }
}

/// Transpose. Output always uses the sorted-column convention.
pub fn transpose(a: &SparseMatrix) -> SparseMatrix {
    let mut counts = vec![0usize; a.n_cols + 1];
    for &j in &a.col_indices {
        counts[j + 1] += 1;
    }
    for j in 0..a.n_cols {
        counts[j + 1] += counts[j];
    }
    let row_offsets = counts.clone();
    let mut col_indices = vec![0usize; a.nnz()];
    let mut values = vec![0.0; a.nnz()];
    let mut cursor = counts;
    for i in 0..a.n_rows {
        let lo = a.row_offsets[i];
        let hi = a.row_offsets[i + 1];
        // iterate columns in ascending order so output rows come out sorted
        if a.diag_last {
            let mut entries: Vec<(usize, f64)> = a.col_indices[lo..hi]
                .iter()
                .copied()
                .zip(a.values[lo..hi].iter().copied())
                .collect();
            entries.sort_by_key(|&(c, _)| c);
            for (j, v) in entries {
                let slot = cursor[j];
                col_indices[slot] = i;
                values[slot] = v;
                cursor[j] += 1;
            }
        } else {
            for (&j, &v) in a.col_indices[lo..hi].iter().zip(&a.values[lo..hi]) {
                let slot = cursor[j];
                col_indices[slot] = i;
                values[slot] = v;
                cursor[j] += 1;
            }
        }
    }
    SparseMatrix {
        n_rows: a.n_cols,
        n_cols: a.n_rows,
        row_offsets,
        col_indices,
        values,
        diag_last: false,
    }
}

/// Sparse product C = A B with Gustavson row accumulation, sorted output rows.
fn spgemm(a: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
    assert_eq!(a.n_cols, b.n_rows);
    let n = a.n_rows;
    let m = b.n_cols;
    let mut acc = vec![0.0f64; m];
    let mut marker = vec![usize::MAX; m];
    let mut touched: Vec<usize> = Vec::new();
    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0usize);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        touched.clear();
        let (acols, avals) = a.row(i);
        for (&k, &av) in acols.iter().zip(avals) {
            let (bcols, bvals) = b.row(k);
            for (&j, &bv) in bcols.iter().zip(bvals) {
                if marker[j] != i {
                    marker[j] = i;
                    acc[j] = 0.0;
                    touched.push(j);
                }
                acc[j] += av * bv;
            }
        }
        touched.sort_unstable();
        for &j in &touched {
            col_indices.push(j);
            values.push(acc[j]);
        }
        row_offsets.push(col_indices.len());
    }
    SparseMatrix {
        n_rows: n,
        n_cols: m,
        row_offsets,
        col_indices,
        values,
        diag_last: false,
    }
}

/// Galerkin triple product P^T A P.
///
/// When A is stored exactly symmetric the result is exactly symmetric
/// entrywise: the lower triangle is produced by replaying the identical
/// floating-point evaluation on A^T, which for a bitwise-symmetric A is the
/// same computation.
pub fn galerkin_product(p: &SparseMatrix, a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimensionMismatch {
            context: "galerkin_product A must be square",
            expected: a.n_rows,
            got: a.n_cols,
        });
    }
    if p.n_rows != a.n_rows {
        return Err(Error::DimensionMismatch {
            context: "galerkin_product P rows",
            expected: a.n_rows,
            got: p.n_rows,
        });
    }
    let a_sorted = a.sorted();
    let pt = transpose(p);
    let c = spgemm(&pt, &spgemm(&a_sorted, p));
    let at = transpose(&a_sorted);
    if at == a_sorted {
        // bitwise-symmetric input: mirror the upper triangle for exact symmetry
        let m = c.n_rows;
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(c.nnz());
        for i in 0..m {
            let (cols, vals) = c.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j >= i {
                    triplets.push((i, j, v));
                    if j > i {
                        triplets.push((j, i, v));
                    }
                }
            }
        }
        Ok(SparseMatrix::from_triplets(m, m, &triplets))
    } else {
        Ok(c)
    }
}

/// Largest-magnitude eigenvalue estimate by the power method.
/// Deterministic for a fixed seed; returns 0 for the zero matrix.
pub fn power_method_lmax(a: &SparseMatrix, iters: usize, seed: u64) -> f64 {
    assert_eq!(a.n_rows, a.n_cols, "power method needs a square matrix");
    if a.n_rows == 0 || a.max_abs() == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..a.n_rows).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = l2(&x);
    if norm == 0.0 {
        x[0] = 1.0;
    } else {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    let mut y = vec![0.0; a.n_rows];
    let mut lambda = 0.0;
    for _ in 0..iters {
        spmv_into(a, &x, &mut y);
        let ny = l2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        lambda = ny;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    lambda
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, m: usize, fill: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() < fill {
                    triplets.push((i, j, rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        SparseMatrix::from_triplets(n, m, &triplets)
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
        // B^T B + n I expanded densely, then sparsified structurally
        let b = random_sparse(n, n, 0.1, rng);
        let bd = b.to_dense();
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += bd.at(k, i) * bd.at(k, j);
                }
                if i == j {
                    acc += 1.0;
                }
                if acc != 0.0 {
                    triplets.push((i, j, acc));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, &triplets)
    }

    #[test]
    fn spmv_identity() {
        let a = SparseMatrix::identity(3);
        let y = spmv(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn spmv_zero_matrix() {
        let a = SparseMatrix::from_triplets(4, 4, &[]);
        let y = spmv(&a, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn spmv_dimension_mismatch_rejected() {
        let a = SparseMatrix::identity(3);
        assert!(spmv(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_sparse(50, 50, 0.08, &mut rng);
            let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let y = spmv(&a, &x).unwrap();
            let ad = a.to_dense();
            for i in 0..50 {
                let mut acc = 0.0;
                for j in 0..50 {
                    acc += ad.at(i, j) * x[j];
                }
                let scale = acc.abs().max(1.0);
                assert!((y[i] - acc).abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn spmv_honors_diag_last_layout() {
        // same matrix in both layouts must produce identical results
        let sorted = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        );
        let diag_last = SparseMatrix {
            n_rows: 2,
            n_cols: 2,
            row_offsets: vec![0, 2, 4],
            col_indices: vec![1, 0, 0, 1],
            values: vec![1.0, 2.0, 1.0, 3.0],
            diag_last: true,
        };
        let x = [0.5, -0.25];
        assert_eq!(spmv(&sorted, &x).unwrap(), spmv(&diag_last, &x).unwrap());
    }

    #[test]
    fn transpose_single_entry() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 2, 5.0)]);
        let t = transpose(&a);
        assert_eq!(t.n_rows, 3);
        assert_eq!(t.n_cols, 2);
        assert_eq!(t.get(2, 0), 5.0);
        assert_eq!(t.nnz(), 1);
    }

    #[test]
    fn transpose_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_sparse(17, 23, 0.15, &mut rng);
            let tt = transpose(&transpose(&a));
            assert_eq!(a, tt);
        }
    }

    #[test]
    fn transpose_of_symmetric_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_spd(20, &mut rng);
        let t = transpose(&a);
        assert_eq!(a, t);
    }

    #[test]
    fn galerkin_with_identity_p_returns_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_spd(15, &mut rng);
        let p = SparseMatrix::identity(15);
        let c = galerkin_product(&p, &a).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert!((c.get(i, j) - a.get(i, j)).abs() <= 1e-14 * a.max_abs());
            }
        }
    }

    #[test]
    fn galerkin_all_ones_column_sums_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = random_sparse(12, 12, 0.3, &mut rng);
        let ones: Vec<(usize, usize, f64)> = (0..12).map(|i| (i, 0, 1.0)).collect();
        let p = SparseMatrix::from_triplets(12, 1, &ones);
        let c = galerkin_product(&p, &a).unwrap();
        let total: f64 = a.values.iter().sum();
        assert!((c.get(0, 0) - total).abs() <= 1e-12 * total.abs().max(1.0));
    }

    #[test]
    fn galerkin_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let n = 60;
            let a = random_spd(n, &mut rng);
            // random aggregation-like P: one entry per row
            let n_agg = 13;
            let triplets: Vec<(usize, usize, f64)> = (0..n)
                .map(|i| (i, rng.random_range(0..n_agg), rng.random::<f64>() + 0.1))
                .collect();
            let p = SparseMatrix::from_triplets(n, n_agg, &triplets);
            let c = galerkin_product(&p, &a).unwrap();
            let (ad, pd) = (a.to_dense(), p.to_dense());
            let scale = a.max_abs();
            for i in 0..n_agg {
                for j in 0..n_agg {
                    let mut acc = 0.0;
                    for k in 0..n {
                        for l in 0..n {
                            acc += pd.at(k, i) * ad.at(k, l) * pd.at(l, j);
                        }
                    }
                    assert!(
                        (c.get(i, j) - acc).abs() <= 1e-12 * scale.max(acc.abs()),
                        "mismatch at ({i},{j}): {} vs {}",
                        c.get(i, j),
                        acc
                    );
                }
            }
        }
    }

    #[test]
    fn galerkin_exact_symmetry_on_symmetric_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let a = random_spd(40, &mut rng);
        let triplets: Vec<(usize, usize, f64)> = (0..40)
            .map(|i| (i, rng.random_range(0..9), rng.random::<f64>() + 0.1))
            .collect();
        let p = SparseMatrix::from_triplets(40, 9, &triplets);
        let c = galerkin_product(&p, &a).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let d = c.get(i, j) - c.get(j, i);
                assert_eq!(d, 0.0, "asymmetry at ({i},{j})");
            }
        }
    }

    #[test]
    fn galerkin_rejects_non_square() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]);
        let p = SparseMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]);
        assert!(galerkin_product(&p, &a).is_err());
    }

    #[test]
    fn power_method_diagonal_spectrum() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 5.0)]);
        let l = power_method_lmax(&a, 100, 3);
        assert!((l - 5.0).abs() < 1e-6);
    }

    #[test]
    fn power_method_identity() {
        let a = SparseMatrix::identity(10);
        let l = power_method_lmax(&a, 50, 3);
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_method_zero_matrix() {
        let a = SparseMatrix::from_triplets(5, 5, &[]);
        assert_eq!(power_method_lmax(&a, 50, 3), 0.0);
    }

    #[test]
    fn power_method_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = random_spd(80, &mut rng);
        let l = power_method_lmax(&a, 200, 5);
        let ad = a.to_dense();
        let na = nalgebra::DMatrix::from_fn(80, 80, |i, j| ad.at(i, j));
        let eig = na.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
        assert!(
            (l - lmax).abs() <= 1e-3 * lmax,
            "power {l} vs dense {lmax}"
        );
    }

    #[test]
    fn from_triplets_merges_duplicates() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, 1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.5);
        a.validate().unwrap();
    }
}
