//! Constraint evaluation and dual-system assembly.
//!
//! Distance and ARAP constraints are evaluated into per-constraint values and
//! gradients, from which the dual system
//! `A = grad(C) M^-1 grad(C)^T + alpha_tilde` and its right-hand side
//! `b = -C - alpha_tilde * lambda` are assembled into a fixed sparsity
//! pattern. A row stores its off-diagonal entries first and the diagonal in
//! the last slot so re-assembly never reallocates.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Zero-length guard for distance constraints, in meters.
pub const EPS_LEN: f64 = 1e-12;

/// Positions, predictions, and masses of the simulated vertices.
/// Pinned vertices carry `inv_mass == 0` exactly.
#[derive(Debug, Clone)]
pub struct ParticleState {
    pub x: Vec<Vector3<f64>>,
    pub x_pred: Vec<Vector3<f64>>,
    pub x_old: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub inv_mass: Vec<f64>,
}

impl ParticleState {
    pub fn new(positions: Vec<Vector3<f64>>, inv_mass: Vec<f64>) -> ParticleState {
        assert_eq!(positions.len(), inv_mass.len());
        assert!(inv_mass.iter().all(|&m| m >= 0.0));
        let n = positions.len();
        ParticleState {
            x_pred: positions.clone(),
            x_old: positions.clone(),
            v: vec![Vector3::zeros(); n],
            inv_mass,
            x: positions,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Distance,
    Arap,
}

impl ConstraintKind {
    /// Vertices incident to one constraint.
    pub fn arity(self) -> usize {
        match self {
            ConstraintKind::Distance => 2,
            ConstraintKind::Arap => 4,
        }
    }
}

/// Constraint topology, rest data, compliance, multipliers, and the
/// evaluated values/gradients they produce.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub kind: ConstraintKind,
    /// Flat vertex indices, `arity` per constraint.
    pub topology: Vec<usize>,
    /// Rest lengths (distance only).
    pub rest_lengths: Vec<f64>,
    /// Inverse rest-shape matrices (ARAP only).
    pub inv_rest: Vec<Matrix3<f64>>,
    /// Rest volumes in m^3 (ARAP only).
    pub rest_volumes: Vec<f64>,
    /// Per-constraint compliance over squared timestep.
    pub alpha_tilde: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Evaluated constraint values.
    pub c: Vec<f64>,
    /// Evaluated gradients, `arity` per constraint.
    pub grads: Vec<Vector3<f64>>,
    /// Degenerate/invalid constraints contribute zero gradients.
    pub degenerate: Vec<bool>,
}

impl ConstraintSet {
    pub fn distance(edges: &[[usize; 2]], rest_lengths: Vec<f64>, alpha_tilde: Vec<f64>) -> ConstraintSet {
        let m = edges.len();
        assert_eq!(rest_lengths.len(), m);
        assert_eq!(alpha_tilde.len(), m);
        assert!(alpha_tilde.iter().all(|&a| a >= 0.0));
        ConstraintSet {
            kind: ConstraintKind::Distance,
            topology: edges.iter().flatten().copied().collect(),
            rest_lengths,
            inv_rest: Vec::new(),
            rest_volumes: Vec::new(),
            alpha_tilde,
            lambda: vec![0.0; m],
            c: vec![0.0; m],
            grads: vec![Vector3::zeros(); 2 * m],
            degenerate: vec![false; m],
        }
    }

    /// ARAP set from rest positions; rest-shape matrices and volumes are
    /// precomputed here. Tetrahedra must be positively oriented.
    pub fn arap(
        tets: &[[usize; 4]],
        rest_positions: &[Vector3<f64>],
        alpha_tilde: Vec<f64>,
    ) -> ConstraintSet {
        let m = tets.len();
        assert_eq!(alpha_tilde.len(), m);
        let mut inv_rest = Vec::with_capacity(m);
        let mut rest_volumes = Vec::with_capacity(m);
        for t in tets {
            let dm = edge_matrix(
                rest_positions[t[0]],
                rest_positions[t[1]],
                rest_positions[t[2]],
                rest_positions[t[3]],
            );
            let vol = dm.determinant() / 6.0;
            assert!(vol > 0.0, "tetrahedron must have positive rest volume");
            inv_rest.push(dm.try_inverse().expect("rest shape must be invertible"));
            rest_volumes.push(vol);
        }
        ConstraintSet {
            kind: ConstraintKind::Arap,
            topology: tets.iter().flatten().copied().collect(),
            rest_lengths: Vec::new(),
            inv_rest,
            rest_volumes,
            alpha_tilde,
            lambda: vec![0.0; m],
            c: vec![0.0; m],
            grads: vec![Vector3::zeros(); 4 * m],
            degenerate: vec![false; m],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_tilde.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    /// Vertex indices of constraint `j`.
    pub fn verts(&self, j: usize) -> &[usize] {
        let a = self.arity();
        &self.topology[a * j..a * (j + 1)]
    }

    pub fn reset_lambda(&mut self) {
        self.lambda.iter_mut().for_each(|l| *l = 0.0);
    }
}

fn edge_matrix(
    x0: Vector3<f64>,
    x1: Vector3<f64>,
    x2: Vector3<f64>,
    x3: Vector3<f64>,
) -> Matrix3<f64> {
    Matrix3::from_columns(&[x1 - x0, x2 - x0, x3 - x0])
}

/// Evaluates C and gradients for whichever kind the set holds.
pub fn eval_constraints(state: &ParticleState, cs: &mut ConstraintSet) {
    match cs.kind {
        ConstraintKind::Distance => eval_distance(state, cs),
        ConstraintKind::Arap => eval_arap(state, cs),
    }
}

/// C_j = |x_a - x_b| - L_j with unit-vector gradients.
/// Edges shorter than [`EPS_LEN`] are flagged degenerate with zero gradients.
pub fn eval_distance(state: &ParticleState, cs: &mut ConstraintSet) {
    assert_eq!(cs.kind, ConstraintKind::Distance);
    for j in 0..cs.len() {
        let a = cs.topology[2 * j];
        let b = cs.topology[2 * j + 1];
        let d = state.x[a] - state.x[b];
        let len = d.norm();
        cs.c[j] = len - cs.rest_lengths[j];
        if len <= EPS_LEN {
            cs.grads[2 * j] = Vector3::zeros();
            cs.grads[2 * j + 1] = Vector3::zeros();
            cs.degenerate[j] = true;
        } else {
            let g = d / len;
            cs.grads[2 * j] = g;
            cs.grads[2 * j + 1] = -g;
            cs.degenerate[j] = false;
        }
    }
}

/// Rotation factor of the polar decomposition F = R S.
///
/// R = U V^T from the SVD of F, with the column of the smallest singular
/// value flipped when det(U V^T) < 0 so det(R) = +1 always. F = 0 maps to
/// the identity by convention.
pub fn polar_rotation(f: &Matrix3<f64>) -> Matrix3<f64> {
    if f.iter().all(|&v| v == 0.0) {
        return Matrix3::identity();
    }
    let svd = f.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut min_idx = 0;
        for i in 1..3 {
            if svd.singular_values[i] < svd.singular_values[min_idx] {
                min_idx = i;
            }
        }
        let mut u_fixed = u;
        for i in 0..3 {
            u_fixed[(i, min_idx)] = -u_fixed[(i, min_idx)];
        }
        r = u_fixed * v_t;
    }
    r
}

/// ARAP constraint C_j = |F - R|_F^2 with the rotation-held-fixed gradient
/// 2 (F - R) Dm^-T distributed onto the four vertices. The vertex-0 gradient
/// is minus the sum of the other three, so translation invariance is exact.
pub fn eval_arap(state: &ParticleState, cs: &mut ConstraintSet) {
    assert_eq!(cs.kind, ConstraintKind::Arap);
    for j in 0..cs.len() {
        let t = &cs.topology[4 * j..4 * j + 4];
        let ds = edge_matrix(state.x[t[0]], state.x[t[1]], state.x[t[2]], state.x[t[3]]);
        let f = ds * cs.inv_rest[j];
        if !f.iter().all(|v| v.is_finite()) {
            cs.c[j] = 0.0;
            for k in 0..4 {
                cs.grads[4 * j + k] = Vector3::zeros();
            }
            cs.degenerate[j] = true;
            continue;
        }
        let r = polar_rotation(&f);
        let diff = f - r;
        cs.c[j] = diff.norm_squared();
        let g = 2.0 * diff * cs.inv_rest[j].transpose();
        let g1: Vector3<f64> = g.column(0).into();
        let g2: Vector3<f64> = g.column(1).into();
        let g3: Vector3<f64> = g.column(2).into();
        cs.grads[4 * j] = -(g1 + g2 + g3);
        cs.grads[4 * j + 1] = g1;
        cs.grads[4 * j + 2] = g2;
        cs.grads[4 * j + 3] = g3;
        cs.degenerate[j] = false;
    }
}

/// One stored entry of a shared-vertex list: the vertex id and its local
/// slot within each of the two adjacent constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedVertex {
    pub vertex: usize,
    pub local_i: u8,
    pub local_j: u8,
}

/// Fixed dual-system sparsity: one row per constraint, off-diagonals sorted
/// by column with the diagonal stored last, plus per-entry shared-vertex
/// lists driving the off-diagonal sums.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    pub n: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    /// Range into `shared` per stored entry; empty for diagonal slots.
    pub shared_offsets: Vec<usize>,
    pub shared: Vec<SharedVertex>,
}

impl SparsityPattern {
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }
}

/// Builds the adjacency pattern: (i, j) is stored iff constraints i and j
/// share at least one vertex, i != j, plus the diagonal in each row's last
/// slot. Deterministic: off-diagonals ascend by column.
pub fn build_pattern(cs: &ConstraintSet) -> SparsityPattern {
    let m = cs.len();
    let arity = cs.arity();
    let n_verts = cs.topology.iter().copied().max().map_or(0, |v| v + 1);
    // vertex -> (constraint, local slot) adjacency
    let mut vert_offsets = vec![0usize; n_verts + 1];
    for &v in &cs.topology {
        vert_offsets[v + 1] += 1;
    }
    for v in 0..n_verts {
        vert_offsets[v + 1] += vert_offsets[v];
    }
    let mut vert_adj = vec![(0usize, 0u8); cs.topology.len()];
    let mut cursor = vert_offsets.clone();
    for j in 0..m {
        for (slot, &v) in cs.verts(j).iter().enumerate() {
            vert_adj[cursor[v]] = (j, slot as u8);
            cursor[v] += 1;
        }
    }

    let mut row_offsets = Vec::with_capacity(m + 1);
    row_offsets.push(0usize);
    let mut col_indices = Vec::new();
    let mut shared_offsets = vec![0usize];
    let mut shared = Vec::new();
    // per-row scratch of neighbor -> shared vertices
    let mut neighbor: Vec<(usize, SharedVertex)> = Vec::new();
    for i in 0..m {
        neighbor.clear();
        for (slot_i, &v) in cs.verts(i).iter().enumerate() {
            for &(j, slot_j) in &vert_adj[vert_offsets[v]..vert_offsets[v + 1]] {
                if j != i {
                    neighbor.push((
                        j,
                        SharedVertex {
                            vertex: v,
                            local_i: slot_i as u8,
                            local_j: slot_j,
                        },
                    ));
                }
            }
        }
        // group by neighbor, shared vertices ordered by vertex id so the
        // mirrored entry (j, i) accumulates in the identical order
        neighbor.sort_by_key(|&(j, sv)| (j, sv.vertex));
        let mut k = 0;
        while k < neighbor.len() {
            let j = neighbor[k].0;
            col_indices.push(j);
            while k < neighbor.len() && neighbor[k].0 == j {
                shared.push(neighbor[k].1);
                k += 1;
            }
            shared_offsets.push(shared.len());
        }
        // diagonal last
        col_indices.push(i);
        shared_offsets.push(shared.len());
        row_offsets.push(col_indices.len());
    }
    SparsityPattern {
        n: m,
        row_offsets,
        col_indices,
        shared_offsets,
        shared,
    }
}

/// Allocates a diag-last matrix shell matching the pattern.
pub fn matrix_from_pattern(pattern: &SparsityPattern) -> SparseMatrix {
    SparseMatrix {
        n_rows: pattern.n,
        n_cols: pattern.n,
        row_offsets: pattern.row_offsets.clone(),
        col_indices: pattern.col_indices.clone(),
        values: vec![0.0; pattern.nnz()],
        diag_last: true,
    }
}

/// Assembles the dual system matrix into a fresh shell.
pub fn assemble_system(
    cs: &ConstraintSet,
    inv_mass: &[f64],
    pattern: &SparsityPattern,
) -> Result<SparseMatrix> {
    let mut a = matrix_from_pattern(pattern);
    assemble_into(cs, inv_mass, pattern, &mut a)?;
    Ok(a)
}

/// Writes A_ii = sum_v m_v^-1 |g_iv|^2 + alpha_tilde_i and
/// A_ij = sum_{v shared} m_v^-1 (g_iv . g_jv) into the fixed structure.
/// Only `values` changes; offsets and columns stay untouched.
pub fn assemble_into(
    cs: &ConstraintSet,
    inv_mass: &[f64],
    pattern: &SparsityPattern,
    a: &mut SparseMatrix,
) -> Result<()> {
    if pattern.n != cs.len() {
        return Err(Error::DimensionMismatch {
            context: "assemble_into pattern/topology constraint count",
            expected: pattern.n,
            got: cs.len(),
        });
    }
    if a.n_rows != pattern.n || a.nnz() != pattern.nnz() {
        return Err(Error::DimensionMismatch {
            context: "assemble_into matrix shell size",
            expected: pattern.nnz(),
            got: a.nnz(),
        });
    }
    let arity = cs.arity();
    for i in 0..pattern.n {
        let lo = pattern.row_offsets[i];
        let hi = pattern.row_offsets[i + 1];
        // off-diagonals first, diagonal sits in the last slot
        for k in lo..hi - 1 {
            let mut acc = 0.0;
            for sv in &pattern.shared[pattern.shared_offsets[k]..pattern.shared_offsets[k + 1]] {
                let gi = cs.grads[arity * i + sv.local_i as usize];
                let j = pattern.col_indices[k];
                let gj = cs.grads[arity * j + sv.local_j as usize];
                acc += inv_mass[sv.vertex] * gi.dot(&gj);
            }
            a.values[k] = acc;
        }
        let mut diag = cs.alpha_tilde[i];
        for (slot, &v) in cs.verts(i).iter().enumerate() {
            diag += inv_mass[v] * cs.grads[arity * i + slot].norm_squared();
        }
        a.values[hi - 1] = diag;
    }
    Ok(())
}

/// Dual right-hand side b_j = -C_j - alpha_tilde_j lambda_j.
pub fn rhs(cs: &ConstraintSet) -> Vec<f64> {
    (0..cs.len())
        .map(|j| -cs.c[j] - cs.alpha_tilde[j] * cs.lambda[j])
        .collect()
}

/// Position correction dx_v = m_v^-1 sum_j g_jv dlambda_j.
/// Pinned vertices (inv_mass 0) receive exactly zero.
pub fn apply_dx(
    cs: &ConstraintSet,
    inv_mass: &[f64],
    dlambda: &[f64],
) -> Vec<Vector3<f64>> {
    assert_eq!(dlambda.len(), cs.len());
    let arity = cs.arity();
    let mut dx = vec![Vector3::zeros(); inv_mass.len()];
    for j in 0..cs.len() {
        let dl = dlambda[j];
        for (slot, &v) in cs.verts(j).iter().enumerate() {
            dx[v] += cs.grads[arity * j + slot] * (inv_mass[v] * dl);
        }
    }
    dx
}

/// ARAP compliance over squared timestep: 1 / (mu V_tet dt^2).
pub fn make_compliance(mu: f64, v_tet: f64, dt: f64) -> Result<f64> {
    if mu <= 0.0 || v_tet <= 0.0 || dt <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "make_compliance needs positive inputs (mu={mu}, V={v_tet}, dt={dt})"
        )));
    }
    Ok(1.0 / (mu * v_tet * dt * dt))
}
