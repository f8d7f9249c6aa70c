//! Sparse and small-dense linear-algebra kernels.
//!
//! Everything the assembly, AMG setup, and solve phases need: a CSR matrix
//! that supports both the sorted-column and the diagonal-last row layout,
//! sparse matvec/transpose/Galerkin products, a pivoted dense factorization
//! for the coarsest level, thin QR for near-kernel injection, and a power
//! method for spectral bounds.

mod csr;
mod dense;
pub mod mm;

pub use csr::{galerkin_product, power_method_lmax, spmv, spmv_into, transpose, SparseMatrix};
pub use dense::{dense_solve, thin_qr, DenseBlock, DenseFactor, QrRank};
