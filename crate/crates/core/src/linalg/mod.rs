//! Sparse symmetric storage, envelope LDLᵀ, and preconditioned conjugate gradients.

mod cg;
mod factor;
mod sparse;

pub use cg::{pcg, CgmState, LinearOperator, Pcg, Perturbed, Preconditioner};
pub use factor::{reverse_cuthill_mckee, EnvelopeInverse, Factorization};
pub use sparse::{SparseSymmetric, SparsityPattern};

/// Factorizes an SPD matrix for repeated solves.
pub fn factorize_spd(k: &SparseSymmetric) -> crate::Result<Factorization> {
    Factorization::new(k)
}
