//! The square Z_{p,q} ⊗ Z_{p,q}, the embeddings between it and the
//! diagonal algebras, and the half-flip step.

pub mod element;
pub mod morphism;

pub use element::{SquareNorm, TensorElement, Term};
pub use morphism::{dominate_reduce, rho_iota, shuffle_permutation, Gen, Object, ReductionReport, Rho, TMorphism, Val};
pub mod ssa;

pub use ssa::{
    half_flip_defect, nearest_unitary, run_ssa_step, search_half_flip_unitary, ssa_step, verify_ssa_certificate,
    HalfFlipParam, NearestUnitary, SsaInput, SsaStep, StarDefect, Theta,
};
