//! Dimension-drop algebras, diagonalizable embeddings between them, and the
//! approximate intertwining machinery built on top.

pub mod algebra;
pub mod config;
pub mod error;
pub mod expr;
pub mod fraisse;
pub mod linalg;
pub mod matfn;
pub mod morphism;
pub mod numtheory;
pub mod pl;
pub mod polar;
pub mod rational;
pub mod tensor;
pub mod trace;
pub mod unitary;

pub use error::{Error, Result};
pub use numtheory::PrimePair;
pub use rational::Q;
