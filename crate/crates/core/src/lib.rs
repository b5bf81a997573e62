//! Gluing Hilbert modules over finite-dimensional C*-algebras.
//!
//! A finite-dimensional C*-algebra `A = ⊕ₖ M_{n_k}` has a discrete primitive
//! ideal space, so every subset of blocks is closed and a closed cover is a
//! finite family of block sets. This crate models the category of gluing
//! data over such a cover as concrete block matrices, computes the gluing
//! functor as a kernel, and checks numerically that pulling apart and gluing
//! are mutually inverse, together with the tensor-product identities that
//! drive the argument and the Morita/Picard consequences.
//!
//! Module map:
//!
//! - [`numlin`]: dense complex matrices, SVD, kernels, norms.
//! - [`cstar`]: algebras, covers, restrictions, the embedding `A → B`.
//! - [`hmod`]: Hilbert modules, vectors, adjointable maps.
//! - [`tensor`]: models of `X⊗_A B`, `Z⊗_A B`, `Z⊗_A B⊗_A B` and the
//!   structural maps between them, plus a brute-force balanced tensor oracle.
//! - [`glue`]: gluing data, the pull-apart and gluing functors, and the
//!   descent identity checks.
//! - [`morita`]: equivalence bimodules, gluing of Morita equivalences, the
//!   2-cocycle obstruction and Picard conjugation.
//! - [`gen`]: seeded random instances.
//! - [`toolkit`]: JSON formats, reports, and the CLI driver.

pub mod cstar;
pub mod error;
pub mod gen;
pub mod glue;
pub mod hmod;
pub mod morita;
pub mod numlin;
pub mod tensor;
pub mod toolkit;

pub use error::{Error, Result};
