//! Variational calculus of spectral functions `g = θ∘λ` on real symmetric
//! matrices, with brute-force oracles for every closed form.

pub mod error;
pub mod extreal;
pub mod oracle;
pub mod report;
pub mod perturb;
pub mod sampling;
pub mod spectral;
pub mod symfun;
pub mod symmat;
pub mod tol;
pub mod verify;

pub use error::{Error, Result};
pub use extreal::ExtReal;
pub use symfun::SymmetricFunctionSpec;
pub use symmat::{EigenSystem, SymMatrix};
