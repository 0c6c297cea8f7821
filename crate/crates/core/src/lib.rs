pub mod error;
pub mod fidelity;
pub mod fock;
pub mod harness;
pub mod format;
pub mod linalg;
pub mod povm;
pub mod qdt;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
