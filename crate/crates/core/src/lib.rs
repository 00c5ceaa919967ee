pub mod characteristics;
#[cfg(feature = "cli")]
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod identities;
mod krylov;
pub mod nonresonance;
pub mod numerics;
mod par;
pub mod problem;
pub mod report;
pub mod solver;
pub mod transport;
pub mod wave2fos;

pub use error::{Error, Result};
pub use par::configure_threads_from_env;
