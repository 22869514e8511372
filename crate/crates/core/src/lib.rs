pub mod dynamics;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod linalg;
pub mod models;
pub mod tolerances;

pub use error::{Error, Result};
