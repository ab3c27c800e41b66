pub mod continuation;
pub mod error;
pub mod fredholm;
pub mod geometry;
pub mod io;
pub mod operator;
pub mod scalar;
pub mod spectral;
pub mod uniformization;

pub use error::{Error, Result};
