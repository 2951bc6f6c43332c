pub mod error;
pub mod geometry;
pub mod hbs;
pub mod kernels;
pub mod linalg;
pub mod periodic;
pub mod postprocess;
pub mod sommerfeld;
pub mod specialfn;
pub mod transmission;

pub use error::{Error, Result};
