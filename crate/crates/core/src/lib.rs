//! Certificates for sharp, strong and unique minima of group-sparse
//! basis pursuit, with recovery solvers to check the predicted error rates.

pub mod certificates;
pub mod cone;
pub mod ensemble;
pub mod error;
pub mod groups;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod problem;
pub mod recovery;

pub use error::{Error, Result};
