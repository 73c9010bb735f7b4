pub mod costcalc;
pub mod error;
pub mod eval;
pub mod memstore;
pub mod pq;
pub mod probe;
pub mod training;
pub mod vq;

pub use error::{Error, Result};
