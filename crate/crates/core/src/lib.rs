pub mod bilinear;
pub mod error;
pub mod eval;
pub mod imt;
pub mod io;
pub mod linear;
pub mod oae;
pub mod rng;
pub mod signal;
pub mod sst;
pub mod windows;

pub use error::{Error, Result};
