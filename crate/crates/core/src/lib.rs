pub mod arith;
pub mod config;
pub mod ekstats;
pub mod error;
pub mod fpoly;
pub mod group;
pub mod matrix;
pub mod par;
pub mod poly;
pub mod quotient;
pub mod runner;
pub mod sieve;
pub mod spectra;
pub mod stats;
pub mod walker;

pub use error::{Error, Result};
