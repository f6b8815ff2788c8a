//! Exact tools for matrix Kloosterman sums, primitive matrices modulo `q`, and rational points on
//! expanding horospheres in the space of unimodular lattices.

pub mod arith;
pub mod error;
pub mod expsum;
pub mod geomnum;
pub mod horosphere;
pub mod kloosterman;
pub mod modring;
pub mod primitive;
pub mod rankcount;
pub mod real;
pub mod rng;
pub mod smallsol;

pub use error::{Error, Result};
pub use expsum::ExpSum;
pub use modring::{IntMatrix, ModMatrix, Modulus};
