//! Dispersive decay for the discrete Schrödinger equation on the layered
//! King's grid and related `Z^d` Cayley graphs.

pub mod acceptance;
pub mod appendix;
pub mod bessel;
pub mod decay;
pub mod dnls;
pub mod error;
pub mod newton;
pub mod oscillatory;
pub mod singularities;
pub mod symbol;

pub use error::{Error, Result};
