//! Counting integer zeros of systems of forms and the local and real
//! densities that predict those counts.

pub mod aux;
pub mod blocks;
pub mod densities;
pub mod error;
pub mod exact;
pub mod exp_sums;
pub mod forms;
pub mod harness;
pub mod lattice;
pub mod numeric;
pub mod pencil;
pub mod singular_integral;

pub use error::{Error, Result};
