//! Delta-method machinery for diagonal cubic forms in 4 or 6 variables:
//! complete exponential sums and their bias/error split, discriminant and
//! jet predicates, linear-subspace lattices with dual densities, oscillatory
//! integrals, finite-field point counts, and the singular series. Every exact
//! identity carries an independent brute-force oracle at desk scale.

pub mod analytic;
pub mod delta;
pub mod arith;
pub mod error;
pub mod expsums;
pub mod forms;
pub mod lattices;
pub mod pointcount;

pub use error::{Error, Result};
