//! Numerical laboratory for orbits of discrete groups of hyperbolic isometries.

pub mod clifford;
pub mod hyperbolic;
pub mod groups;
pub mod orbits;
pub mod pointsets;
pub mod patterson;
pub mod empirical;
pub mod limits;
pub mod packing;
