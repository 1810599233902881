//! Split convex feasibility: Landweber operators, regularity moduli and
//! CQ-type iterations with Fejér and rate audits.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixops;
pub mod harness;
pub mod landweber;
pub mod linop;
pub mod oracle;
pub mod regularity;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use linop::LinearMap;
