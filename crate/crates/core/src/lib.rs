//! Stability of utility maximization on finite scenario trees.

// `!(x > 0.0)` rejects NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod entropic;
pub mod harness;
pub mod market;
pub mod optimize;
pub mod positive;
pub mod pricing;
pub mod probes;
pub mod quadrature;
pub mod roots;
pub mod utility;
