//! Trajectory Gramians and fixed-point synthesis of minimum-energy controls
//! for control-affine systems `x' = N_t(x) + B(t,x) u`.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod expr;
pub mod flow;
pub mod freeze;
pub mod gramian;
pub mod linalg;
pub mod model;
pub mod synthesis;
pub mod window;

pub use error::{Error, ErrorKind, Result};
