// negated float comparisons in this crate are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod community;
pub mod config;
pub mod error;
pub mod features;
pub mod io;
pub mod labels;
pub mod layout;
pub mod matrix;
pub mod pipeline;
pub mod mixture;
pub mod qc;
pub mod rng;
pub mod simulate;
pub mod sparse;
pub mod spectral;
pub mod validate;

pub use error::{Error, Result};
