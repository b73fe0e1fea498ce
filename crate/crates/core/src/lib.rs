#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charging;
pub mod error;
pub mod io;
pub mod lp;
pub mod model;
pub mod network;
pub mod projection;
pub mod simulator;
pub mod synth;
pub mod transport;
pub mod vi;

pub use error::{Error, Result};
