// `!(x >= lo)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod consistency;
pub mod error;
pub mod gateway;
pub mod medconf;
pub mod model;
pub mod oracles;
pub mod prompts;
pub mod registry;
pub mod retrieval;
pub mod text;
pub mod token;
pub mod verbalized;

pub use error::{Error, Result};
