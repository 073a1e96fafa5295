#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod galerkin;
pub mod geometry;
pub mod membrane;
pub mod noise;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
