#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cell_problem;
pub mod cli;
pub mod config;
pub mod error;
pub mod fem;
pub mod fine_solver;
pub mod geometry;
pub mod homog_solver;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod report;

pub use error::{Error, Result};
