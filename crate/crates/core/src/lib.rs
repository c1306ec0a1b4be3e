pub mod adjoint;
pub mod cli;
pub mod conditions;
pub mod config;
pub mod error;
pub mod export;
pub mod forward;
pub mod fracquad;
pub mod fundmatrix;
pub mod grid;
pub mod problem;
pub mod variation;

pub use error::{Error, Result};
pub use fracquad::Order;
pub use grid::TimeGrid;
pub use problem::{ControlSet, ControlSignal, Example, ProblemSpec};
