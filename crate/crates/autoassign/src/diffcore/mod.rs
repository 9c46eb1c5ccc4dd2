//! Reverse-mode automatic differentiation over dense f64 arrays.
//!
//! Record-as-you-run: each operation on a tracked [`DiffArray`] appends a
//! node to its [`Tape`]; [`Tape::backward`] replays the record once, in
//! reverse, and accumulates gradients. Shapes are data-dependent (the number
//! of in-box locations varies per scene), so there is no static graph.
//!
//! Everything is f64. At desk scale, precision is cheaper than debugging
//! drift, and the finite-difference checker needs the headroom.

mod array;
mod conv;
mod data;
mod error;
mod gradcheck;
mod param;
mod tape;

pub use array::DiffArray;
pub use error::{DiffError, DiffResult};
pub use gradcheck::{
    grad_check, grad_check_excluding, relative_error, CoordinateError, GradCheckReport,
    DEFAULT_EPSILON,
};
pub use param::{sgd_step, Parameter};
pub use tape::{Gradients, Tape};
