//! Dense `f64` arrays with define-by-run reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_many, finite_diff_check_sampled};
pub use tape::{Elementwise, Tape, Var};
pub use tensor::Tensor;
