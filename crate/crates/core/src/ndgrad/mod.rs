//! Dense `f64` arrays with tape-based reverse-mode differentiation.
//!
//! Values are recorded on a [`Tape`] as they are computed; [`Tape::backward`]
//! then walks the record in reverse and returns the gradient of a scalar loss
//! for every tracked leaf. Every primitive rejects non-finite results instead
//! of letting NaN/∞ propagate.

mod array;
pub mod gradcheck;
pub(crate) mod kernels;
mod tape;

pub use array::Array;
pub use gradcheck::{check_gradients, rel_err, GradCheck, FD_STEP, REL_FLOOR};
pub use tape::{softmax_along, Gradients, Padding, Span, Tape, Unary, Var};

pub(crate) use kernels::log_sum_exp;

/// Plain `[m×k]·[k×n]` product, no tape.
pub fn matmul(a: &Array, b: &Array) -> crate::Result<Array> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(crate::Error::ShapeMismatch {
            op: "matmul",
            detail: format!("{:?} × {:?}", a.shape(), b.shape()),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    kernels::matmul_acc(a.data(), b.data(), &mut out, m, k, n);
    Array::new(&[m, n], out)
}

/// Plain tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    kernels::gelu(x)
}
