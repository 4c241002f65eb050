//! Batched forward-over-reverse differentiation.
//!
//! Network inputs are lifted into jets carrying first and pure second
//! derivatives along every input coordinate. Expressions over jets are
//! recorded on a [`Tape`] whose reverse sweep yields parameter gradients of
//! losses that contain those input derivatives.

mod jet;
pub(crate) mod kernels;
mod tape;

pub use jet::Jet;
pub use tape::{Order, ParamBlock, Tape};

use crate::error::Result;

/// Lifts a single point; convenience wrapper around [`Tape::input`].
pub fn lift_input<'t>(tape: &'t Tape, x: &[f64], order: Order) -> Result<Jet<'t>> {
    tape.input(x, x.len(), order)
}

/// Gradient of a scalar expression at one point.
pub fn grad_wrt_inputs<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(Jet<'t>) -> Jet<'t>,
{
    let tape = Tape::new();
    let xi = lift_input(&tape, x, Order::First)?;
    let y = f(xi);
    tape.check_finite()?;
    let g = y.grad();
    Ok(g.values())
}

/// Laplacian of a scalar expression at one point.
pub fn laplacian_wrt_inputs<F>(f: F, x: &[f64]) -> Result<f64>
where
    F: for<'t> Fn(Jet<'t>) -> Jet<'t>,
{
    let tape = Tape::new();
    let xi = lift_input(&tape, x, Order::Second)?;
    let y = f(xi);
    tape.check_finite()?;
    let dims: Vec<usize> = (0..x.len()).collect();
    y.laplacian(&dims).scalar()
}
