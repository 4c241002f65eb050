//! Closed-form fields evaluated on jets.

use std::sync::Arc;

use crate::autodiff::{Jet, Order, Tape};
use crate::error::Result;

/// A smooth field `x -> F(x)` built from jet arithmetic, so that its input
/// derivatives come for free. Takes a `batch x dim` jet and returns a
/// `batch x width` jet.
pub type Field = Arc<dyn for<'t> Fn(Jet<'t>) -> Jet<'t> + Send + Sync>;

pub fn field<F>(f: F) -> Field
where
    F: for<'t> Fn(Jet<'t>) -> Jet<'t> + Send + Sync + 'static,
{
    Arc::new(f)
}

/// Field with constant value `c` (width 1).
pub fn constant(c: f64) -> Field {
    field(move |x: Jet<'_>| x.lit(c))
}

/// Values of a field at a batch of points, row-major.
pub fn eval(f: &Field, points: &[f64], dim: usize) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let x = tape.input(points, dim, Order::Zero)?;
    let y = f(x);
    tape.check_finite()?;
    let batch = points.len() / dim;
    let w = y.width();
    let vals = y.values();
    // constants broadcast against the batch
    if y.batch() == batch {
        Ok(vals)
    } else {
        Ok(vals.iter().cycle().take(batch * w).copied().collect())
    }
}

/// `‖x‖²` per row.
pub fn norm_sq<'t>(x: Jet<'t>) -> Jet<'t> {
    x.norm_sq()
}

/// `Σ_i x_i` per row.
pub fn coord_sum<'t>(x: Jet<'t>) -> Jet<'t> {
    x.sum_width()
}

/// `Π_i x_i (1 - x_i)` over the listed coordinates.
pub fn bubble<'t>(x: Jet<'t>, dims: &[usize]) -> Jet<'t> {
    let mut acc: Option<Jet<'t>> = None;
    for &i in dims {
        let xi = x.col(i);
        let f = xi * (1.0 - xi);
        acc = Some(match acc {
            Some(a) => a * f,
            None => f,
        });
    }
    acc.unwrap_or_else(|| x.lit(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_broadcasts_constants() {
        let f = constant(2.5);
        assert_eq!(eval(&f, &[0.0, 1.0, 2.0, 3.0], 2).unwrap(), vec![2.5, 2.5]);
    }

    #[test]
    fn bubble_vanishes_on_faces() {
        let f = field(|x: Jet<'_>| bubble(x, &[0, 1]));
        let v = eval(&f, &[0.0, 0.3, 0.5, 1.0, 0.5, 0.5], 2).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 0.0);
        assert!((v[2] - 0.0625).abs() < 1e-16);
    }
}
