use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{Binary, Order, Tape, Unary};
use crate::activation::Activation;
use crate::error::{Error, Result};

/// Handle to a batched node on a [`Tape`].
///
/// A jet holds, for every batch row and every width entry, a value together
/// with its first and pure second derivatives along the lifted input
/// coordinates (as far as its [`Order`] allows).
#[derive(Clone, Copy)]
pub struct Jet<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Jet<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = self.tape.layout(self.id);
        f.debug_struct("Jet")
            .field("id", &self.id)
            .field("batch", &l.batch)
            .field("width", &l.width)
            .field("order", &l.order)
            .finish()
    }
}

impl<'t> Jet<'t> {
    pub(crate) fn new(tape: &'t Tape, id: usize) -> Self {
        Jet { tape, id }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn batch(&self) -> usize {
        self.tape.layout(self.id).batch
    }

    pub fn width(&self) -> usize {
        self.tape.layout(self.id).width
    }

    pub fn order(&self) -> Order {
        self.tape.layout(self.id).order
    }

    /// Number of input directions carried (0 unless the order is first or second).
    pub fn dim(&self) -> usize {
        self.tape.layout(self.id).nt()
    }

    fn same_tape(&self, other: &Jet<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "jets belong to different tapes"
        );
    }

    fn wrap(&self, id: usize) -> Jet<'t> {
        Jet::new(self.tape, id)
    }

    fn component(&self, c: usize) -> Vec<f64> {
        let node = self.tape.node(self.id);
        let l = node.layout;
        let comps = l.comps();
        let mut out = Vec::with_capacity(l.batch * l.width);
        for b in 0..l.batch {
            if c < comps {
                let base = (b * comps + c) * l.width;
                out.extend_from_slice(&node.value[base..base + l.width]);
            } else {
                out.extend(std::iter::repeat_n(0.0, l.width));
            }
        }
        out
    }

    /// Values, row-major `batch x width`.
    pub fn values(&self) -> Vec<f64> {
        self.component(0)
    }

    /// Derivatives along input coordinate `i`, row-major `batch x width`.
    pub fn tangent(&self, i: usize) -> Vec<f64> {
        let l = self.tape.layout(self.id);
        match l.order {
            Order::Constant => vec![0.0; l.batch * l.width],
            Order::First | Order::Second => {
                assert!(i < l.dim, "direction {i} out of range");
                self.component(1 + i)
            }
            Order::Zero => panic!("value-only jet carries no tangents"),
        }
    }

    /// Pure second derivatives along input coordinate `i`.
    pub fn curvature(&self, i: usize) -> Vec<f64> {
        let l = self.tape.layout(self.id);
        match l.order {
            Order::Constant => vec![0.0; l.batch * l.width],
            Order::Second => {
                assert!(i < l.dim, "direction {i} out of range");
                self.component(1 + l.dim + i)
            }
            _ => panic!("jet of order {:?} carries no curvature", l.order),
        }
    }

    /// The single value of a `1 x 1` jet.
    pub fn scalar(&self) -> Result<f64> {
        let l = self.tape.layout(self.id);
        if l.batch != 1 || l.width != 1 {
            return Err(Error::NotScalar {
                batch: l.batch,
                width: l.width,
            });
        }
        Ok(self.tape.node(self.id).value[0])
    }

    fn unary(self, u: Unary) -> Jet<'t> {
        self.wrap(self.tape.unary(self.id, u))
    }

    pub fn exp(self) -> Jet<'t> {
        self.unary(Unary::Exp)
    }

    pub fn sin(self) -> Jet<'t> {
        self.unary(Unary::Sin)
    }

    pub fn cos(self) -> Jet<'t> {
        self.unary(Unary::Cos)
    }

    pub fn sqrt(self) -> Jet<'t> {
        self.unary(Unary::Sqrt)
    }

    pub fn recip(self) -> Jet<'t> {
        self.unary(Unary::Recip)
    }

    pub fn powi(self, n: i32) -> Jet<'t> {
        self.unary(Unary::Powi(n))
    }

    /// `max(x, 0)`.
    pub fn relu(self) -> Jet<'t> {
        self.unary(Unary::Relu)
    }

    pub fn square(self) -> Jet<'t> {
        self * self
    }

    pub fn activate(self, act: Activation) -> Jet<'t> {
        self.unary(Unary::Act(act))
    }

    /// The activation's derivative applied elementwise.
    pub fn activate_deriv(self, act: Activation) -> Jet<'t> {
        self.unary(Unary::ActDeriv(act))
    }

    pub fn scale(self, c: f64) -> Jet<'t> {
        self.wrap(self.tape.scale(self.id, c))
    }

    pub fn shift(self, c: f64) -> Jet<'t> {
        self.wrap(self.tape.shift(self.id, c))
    }

    pub fn col(self, j: usize) -> Jet<'t> {
        self.cols(j, 1)
    }

    pub fn cols(self, start: usize, len: usize) -> Jet<'t> {
        if start == 0 && len == self.width() {
            return self;
        }
        self.wrap(self.tape.cols(self.id, start, len))
    }

    /// Columns concatenated along the width.
    pub fn concat(parts: &[Jet<'t>]) -> Jet<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        for p in &parts[1..] {
            parts[0].same_tape(p);
        }
        if parts.len() == 1 {
            return parts[0];
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        parts[0].wrap(parts[0].tape.concat(&ids))
    }

    /// Appends zero columns up to `width`.
    pub fn pad(self, width: usize) -> Jet<'t> {
        if width == self.width() {
            return self;
        }
        self.wrap(self.tape.pad(self.id, width))
    }

    pub fn sum_width(self) -> Jet<'t> {
        if self.width() == 1 {
            return self;
        }
        self.wrap(self.tape.sum_width(self.id))
    }

    pub fn dot(self, other: Jet<'t>) -> Jet<'t> {
        (self * other).sum_width()
    }

    /// Sum of squares across the width.
    pub fn norm_sq(self) -> Jet<'t> {
        self.square().sum_width()
    }

    /// Mean over the batch (values only).
    pub fn mean_batch(self) -> Jet<'t> {
        self.wrap(self.tape.mean_batch(self.id))
    }

    /// Mean over the batch of the squared Euclidean norm across the width.
    pub fn mean_sq(self) -> Jet<'t> {
        self.norm_sq().mean_batch()
    }

    /// Derivatives along the listed input coordinates, laid out as
    /// `width x dims.len()` per batch row (entry `(w, j)` is `d value_w / d x_dims[j]`).
    pub fn jacobian(self, dims: &[usize]) -> Jet<'t> {
        self.wrap(self.tape.jacobian(self.id, dims))
    }

    /// Gradient with respect to all lifted coordinates.
    pub fn grad(self) -> Jet<'t> {
        let d = self.dim();
        let dims: Vec<usize> = (0..d).collect();
        self.jacobian(&dims)
    }

    /// Derivative along a single input coordinate.
    pub fn partial(self, i: usize) -> Jet<'t> {
        self.jacobian(&[i])
    }

    /// `sum_j d value_j / d x_dims[j]`; the width must equal `dims.len()`.
    pub fn divergence(self, dims: &[usize]) -> Jet<'t> {
        self.wrap(self.tape.divergence(self.id, dims))
    }

    /// `sum_j d^2 value / d x_dims[j]^2`, per width entry.
    pub fn laplacian(self, dims: &[usize]) -> Jet<'t> {
        self.wrap(self.tape.laplacian(self.id, dims))
    }

    /// Pure second derivative along one input coordinate.
    pub fn second_partial(self, i: usize) -> Jet<'t> {
        self.laplacian(&[i])
    }

    /// Determinant of each row read as a row-major `k x k` matrix.
    pub fn det(self, k: usize) -> Jet<'t> {
        self.wrap(self.tape.det(self.id, k))
    }

    pub(crate) fn linear(
        self,
        params: Jet<'t>,
        w_off: usize,
        b_off: Option<usize>,
        w_out: usize,
    ) -> Jet<'t> {
        self.same_tape(&params);
        let w_in = self.width();
        self.wrap(self.tape.linear(self.id, params.id, w_off, b_off, w_in, w_out))
    }

    fn binary(self, kind: Binary, other: Jet<'t>) -> Jet<'t> {
        self.same_tape(&other);
        self.wrap(self.tape.binary(kind, self.id, other.id))
    }

    /// A scalar constant on the same tape (broadcasts against any shape).
    pub fn lit(&self, c: f64) -> Jet<'t> {
        self.tape.scalar(c)
    }
}

impl<'t> Add for Jet<'t> {
    type Output = Jet<'t>;
    fn add(self, rhs: Jet<'t>) -> Jet<'t> {
        self.binary(Binary::Add, rhs)
    }
}

impl<'t> Sub for Jet<'t> {
    type Output = Jet<'t>;
    fn sub(self, rhs: Jet<'t>) -> Jet<'t> {
        self.binary(Binary::Sub, rhs)
    }
}

impl<'t> Mul for Jet<'t> {
    type Output = Jet<'t>;
    fn mul(self, rhs: Jet<'t>) -> Jet<'t> {
        self.binary(Binary::Mul, rhs)
    }
}

impl<'t> Div for Jet<'t> {
    type Output = Jet<'t>;
    fn div(self, rhs: Jet<'t>) -> Jet<'t> {
        self * rhs.recip()
    }
}

impl<'t> Neg for Jet<'t> {
    type Output = Jet<'t>;
    fn neg(self) -> Jet<'t> {
        self.scale(-1.0)
    }
}

impl<'t> Add<f64> for Jet<'t> {
    type Output = Jet<'t>;
    fn add(self, rhs: f64) -> Jet<'t> {
        self.shift(rhs)
    }
}

impl<'t> Sub<f64> for Jet<'t> {
    type Output = Jet<'t>;
    fn sub(self, rhs: f64) -> Jet<'t> {
        self.shift(-rhs)
    }
}

impl<'t> Mul<f64> for Jet<'t> {
    type Output = Jet<'t>;
    fn mul(self, rhs: f64) -> Jet<'t> {
        self.scale(rhs)
    }
}

impl<'t> Div<f64> for Jet<'t> {
    type Output = Jet<'t>;
    fn div(self, rhs: f64) -> Jet<'t> {
        self.scale(1.0 / rhs)
    }
}

impl<'t> Add<Jet<'t>> for f64 {
    type Output = Jet<'t>;
    fn add(self, rhs: Jet<'t>) -> Jet<'t> {
        rhs.shift(self)
    }
}

impl<'t> Sub<Jet<'t>> for f64 {
    type Output = Jet<'t>;
    fn sub(self, rhs: Jet<'t>) -> Jet<'t> {
        rhs.scale(-1.0).shift(self)
    }
}

impl<'t> Mul<Jet<'t>> for f64 {
    type Output = Jet<'t>;
    fn mul(self, rhs: Jet<'t>) -> Jet<'t> {
        rhs.scale(self)
    }
}

impl<'t> Div<Jet<'t>> for f64 {
    type Output = Jet<'t>;
    fn div(self, rhs: Jet<'t>) -> Jet<'t> {
        rhs.recip().scale(self)
    }
}
