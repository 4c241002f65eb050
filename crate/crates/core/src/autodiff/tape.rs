use std::borrow::Cow;
use std::cell::{Ref, RefCell};

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::jet::Jet;
use super::kernels::{self, Dims};
use crate::activation::Activation;
use crate::error::{Error, Result};

/// How much input-derivative information a node carries.
///
/// The ordering is used to combine operands: a result keeps the lowest order
/// of its operands. `Constant` nodes have identically zero input derivatives
/// and so never lower the order; `Zero` nodes have unknown derivatives
/// (sampled data, or derivatives that were already extracted).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Zero,
    First,
    Second,
    Constant,
}

impl Order {
    fn has_tangents(self) -> bool {
        matches!(self, Order::First | Order::Second)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub batch: usize,
    pub width: usize,
    pub order: Order,
    pub dim: usize,
}

impl Layout {
    pub fn nt(&self) -> usize {
        if self.order.has_tangents() {
            self.dim
        } else {
            0
        }
    }

    pub fn nh(&self) -> usize {
        if self.order == Order::Second {
            self.dim
        } else {
            0
        }
    }

    pub fn comps(&self) -> usize {
        1 + self.nt() + self.nh()
    }

    pub fn len(&self) -> usize {
        self.batch * self.comps() * self.width
    }

    pub fn dims(&self) -> Dims {
        Dims {
            batch: self.batch,
            nt: self.nt(),
            nh: self.nh(),
            width: self.width,
        }
    }

    fn same_shape(&self, other: &Layout) -> bool {
        self.batch == other.batch && self.width == other.width && self.comps() == other.comps()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Unary {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Recip,
    Powi(i32),
    Relu,
    Act(Activation),
    ActDeriv(Activation),
}

impl Unary {
    /// Value and first three derivatives at `x`.
    #[inline(always)]
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            Unary::Exp => {
                let e = x.exp();
                [e; 4]
            }
            Unary::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            Unary::Cos => {
                let (s, c) = x.sin_cos();
                [c, -s, -c, s]
            }
            Unary::Sqrt => {
                let r = x.sqrt();
                [r, 0.5 / r, -0.25 / (r * x), 0.375 / (r * x * x)]
            }
            Unary::Recip => {
                let r = 1.0 / x;
                [r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]
            }
            Unary::Powi(n) => {
                let mut out = [0.0; 4];
                let mut coef = 1.0;
                for (k, o) in out.iter_mut().enumerate() {
                    if coef != 0.0 {
                        *o = coef * x.powi(n - k as i32);
                    }
                    coef *= (n - k as i32) as f64;
                }
                out
            }
            Unary::Relu => {
                if x > 0.0 {
                    [x, 1.0, 0.0, 0.0]
                } else {
                    [0.0; 4]
                }
            }
            Unary::Act(a) => {
                let d = a.derivs(x);
                [d[0], d[1], d[2], d[3]]
            }
            Unary::ActDeriv(a) => {
                let d = a.derivs(x);
                [d[1], d[2], d[3], d[4]]
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Exp => "exp",
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Sqrt => "sqrt",
            Unary::Recip => "recip",
            Unary::Powi(_) => "powi",
            Unary::Relu => "relu",
            Unary::Act(_) => "activation",
            Unary::ActDeriv(_) => "activation-derivative",
        }
    }
}

/// Calls `$kernel(args..., phi)` with `phi` monomorphised per unary kind so
/// the derivative evaluation inlines into the kernel loop.
macro_rules! with_unary {
    ($u:expr, $kernel:path, $($arg:expr),*) => {
        match $u {
            Unary::Act(Activation::ReQu) => {
                $kernel($($arg),*, |x| Unary::Act(Activation::ReQu).derivs(x))
            }
            Unary::Act(Activation::ReCu) => {
                $kernel($($arg),*, |x| Unary::Act(Activation::ReCu).derivs(x))
            }
            Unary::Act(Activation::Swish) => {
                $kernel($($arg),*, |x| Unary::Act(Activation::Swish).derivs(x))
            }
            Unary::ActDeriv(Activation::ReQu) => {
                $kernel($($arg),*, |x| Unary::ActDeriv(Activation::ReQu).derivs(x))
            }
            Unary::ActDeriv(Activation::ReCu) => {
                $kernel($($arg),*, |x| Unary::ActDeriv(Activation::ReCu).derivs(x))
            }
            Unary::ActDeriv(Activation::Swish) => {
                $kernel($($arg),*, |x| Unary::ActDeriv(Activation::Swish).derivs(x))
            }
            other => $kernel($($arg),*, |x| other.derivs(x)),
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Param,
    Input,
    Data,
    Constant,
    Linear {
        x: usize,
        p: usize,
        w_off: usize,
        b_off: Option<usize>,
        w_in: usize,
        w_out: usize,
    },
    Binary(Binary, usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Unary(usize, Unary),
    Cols { a: usize, start: usize },
    Concat(Vec<usize>),
    Pad(usize),
    SumWidth(usize),
    MeanBatch(usize),
    Jacobian { a: usize, dims: Vec<usize> },
    Divergence { a: usize, dims: Vec<usize> },
    Laplacian { a: usize, dims: Vec<usize> },
    Det { a: usize, k: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Input => "input",
            Op::Data => "data",
            Op::Constant => "constant",
            Op::Linear { .. } => "linear",
            Op::Binary(Binary::Add, ..) => "add",
            Op::Binary(Binary::Sub, ..) => "sub",
            Op::Binary(Binary::Mul, ..) => "mul",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Unary(_, u) => u.name(),
            Op::Cols { .. } => "cols",
            Op::Concat(_) => "concat",
            Op::Pad(_) => "pad",
            Op::SumWidth(_) => "sum-width",
            Op::MeanBatch(_) => "mean-batch",
            Op::Jacobian { .. } => "jacobian",
            Op::Divergence { .. } => "divergence",
            Op::Laplacian { .. } => "laplacian",
            Op::Det { .. } => "det",
        }
    }
}

pub(crate) struct Node {
    pub op: Op,
    pub layout: Layout,
    pub grad: bool,
    pub value: Vec<f64>,
}

struct Inner {
    nodes: Vec<Node>,
    block_lens: Vec<usize>,
}

/// Identifies a parameter block registered on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamBlock(pub(crate) usize);

impl ParamBlock {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Append-only expression graph with parameter blocks as its first leaves.
///
/// Node values are batched input jets; [`Tape::backward`] replays the graph
/// in reverse to obtain gradients with respect to every registered
/// parameter. Handles ([`Jet`]) borrow the tape, so clearing it (which needs
/// `&mut`) cannot leave stale handles behind.
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                block_lens: Vec::new(),
            }),
        }
    }

    /// Registers a parameter block. All blocks must be registered before any
    /// other node is created.
    pub fn register_params(&mut self, values: &[f64]) -> ParamBlock {
        let inner = self.inner.get_mut();
        assert_eq!(
            inner.nodes.len(),
            inner.block_lens.len(),
            "parameter blocks must be registered on a cleared tape"
        );
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            op: Op::Param,
            layout: Layout {
                batch: 1,
                width: values.len(),
                order: Order::Constant,
                dim: 0,
            },
            grad: true,
            value: values.to_vec(),
        });
        inner.block_lens.push(values.len());
        ParamBlock(id)
    }

    pub fn set_params(&mut self, block: ParamBlock, values: &[f64]) {
        let node = &mut self.inner.get_mut().nodes[block.0];
        assert_eq!(node.value.len(), values.len(), "parameter block length");
        node.value.copy_from_slice(values);
    }

    pub fn params(&self, block: ParamBlock) -> Vec<f64> {
        self.inner.borrow().nodes[block.0].value.clone()
    }

    /// Total number of registered scalar parameters.
    pub fn param_count(&self) -> usize {
        self.inner.borrow().block_lens.iter().sum()
    }

    pub fn block_count(&self) -> usize {
        self.inner.borrow().block_lens.len()
    }

    /// Drops every node except the parameter leaves.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        let keep = inner.block_lens.len();
        inner.nodes.truncate(keep);
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param(&self, block: ParamBlock) -> Jet<'_> {
        assert!(block.0 < self.block_count(), "unknown parameter block");
        Jet::new(self, block.0)
    }

    /// Lifts a batch of points (row-major, `dim` coordinates each) into input
    /// jets: coordinate `i` gets tangent `e_i` and zero curvature.
    pub fn input(&self, points: &[f64], dim: usize, order: Order) -> Result<Jet<'_>> {
        assert!(dim > 0 && points.len() % dim == 0, "points must be rows of {dim} coordinates");
        assert!(order != Order::Constant, "inputs cannot have constant order");
        if let Some((index, &value)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index, value });
        }
        let batch = points.len() / dim;
        let layout = Layout {
            batch,
            width: dim,
            order,
            dim: if order == Order::Zero { 0 } else { dim },
        };
        let c = layout.comps();
        let mut value = vec![0.0; layout.len()];
        for b in 0..batch {
            let base = b * c * dim;
            value[base..base + dim].copy_from_slice(&points[b * dim..(b + 1) * dim]);
            if layout.nt() > 0 {
                for i in 0..dim {
                    value[base + (1 + i) * dim + i] = 1.0;
                }
            }
        }
        Ok(Jet::new(self, self.push(Op::Input, layout, false, value)))
    }

    /// A value with identically zero input derivatives.
    pub fn constant(&self, values: &[f64], batch: usize, width: usize) -> Jet<'_> {
        assert_eq!(values.len(), batch * width, "constant shape");
        let layout = Layout {
            batch,
            width,
            order: Order::Constant,
            dim: 0,
        };
        Jet::new(self, self.push(Op::Constant, layout, false, values.to_vec()))
    }

    pub fn scalar(&self, c: f64) -> Jet<'_> {
        self.constant(&[c], 1, 1)
    }

    /// Sampled values whose input derivatives are unknown.
    pub fn data(&self, values: &[f64], batch: usize, width: usize) -> Jet<'_> {
        assert_eq!(values.len(), batch * width, "data shape");
        let layout = Layout {
            batch,
            width,
            order: Order::Zero,
            dim: 0,
        };
        Jet::new(self, self.push(Op::Data, layout, false, values.to_vec()))
    }

    pub(crate) fn push(&self, op: Op, layout: Layout, grad: bool, value: Vec<f64>) -> usize {
        debug_assert_eq!(value.len(), layout.len());
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            op,
            layout,
            grad,
            value,
        });
        inner.nodes.len() - 1
    }

    pub(crate) fn layout(&self, id: usize) -> Layout {
        self.inner.borrow().nodes[id].layout
    }

    pub(crate) fn node(&self, id: usize) -> Ref<'_, Node> {
        Ref::map(self.inner.borrow(), |i| &i.nodes[id])
    }

    fn needs_grad(&self, ids: &[usize]) -> bool {
        let inner = self.inner.borrow();
        ids.iter().any(|&i| inner.nodes[i].grad)
    }

    // ---- forward construction ------------------------------------------

    fn combine(what: &str, layouts: &[Layout], same_width: bool) -> Layout {
        let batch = layouts.iter().map(|l| l.batch).max().unwrap();
        let width = layouts.iter().map(|l| l.width).max().unwrap();
        for l in layouts {
            assert!(
                l.batch == batch || l.batch == 1,
                "{what}: batch {} does not broadcast to {batch}",
                l.batch
            );
            if same_width {
                assert!(
                    l.width == width || l.width == 1,
                    "{what}: width {} does not broadcast to {width}",
                    l.width
                );
            }
        }
        let order = layouts.iter().map(|l| l.order).min().unwrap();
        let mut dim = 0;
        if order.has_tangents() {
            for l in layouts.iter().filter(|l| l.order.has_tangents()) {
                assert!(dim == 0 || dim == l.dim, "{what}: input dimension mismatch");
                dim = l.dim;
            }
        }
        Layout {
            batch,
            width,
            order,
            dim,
        }
    }

    pub(crate) fn binary(&self, kind: Binary, a: usize, b: usize) -> usize {
        let (la, lb) = (self.layout(a), self.layout(b));
        let out = Self::combine("binary op", &[la, lb], true);
        let value = {
            let inner = self.inner.borrow();
            let xa = expand(&inner.nodes[a], out);
            let xb = expand(&inner.nodes[b], out);
            let mut z = vec![0.0; out.len()];
            match kind {
                Binary::Add => {
                    for ((z, x), y) in z.iter_mut().zip(xa.iter()).zip(xb.iter()) {
                        *z = x + y;
                    }
                }
                Binary::Sub => {
                    for ((z, x), y) in z.iter_mut().zip(xa.iter()).zip(xb.iter()) {
                        *z = x - y;
                    }
                }
                Binary::Mul => kernels::mul_fwd(&mut z, &xa, &xb, out.dims()),
            }
            z
        };
        let grad = self.needs_grad(&[a, b]);
        self.push(Op::Binary(kind, a, b), out, grad, value)
    }

    pub(crate) fn scale(&self, a: usize, c: f64) -> usize {
        let (layout, value, grad) = {
            let n = self.node(a);
            (n.layout, n.value.iter().map(|v| c * v).collect(), n.grad)
        };
        self.push(Op::Scale(a, c), layout, grad, value)
    }

    pub(crate) fn shift(&self, a: usize, c: f64) -> usize {
        let (layout, value, grad) = {
            let n = self.node(a);
            let l = n.layout;
            let mut v = n.value.clone();
            let (cc, w) = (l.comps(), l.width);
            for b in 0..l.batch {
                for x in &mut v[b * cc * w..b * cc * w + w] {
                    *x += c;
                }
            }
            (l, v, n.grad)
        };
        self.push(Op::Shift(a), layout, grad, value)
    }

    pub(crate) fn unary(&self, a: usize, u: Unary) -> usize {
        let (layout, value, grad) = {
            let n = self.node(a);
            let mut z = vec![0.0; n.layout.len()];
            with_unary!(u, kernels::unary_fwd, &mut z, &n.value, n.layout.dims());
            (n.layout, z, n.grad)
        };
        self.push(Op::Unary(a, u), layout, grad, value)
    }

    pub(crate) fn linear(
        &self,
        x: usize,
        p: usize,
        w_off: usize,
        b_off: Option<usize>,
        w_in: usize,
        w_out: usize,
    ) -> usize {
        let lx = self.layout(x);
        assert_eq!(lx.width, w_in, "linear: input width");
        let out = Layout { width: w_out, ..lx };
        let rows = lx.batch * lx.comps();
        let value = {
            let inner = self.inner.borrow();
            let params = &inner.nodes[p].value;
            assert!(w_off + w_in * w_out <= params.len(), "linear: weight range");
            let xv = ArrayView2::from_shape((rows, w_in), &inner.nodes[x].value).unwrap();
            let wv = ArrayView2::from_shape((w_out, w_in), &params[w_off..w_off + w_in * w_out])
                .unwrap();
            let mut z = vec![0.0; rows * w_out];
            {
                let mut zv = ArrayViewMut2::from_shape((rows, w_out), &mut z).unwrap();
                general_mat_mul(1.0, &xv, &wv.t(), 0.0, &mut zv);
            }
            if let Some(bo) = b_off {
                let bias = &params[bo..bo + w_out];
                let c = lx.comps();
                for b in 0..lx.batch {
                    let row = &mut z[b * c * w_out..b * c * w_out + w_out];
                    for (zv, bv) in row.iter_mut().zip(bias) {
                        *zv += bv;
                    }
                }
            }
            z
        };
        self.push(
            Op::Linear {
                x,
                p,
                w_off,
                b_off,
                w_in,
                w_out,
            },
            out,
            true,
            value,
        )
    }

    pub(crate) fn cols(&self, a: usize, start: usize, len: usize) -> usize {
        let (out, value, grad) = {
            let n = self.node(a);
            let l = n.layout;
            assert!(start + len <= l.width, "cols: range {start}..{} of width {}", start + len, l.width);
            let out = Layout { width: len, ..l };
            let mut z = Vec::with_capacity(out.len());
            for row in n.value.chunks_exact(l.width) {
                z.extend_from_slice(&row[start..start + len]);
            }
            (out, z, n.grad)
        };
        self.push(Op::Cols { a, start }, out, grad, value)
    }

    pub(crate) fn concat(&self, ids: &[usize]) -> usize {
        assert!(!ids.is_empty(), "concat of nothing");
        let layouts: Vec<Layout> = ids.iter().map(|&i| self.layout(i)).collect();
        let mut out = Self::combine("concat", &layouts, false);
        out.width = layouts.iter().map(|l| l.width).sum();
        let value = {
            let inner = self.inner.borrow();
            let parts: Vec<Cow<[f64]>> = ids
                .iter()
                .zip(&layouts)
                .map(|(&i, l)| expand(&inner.nodes[i], Layout { width: l.width, ..out }))
                .collect();
            let rows = out.batch * out.comps();
            let mut z = Vec::with_capacity(out.len());
            for r in 0..rows {
                for (part, l) in parts.iter().zip(&layouts) {
                    z.extend_from_slice(&part[r * l.width..(r + 1) * l.width]);
                }
            }
            z
        };
        let grad = self.needs_grad(ids);
        self.push(Op::Concat(ids.to_vec()), out, grad, value)
    }

    pub(crate) fn pad(&self, a: usize, to: usize) -> usize {
        let (out, value, grad) = {
            let n = self.node(a);
            let l = n.layout;
            assert!(to >= l.width, "pad: target width {to} below {}", l.width);
            let out = Layout { width: to, ..l };
            let mut z = vec![0.0; out.len()];
            for (src, dst) in n.value.chunks_exact(l.width).zip(z.chunks_exact_mut(to)) {
                dst[..l.width].copy_from_slice(src);
            }
            (out, z, n.grad)
        };
        self.push(Op::Pad(a), out, grad, value)
    }

    pub(crate) fn sum_width(&self, a: usize) -> usize {
        let (out, value, grad) = {
            let n = self.node(a);
            let out = Layout { width: 1, ..n.layout };
            let z = n.value.chunks_exact(n.layout.width).map(|r| r.iter().sum()).collect();
            (out, z, n.grad)
        };
        self.push(Op::SumWidth(a), out, grad, value)
    }

    pub(crate) fn mean_batch(&self, a: usize) -> usize {
        let (out, value, grad) = {
            let n = self.node(a);
            let l = n.layout;
            let order = if l.order == Order::Constant {
                Order::Constant
            } else {
                Order::Zero
            };
            let out = Layout {
                batch: 1,
                width: l.width,
                order,
                dim: 0,
            };
            let c = l.comps();
            let mut z = vec![0.0; l.width];
            for b in 0..l.batch {
                let row = &n.value[b * c * l.width..b * c * l.width + l.width];
                for (zv, v) in z.iter_mut().zip(row) {
                    *zv += v;
                }
            }
            let inv = 1.0 / l.batch as f64;
            z.iter_mut().for_each(|v| *v *= inv);
            (out, z, n.grad)
        };
        self.push(Op::MeanBatch(a), out, grad, value)
    }

    fn derivative_layout(what: &str, l: Layout, dims: &[usize], second: bool) -> Layout {
        if l.order == Order::Constant {
            return Layout {
                order: Order::Constant,
                dim: 0,
                ..l
            };
        }
        let ok = if second {
            l.order == Order::Second
        } else {
            l.order.has_tangents()
        };
        assert!(ok, "{what}: operand carries order {:?}", l.order);
        for &k in dims {
            assert!(k < l.dim, "{what}: direction {k} out of range for dimension {}", l.dim);
        }
        Layout {
            order: Order::Zero,
            dim: 0,
            ..l
        }
    }

    pub(crate) fn jacobian(&self, a: usize, dims: &[usize]) -> usize {
        let la = self.layout(a);
        let mut out = Self::derivative_layout("jacobian", la, dims, false);
        let k = dims.len();
        out.width = la.width * k;
        let value = if la.order == Order::Constant {
            vec![0.0; out.len()]
        } else {
            let n = self.node(a);
            let (c, w) = (la.comps(), la.width);
            let mut z = vec![0.0; out.len()];
            for b in 0..la.batch {
                for (j, &dj) in dims.iter().enumerate() {
                    let src = &n.value[(b * c + 1 + dj) * w..(b * c + 2 + dj) * w];
                    for (wi, v) in src.iter().enumerate() {
                        z[b * w * k + wi * k + j] = *v;
                    }
                }
            }
            z
        };
        let grad = self.needs_grad(&[a]) && la.order != Order::Constant;
        self.push(
            Op::Jacobian {
                a,
                dims: dims.to_vec(),
            },
            out,
            grad,
            value,
        )
    }

    pub(crate) fn divergence(&self, a: usize, dims: &[usize]) -> usize {
        let la = self.layout(a);
        assert_eq!(la.width, dims.len(), "divergence: field width vs direction count");
        let mut out = Self::derivative_layout("divergence", la, dims, false);
        out.width = 1;
        let value = if la.order == Order::Constant {
            vec![0.0; out.len()]
        } else {
            let n = self.node(a);
            let (c, w) = (la.comps(), la.width);
            (0..la.batch)
                .map(|b| {
                    dims.iter()
                        .enumerate()
                        .map(|(j, &dj)| n.value[(b * c + 1 + dj) * w + j])
                        .sum()
                })
                .collect()
        };
        let grad = self.needs_grad(&[a]) && la.order != Order::Constant;
        self.push(
            Op::Divergence {
                a,
                dims: dims.to_vec(),
            },
            out,
            grad,
            value,
        )
    }

    pub(crate) fn laplacian(&self, a: usize, dims: &[usize]) -> usize {
        let la = self.layout(a);
        let out = Self::derivative_layout("laplacian", la, dims, true);
        let value = if la.order == Order::Constant {
            vec![0.0; out.len()]
        } else {
            let n = self.node(a);
            let (c, w, nt) = (la.comps(), la.width, la.nt());
            let mut z = vec![0.0; out.len()];
            for b in 0..la.batch {
                let dst = &mut z[b * w..(b + 1) * w];
                for &dj in dims {
                    let src = &n.value[(b * c + 1 + nt + dj) * w..(b * c + 2 + nt + dj) * w];
                    for (zv, v) in dst.iter_mut().zip(src) {
                        *zv += v;
                    }
                }
            }
            z
        };
        let grad = self.needs_grad(&[a]) && la.order != Order::Constant;
        self.push(
            Op::Laplacian {
                a,
                dims: dims.to_vec(),
            },
            out,
            grad,
            value,
        )
    }

    pub(crate) fn det(&self, a: usize, k: usize) -> usize {
        let la = self.layout(a);
        assert_eq!(la.width, k * k, "det: width must be k*k");
        assert_eq!(la.comps(), 1, "det: operand must be value-only");
        let out = Layout { width: 1, ..la };
        let value = {
            let n = self.node(a);
            n.value.chunks_exact(k * k).map(|m| kernels::det(m, k)).collect()
        };
        let grad = self.needs_grad(&[a]);
        self.push(Op::Det { a, k }, out, grad, value)
    }

    // ---- reverse sweep -------------------------------------------------

    /// Gradient of a scalar node with respect to every registered parameter,
    /// laid out block after block in registration order.
    pub fn backward(&self, loss: Jet<'_>) -> Result<Vec<f64>> {
        if !std::ptr::eq(loss.tape(), self) {
            return Err(Error::ForeignHandle);
        }
        let inner = self.inner.borrow();
        let id = loss.id();
        let lay = inner.nodes[id].layout;
        if lay.batch != 1 || lay.width != 1 {
            return Err(Error::NotScalar {
                batch: lay.batch,
                width: lay.width,
            });
        }
        if !inner.nodes[id].value[0].is_finite() {
            return Err(first_non_finite(&inner.nodes[..=id]));
        }
        let nodes = &inner.nodes;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); id + 1];
        let mut seed = vec![0.0; lay.len()];
        seed[0] = 1.0;
        grads[id] = seed;
        for i in (0..=id).rev() {
            if grads[i].is_empty() || !nodes[i].grad {
                continue;
            }
            if let Op::Param = nodes[i].op {
                continue;
            }
            let gz = std::mem::take(&mut grads[i]);
            backprop_node(nodes, i, &gz, &mut grads);
        }
        let mut out = Vec::with_capacity(inner.block_lens.iter().sum());
        for (k, &len) in inner.block_lens.iter().enumerate() {
            if grads.len() > k && !grads[k].is_empty() {
                out.extend_from_slice(&grads[k]);
            } else {
                out.extend(std::iter::repeat_n(0.0, len));
            }
        }
        Ok(out)
    }

    /// Checks that every value reachable so far is finite, naming the first
    /// offending node otherwise.
    pub fn check_finite(&self) -> Result<()> {
        let inner = self.inner.borrow();
        if inner.nodes.iter().all(|n| n.value.iter().all(|v| v.is_finite())) {
            Ok(())
        } else {
            Err(first_non_finite(&inner.nodes))
        }
    }
}

fn first_non_finite(nodes: &[Node]) -> Error {
    for (i, n) in nodes.iter().enumerate() {
        if n.value.iter().any(|v| !v.is_finite()) {
            return Error::NonFinite {
                node: i,
                op: n.op.name(),
            };
        }
    }
    Error::NonFinite {
        node: nodes.len().saturating_sub(1),
        op: "unknown",
    }
}

/// Broadcasts a node's buffer to `target` (batch, width and component
/// count). Missing derivative components are zero; surplus ones are dropped.
fn expand(src: &Node, target: Layout) -> Cow<'_, [f64]> {
    let ls = src.layout;
    if ls.same_shape(&target) {
        return Cow::Borrowed(&src.value);
    }
    let (cs, ct) = (ls.comps(), target.comps());
    assert!(cs >= ct || cs == 1, "expand: cannot raise derivative order");
    let mut z = vec![0.0; target.len()];
    for b in 0..target.batch {
        let bs = if ls.batch == 1 { 0 } else { b };
        for c in 0..ct.min(cs) {
            let src_row = &src.value[(bs * cs + c) * ls.width..(bs * cs + c + 1) * ls.width];
            let dst = &mut z[(b * ct + c) * target.width..(b * ct + c + 1) * target.width];
            if ls.width == target.width {
                dst.copy_from_slice(src_row);
            } else {
                dst.fill(src_row[0]);
            }
        }
    }
    Cow::Owned(z)
}

/// Adds a gradient laid out as `from` into a buffer laid out as `to`,
/// summing over broadcast batch rows and widths.
fn reduce_into(g: &[f64], from: Layout, dst: &mut [f64], to: Layout) {
    if from.same_shape(&to) {
        for (d, v) in dst.iter_mut().zip(g) {
            *d += v;
        }
        return;
    }
    let (cf, ct) = (from.comps(), to.comps());
    for b in 0..from.batch {
        let bt = if to.batch == 1 { 0 } else { b };
        for c in 0..cf.min(ct) {
            let src = &g[(b * cf + c) * from.width..(b * cf + c + 1) * from.width];
            let base = (bt * ct + c) * to.width;
            if to.width == from.width {
                for (d, v) in dst[base..base + to.width].iter_mut().zip(src) {
                    *d += v;
                }
            } else {
                dst[base] += src.iter().sum::<f64>();
            }
        }
    }
}

fn slot(grads: &mut [Vec<f64>], nodes: &[Node], j: usize) -> usize {
    if grads[j].is_empty() {
        grads[j] = vec![0.0; nodes[j].layout.len()];
    }
    j
}

/// Accumulates `g` (laid out as `from`) into operand `j`.
fn accumulate(grads: &mut [Vec<f64>], nodes: &[Node], j: usize, g: &[f64], from: Layout) {
    if !nodes[j].grad {
        return;
    }
    slot(grads, nodes, j);
    reduce_into(g, from, &mut grads[j], nodes[j].layout);
}

fn backprop_node(nodes: &[Node], i: usize, gz: &[f64], grads: &mut [Vec<f64>]) {
    let out = nodes[i].layout;
    match &nodes[i].op {
        Op::Param | Op::Input | Op::Data | Op::Constant => {}
        Op::Linear {
            x,
            p,
            w_off,
            b_off,
            w_in,
            w_out,
        } => {
            let (x, p, w_off, w_in, w_out) = (*x, *p, *w_off, *w_in, *w_out);
            let rows = out.batch * out.comps();
            let gzv = ArrayView2::from_shape((rows, w_out), gz).unwrap();
            let params = &nodes[p].value;
            if nodes[x].grad {
                slot(grads, nodes, x);
                let wv = ArrayView2::from_shape((w_out, w_in), &params[w_off..w_off + w_in * w_out])
                    .unwrap();
                let mut gx = ArrayViewMut2::from_shape((rows, w_in), &mut grads[x][..]).unwrap();
                general_mat_mul(1.0, &gzv, &wv, 1.0, &mut gx);
            }
            slot(grads, nodes, p);
            let xv = ArrayView2::from_shape((rows, w_in), &nodes[x].value).unwrap();
            {
                let gw_slice = &mut grads[p][w_off..w_off + w_in * w_out];
                let mut gw = ArrayViewMut2::from_shape((w_out, w_in), gw_slice).unwrap();
                general_mat_mul(1.0, &gzv.t(), &xv, 1.0, &mut gw);
            }
            if let Some(bo) = *b_off {
                let c = out.comps();
                let gb = &mut grads[p][bo..bo + w_out];
                for b in 0..out.batch {
                    let row = &gz[b * c * w_out..b * c * w_out + w_out];
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
            }
        }
        Op::Binary(kind, a, b) => {
            let (a, b) = (*a, *b);
            match kind {
                Binary::Add => {
                    accumulate(grads, nodes, a, gz, out);
                    accumulate(grads, nodes, b, gz, out);
                }
                Binary::Sub => {
                    accumulate(grads, nodes, a, gz, out);
                    if nodes[b].grad {
                        let neg: Vec<f64> = gz.iter().map(|v| -v).collect();
                        accumulate(grads, nodes, b, &neg, out);
                    }
                }
                Binary::Mul => {
                    for (me, other) in [(a, b), (b, a)] {
                        if !nodes[me].grad {
                            continue;
                        }
                        let xo = expand(&nodes[other], out);
                        let mut g = vec![0.0; out.len()];
                        kernels::mul_bwd(&mut g, gz, &xo, out.dims());
                        accumulate(grads, nodes, me, &g, out);
                    }
                }
            }
        }
        Op::Scale(a, c) => {
            let g: Vec<f64> = gz.iter().map(|v| c * v).collect();
            accumulate(grads, nodes, *a, &g, out);
        }
        Op::Shift(a) => accumulate(grads, nodes, *a, gz, out),
        Op::Unary(a, u) => {
            let a = *a;
            let u = *u;
            slot(grads, nodes, a);
            with_unary!(u, kernels::unary_bwd, &mut grads[a], gz, &nodes[a].value, out.dims());
        }
        Op::Cols { a, start } => {
            let (a, start) = (*a, *start);
            let wa = nodes[a].layout.width;
            slot(grads, nodes, a);
            for (src, dst) in gz.chunks_exact(out.width).zip(grads[a].chunks_exact_mut(wa)) {
                for (d, v) in dst[start..start + out.width].iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        Op::Concat(ids) => {
            let rows = out.batch * out.comps();
            let mut offset = 0;
            for &j in ids {
                let wj = nodes[j].layout.width;
                if nodes[j].grad {
                    let mut g = Vec::with_capacity(rows * wj);
                    for r in 0..rows {
                        let base = r * out.width + offset;
                        g.extend_from_slice(&gz[base..base + wj]);
                    }
                    accumulate(grads, nodes, j, &g, Layout { width: wj, ..out });
                }
                offset += wj;
            }
        }
        Op::Pad(a) => {
            let a = *a;
            let wa = nodes[a].layout.width;
            slot(grads, nodes, a);
            for (src, dst) in gz.chunks_exact(out.width).zip(grads[a].chunks_exact_mut(wa)) {
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        Op::SumWidth(a) => {
            let a = *a;
            let wa = nodes[a].layout.width;
            slot(grads, nodes, a);
            for (g, dst) in gz.iter().zip(grads[a].chunks_exact_mut(wa)) {
                dst.iter_mut().for_each(|d| *d += g);
            }
        }
        Op::MeanBatch(a) => {
            let a = *a;
            let la = nodes[a].layout;
            let (c, w) = (la.comps(), la.width);
            let inv = 1.0 / la.batch as f64;
            slot(grads, nodes, a);
            for b in 0..la.batch {
                let dst = &mut grads[a][b * c * w..b * c * w + w];
                for (d, g) in dst.iter_mut().zip(gz) {
                    *d += g * inv;
                }
            }
        }
        Op::Jacobian { a, dims } => {
            let a = *a;
            let la = nodes[a].layout;
            let (c, w, k) = (la.comps(), la.width, dims.len());
            slot(grads, nodes, a);
            let ga = &mut grads[a];
            for b in 0..la.batch {
                for (j, &dj) in dims.iter().enumerate() {
                    let base = (b * c + 1 + dj) * w;
                    for wi in 0..w {
                        ga[base + wi] += gz[b * w * k + wi * k + j];
                    }
                }
            }
        }
        Op::Divergence { a, dims } => {
            let a = *a;
            let la = nodes[a].layout;
            let (c, w) = (la.comps(), la.width);
            slot(grads, nodes, a);
            let ga = &mut grads[a];
            for b in 0..la.batch {
                for (j, &dj) in dims.iter().enumerate() {
                    ga[(b * c + 1 + dj) * w + j] += gz[b];
                }
            }
        }
        Op::Laplacian { a, dims } => {
            let a = *a;
            let la = nodes[a].layout;
            let (c, w, nt) = (la.comps(), la.width, la.nt());
            slot(grads, nodes, a);
            let ga = &mut grads[a];
            for b in 0..la.batch {
                let src = &gz[b * w..(b + 1) * w];
                for &dj in dims {
                    let base = (b * c + 1 + nt + dj) * w;
                    for (d, v) in ga[base..base + w].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
        Op::Det { a, k } => {
            let (a, k) = (*a, *k);
            slot(grads, nodes, a);
            let mut cof = vec![0.0; k * k];
            let va = &nodes[a].value;
            for (b, g) in gz.iter().enumerate() {
                let m = &va[b * k * k..(b + 1) * k * k];
                kernels::cofactors(m, k, &mut cof);
                for (d, cv) in grads[a][b * k * k..(b + 1) * k * k].iter_mut().zip(&cof) {
                    *d += g * cv;
                }
            }
        }
    }
}
