//! Residual network `s_k = σ(W2 σ(W1 s + b1) + b2) + s` with an input lift
//! and a final affine output map.
//!
//! Flat parameter layout (row-major matrices):
//!
//! 1. Linear lift only: `A` (`n x d_in`), `c` (`n`).
//! 2. For each block: `W1` (`n x n`, or `n x d_in` for the first block under
//!    zero padding), `b1` (`n`), `W2` (`n x n`), `b2` (`n`).
//! 3. Output: `W_o` (`d_out x n`), `b_o` (`d_out`).
//!
//! Under zero padding the padded input coordinates are identically zero, so
//! the matching columns of the first `W1` are never stored.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::autodiff::{Jet, Order, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputLift {
    /// Append zeros to the input up to the width.
    ZeroPad,
    /// Affine map from the input to the width.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dgm,
    Mim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub d_in: usize,
    pub width: usize,
    pub depth: usize,
    pub d_out: usize,
    pub activation: Activation,
    pub lift: InputLift,
}

/// Weights of a network in structured form.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    pub lift: Option<(Array2<f64>, Vec<f64>)>,
    pub blocks: Vec<BlockWeights>,
    pub out_w: Array2<f64>,
    pub out_b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub w1: Array2<f64>,
    pub b1: Vec<f64>,
    pub w2: Array2<f64>,
    pub b2: Vec<f64>,
}

/// `(2m-1)n^2 + (2m+d+1)n + 1` for DGM, `(4m-2)n^2 + (4m+3d+1)n + d + 1`
/// for MIM (a scalar `u` network plus a `d`-vector `p` network).
pub fn count_parameters(method: Method, m: usize, n: usize, d: usize) -> usize {
    match method {
        Method::Dgm => (2 * m - 1) * n * n + (2 * m + d + 1) * n + 1,
        Method::Mim => (4 * m - 2) * n * n + (4 * m + 3 * d + 1) * n + d + 1,
    }
}

impl NetworkSpec {
    /// A network with the lift chosen automatically: zero padding when the
    /// input fits in the width, a linear lift otherwise.
    pub fn new(d_in: usize, width: usize, depth: usize, d_out: usize, activation: Activation) -> Self {
        let lift = if d_in <= width {
            InputLift::ZeroPad
        } else {
            InputLift::Linear
        };
        NetworkSpec {
            d_in,
            width,
            depth,
            d_out,
            activation,
            lift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.d_out == 0 || self.d_in == 0 {
            return Err(Error::InvalidNetwork(format!(
                "d_in, width, depth and d_out must be positive (got {}, {}, {}, {})",
                self.d_in, self.width, self.depth, self.d_out
            )));
        }
        if self.lift == InputLift::ZeroPad && self.d_in > self.width {
            return Err(Error::InvalidNetwork(format!(
                "zero padding needs d_in <= width (got {} > {})",
                self.d_in, self.width
            )));
        }
        Ok(())
    }

    fn first_in(&self) -> usize {
        match self.lift {
            InputLift::ZeroPad => self.d_in,
            InputLift::Linear => self.width,
        }
    }

    /// Shapes `(rows, cols)` of the weight matrices in layout order, each
    /// followed by a bias of length `rows`.
    fn affine_shapes(&self) -> Vec<(usize, usize)> {
        let n = self.width;
        let mut shapes = Vec::with_capacity(2 * self.depth + 2);
        if self.lift == InputLift::Linear {
            shapes.push((n, self.d_in));
        }
        for k in 0..self.depth {
            shapes.push((n, if k == 0 { self.first_in() } else { n }));
            shapes.push((n, n));
        }
        shapes.push((self.d_out, n));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.affine_shapes().iter().map(|(r, c)| r * c + r).sum()
    }

    /// Xavier-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init_with(&mut rng)
    }

    pub fn init_with(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (rows, cols) in self.affine_shapes() {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for _ in 0..rows * cols {
                out.push(rng.random_range(-bound..=bound));
            }
            out.extend(std::iter::repeat_n(0.0, rows));
        }
        out
    }

    pub fn unpack(&self, params: &[f64]) -> Result<NetworkWeights> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "network parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut off = 0;
        let mut take = |rows: usize, cols: usize| {
            let w = Array2::from_shape_vec((rows, cols), params[off..off + rows * cols].to_vec())
                .expect("shape");
            off += rows * cols;
            let b = params[off..off + rows].to_vec();
            off += rows;
            (w, b)
        };
        let n = self.width;
        let lift = (self.lift == InputLift::Linear).then(|| take(n, self.d_in));
        let mut blocks = Vec::with_capacity(self.depth);
        for k in 0..self.depth {
            let (w1, b1) = take(n, if k == 0 { self.first_in() } else { n });
            let (w2, b2) = take(n, n);
            blocks.push(BlockWeights { w1, b1, w2, b2 });
        }
        let (out_w, out_b) = take(self.d_out, n);
        Ok(NetworkWeights {
            lift,
            blocks,
            out_w,
            out_b,
        })
    }

    pub fn pack(&self, w: &NetworkWeights) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        let mut put = |m: &Array2<f64>, b: &[f64]| {
            out.extend(m.iter().copied());
            out.extend_from_slice(b);
        };
        if let Some((a, c)) = &w.lift {
            put(a, c);
        }
        for blk in &w.blocks {
            put(&blk.w1, &blk.b1);
            put(&blk.w2, &blk.b2);
        }
        put(&w.out_w, &w.out_b);
        out
    }

    /// Applies the network to a jet (or a jet carrying a directional
    /// derivative, see [`Directional`]) of width `d_in`.
    pub fn forward<'t, V: NetValue<'t>>(&self, params: Jet<'t>, x: V) -> V {
        assert_eq!(x.width(), self.d_in, "network input width");
        let n = self.width;
        let mut off = 0;
        let mut affine = |v: V, rows: usize, bias: bool| {
            let cols = v.width();
            let out = v.affine(params, off, bias.then_some(off + rows * cols), rows);
            off += rows * cols + rows;
            out
        };
        let (first, mut skip) = match self.lift {
            InputLift::ZeroPad => (x, x.pad(n)),
            InputLift::Linear => {
                let s = affine(x, n, true);
                (s, s)
            }
        };
        let act = self.activation;
        for k in 0..self.depth {
            let input = if k == 0 { first } else { skip };
            let h = affine(input, n, true).act(act);
            let g = affine(h, n, true).act(act);
            skip = g.add(skip);
        }
        affine(skip, self.d_out, true)
    }

    /// Plain evaluation at a batch of points (row-major, `d_in` per row).
    pub fn eval(&self, params: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let block = tape.register_params(params);
        let x = tape.input(points, self.d_in, Order::Zero)?;
        let y = self.forward(tape.param(block), x);
        Ok(y.values())
    }
}

/// Operations the network needs from its values.
pub trait NetValue<'t>: Copy {
    fn width(&self) -> usize;
    fn affine(self, params: Jet<'t>, w_off: usize, b_off: Option<usize>, rows: usize) -> Self;
    fn act(self, a: Activation) -> Self;
    fn add(self, other: Self) -> Self;
    fn pad(self, width: usize) -> Self;
}

impl<'t> NetValue<'t> for Jet<'t> {
    fn width(&self) -> usize {
        Jet::width(self)
    }

    fn affine(self, params: Jet<'t>, w_off: usize, b_off: Option<usize>, rows: usize) -> Self {
        self.linear(params, w_off, b_off, rows)
    }

    fn act(self, a: Activation) -> Self {
        self.activate(a)
    }

    fn add(self, other: Self) -> Self {
        self + other
    }

    fn pad(self, width: usize) -> Self {
        Jet::pad(self, width)
    }
}

/// A value together with its derivative along a direction field `w(x)`,
/// both carried as full jets so that input derivatives of the directional
/// derivative remain available.
#[derive(Clone, Copy, Debug)]
pub struct Directional<'t> {
    pub value: Jet<'t>,
    pub along: Jet<'t>,
}

impl<'t> NetValue<'t> for Directional<'t> {
    fn width(&self) -> usize {
        self.value.width()
    }

    fn affine(self, params: Jet<'t>, w_off: usize, b_off: Option<usize>, rows: usize) -> Self {
        Directional {
            value: self.value.linear(params, w_off, b_off, rows),
            along: self.along.linear(params, w_off, None, rows),
        }
    }

    fn act(self, a: Activation) -> Self {
        Directional {
            value: self.value.activate(a),
            along: self.value.activate_deriv(a) * self.along,
        }
    }

    fn add(self, other: Self) -> Self {
        Directional {
            value: self.value + other.value,
            along: self.along + other.along,
        }
    }

    fn pad(self, width: usize) -> Self {
        Directional {
            value: self.value.pad(width),
            along: self.along.pad(width),
        }
    }
}

impl NetworkSpec {
    /// Returns `(N(x), w(x)·∇N(x))` for a direction field `w` of width `d_in`.
    pub fn forward_directional<'t>(
        &self,
        params: Jet<'t>,
        x: Jet<'t>,
        w: Jet<'t>,
    ) -> (Jet<'t>, Jet<'t>) {
        let out = self.forward(params, Directional { value: x, along: w });
        (out.value, out.along)
    }
}
