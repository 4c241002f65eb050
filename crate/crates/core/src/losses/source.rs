//! Manufactured solutions and their source terms.

use std::f64::consts::PI;

use crate::autodiff::Jet;
use crate::error::{Error, Result};
use crate::experiment::ExperimentId;
use crate::field::{self, field, Field};
use crate::geometry::boundary::pentagon_psi;

/// PDE operator family. Residual signs follow `operator(u) - f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PdeFamily {
    /// `-Δu + c u + q u² = f`.
    Elliptic { c: f64, q: f64 },
    /// `det ∇²u = f`.
    MongeAmpere,
    /// `u_t - Δu = f`.
    Parabolic,
    /// `u_tt - Δu = f`.
    Wave,
}

impl PdeFamily {
    pub fn is_time_dependent(self) -> bool {
        matches!(self, PdeFamily::Parabolic | PdeFamily::Wave)
    }
}

/// Exact solution, its derivatives and the matching source.
#[derive(Clone)]
pub struct SourceTerm {
    pub family: PdeFamily,
    /// Spatial dimension.
    pub d: usize,
    pub u: Field,
    /// Spatial gradient, width `d`.
    pub grad: Field,
    /// Time derivative (time-dependent problems only).
    pub u_t: Option<Field>,
    pub f: Field,
}

impl SourceTerm {
    /// Number of input coordinates (time last).
    pub fn input_dim(&self) -> usize {
        self.d + self.family.is_time_dependent() as usize
    }
}

fn s<'t>(x: Jet<'t>) -> Jet<'t> {
    x.norm_sq()
}

fn sum<'t>(parts: impl IntoIterator<Item = Jet<'t>>) -> Jet<'t> {
    parts.into_iter().reduce(|a, b| a + b).expect("empty sum")
}

fn product<'t>(parts: impl IntoIterator<Item = Jet<'t>>) -> Option<Jet<'t>> {
    parts.into_iter().reduce(|a, b| a * b)
}

/// `Π sin(πx_i)` over the first `d` coordinates and its spatial gradient.
fn sine_product<'t>(x: Jet<'t>, d: usize) -> (Jet<'t>, Jet<'t>) {
    let sines: Vec<Jet<'t>> = (0..d).map(|i| x.col(i).scale(PI).sin()).collect();
    let p = product(sines.iter().copied()).unwrap();
    let grad: Vec<Jet<'t>> = (0..d)
        .map(|i| {
            let c = x.col(i).scale(PI).cos().scale(PI);
            match product((0..d).filter(|&k| k != i).map(|k| sines[k])) {
                Some(rest) => c * rest,
                None => c,
            }
        })
        .collect();
    (p, Jet::concat(&grad))
}

/// Linear factors of the pentagon multiplier and their gradients.
const PENTAGON_FACTORS: [([f64; 2], f64); 5] = [
    ([1.0, -1.0], 1.0),
    ([1.0, 1.0], 0.0),
    ([1.0, 0.0], 0.4),
    ([0.0, 1.0], 0.0),
    ([0.0, 1.0], -1.0),
];

/// `(ψ, ∂_1 ψ, ∂_2 ψ, Δψ)` of the pentagon multiplier, by the product rule
/// over its linear factors.
fn pentagon_derivs<'t>(x: Jet<'t>) -> (Jet<'t>, Jet<'t>, Jet<'t>, Jet<'t>) {
    let (x1, x2) = (x.col(0), x.col(1));
    let factors: Vec<Jet<'t>> = PENTAGON_FACTORS
        .iter()
        .map(|(a, c)| x1.scale(a[0]) + x2.scale(a[1]) + *c)
        .collect();
    let without = |skip: &[usize]| {
        product((0..5).filter(|k| !skip.contains(k)).map(|k| factors[k])).unwrap()
    };
    let psi = pentagon_psi(x);
    let d1 = sum((0..5)
        .filter(|&k| PENTAGON_FACTORS[k].0[0] != 0.0)
        .map(|k| without(&[k]).scale(PENTAGON_FACTORS[k].0[0])));
    let d2 = sum((0..5)
        .filter(|&k| PENTAGON_FACTORS[k].0[1] != 0.0)
        .map(|k| without(&[k]).scale(PENTAGON_FACTORS[k].0[1])));
    let mut terms = Vec::new();
    for k in 0..5 {
        for m in k + 1..5 {
            let (a, b) = (PENTAGON_FACTORS[k].0, PENTAGON_FACTORS[m].0);
            let dot = a[0] * b[0] + a[1] * b[1];
            if dot != 0.0 {
                terms.push(without(&[k, m]).scale(2.0 * dot));
            }
        }
    }
    (psi, d1, d2, sum(terms))
}

/// `Σ_j cos(jπx_i)` summed over the columns of `x` for each listed `j`,
/// with weights.
fn cos_series<'t>(x: Jet<'t>, terms: &[(f64, f64)]) -> Jet<'t> {
    sum(terms.iter().map(|&(w, j)| x.scale(j * PI).cos().scale(w))).sum_width()
}

fn sin_series<'t>(x: Jet<'t>, terms: &[(f64, f64)]) -> Jet<'t> {
    sum(terms.iter().map(|&(w, j)| x.scale(j * PI).sin().scale(w)))
}

/// The manufactured solution and source of an experiment.
pub fn manufactured_source(id: ExperimentId, d: usize) -> Result<SourceTerm> {
    if d == 0 {
        return Err(Error::Unsupported("dimension must be positive".into()));
    }
    if let Some(fixed) = id.fixed_dim() {
        if d != fixed {
            return Err(Error::Unsupported(format!("{id} is defined for d = {fixed} only")));
        }
    }
    if matches!(id, ExperimentId::MixedSlab | ExperimentId::MixedComplex2d) && d < 2 {
        return Err(Error::Unsupported(format!("{id} needs d >= 2")));
    }
    let df = d as f64;
    let pi2 = PI * PI;
    let elliptic = |c: f64, q: f64| PdeFamily::Elliptic { c, q };
    let src = match id {
        ExperimentId::DirichletEllipticBall => SourceTerm {
            family: elliptic(0.0, 1.0),
            d,
            u: field(|x: Jet<'_>| s(x).exp()),
            grad: field(|x: Jet<'_>| x * s(x).exp().scale(2.0)),
            u_t: None,
            f: field(move |x: Jet<'_>| {
                let r = s(x);
                let e = r.exp();
                e * e - (r.scale(4.0) + 2.0 * df) * e
            }),
        },
        ExperimentId::MongeAmpere => SourceTerm {
            family: PdeFamily::MongeAmpere,
            d,
            u: field(move |x: Jet<'_>| s(x).scale(1.0 / df).exp()),
            grad: field(move |x: Jet<'_>| x * s(x).scale(1.0 / df).exp().scale(2.0 / df)),
            u_t: None,
            f: field(move |x: Jet<'_>| {
                let r = s(x);
                r.exp() * (r.scale(2.0 / df) + 1.0) * (2.0 / df).powi(d as i32)
            }),
        },
        ExperimentId::NeumannCube => SourceTerm {
            family: elliptic(1.0, 0.0),
            d,
            u: field(|x: Jet<'_>| x.exp().sum_width()),
            grad: field(|x: Jet<'_>| x.exp()),
            u_t: None,
            f: field::constant(0.0),
        },
        ExperimentId::NeumannBall | ExperimentId::MixedAnnulus => {
            let c = if id == ExperimentId::NeumannBall { -1.0 } else { 0.0 };
            SourceTerm {
                family: elliptic(c, 0.0),
                d,
                u: field(|x: Jet<'_>| (s(x) - 1.0).cos()),
                grad: field(|x: Jet<'_>| x * (s(x) - 1.0).sin().scale(-2.0)),
                u_t: None,
                f: field(move |x: Jet<'_>| {
                    let r = s(x);
                    let (sn, cs) = ((r - 1.0).sin(), (r - 1.0).cos());
                    sn.scale(2.0 * df) + r.scale(4.0) * cs + cs.scale(c)
                }),
            }
        }
        ExperimentId::RobinSumDiff | ExperimentId::RobinAugmented => SourceTerm {
            family: elliptic(pi2, 0.0),
            d,
            u: field(|x: Jet<'_>| x.sum_width().sin()),
            grad: field(|x: Jet<'_>| x.sum_width().cos() + x.scale(0.0)),
            u_t: None,
            f: field(move |x: Jet<'_>| x.sum_width().sin().scale(df + pi2)),
        },
        ExperimentId::MixedSlab => {
            SourceTerm {
                family: elliptic(0.0, 0.0),
                d,
                u: field(move |x: Jet<'_>| bubble1(x) * cos_series(x.cols(1, d - 1), &[(1.0, 1.0)])),
                grad: field(move |x: Jet<'_>| {
                    let c = cos_series(x.cols(1, d - 1), &[(1.0, 1.0)]);
                    let x1 = x.col(0);
                    let first = (1.0 - x1.scale(2.0)) * c;
                    let others = sin_series(x.cols(1, d - 1), &[(-PI, 1.0)]) * bubble1(x);
                    Jet::concat(&[first, others])
                }),
                u_t: None,
                f: field(move |x: Jet<'_>| {
                    let c = cos_series(x.cols(1, d - 1), &[(1.0, 1.0)]);
                    c.scale(2.0) + (bubble1(x) * c).scale(pi2)
                }),
            }
        }
        ExperimentId::MixedComplex2d => {
            SourceTerm {
                family: elliptic(0.0, 0.0),
                d,
                u: field(move |x: Jet<'_>| pentagon_psi(x) * cos_series(x.cols(1, d - 1), &[(1.0, 1.0)])),
                grad: field(move |x: Jet<'_>| {
                    let (psi, d1, d2, _) = pentagon_derivs(x);
                    let c = cos_series(x.cols(1, d - 1), &[(1.0, 1.0)]);
                    let dc = sin_series(x.cols(1, d - 1), &[(-PI, 1.0)]);
                    let mut cols = vec![d1 * c, d2 * c + psi * dc.col(0)];
                    if d > 2 {
                        cols.push(psi * dc.cols(1, d - 2));
                    }
                    Jet::concat(&cols)
                }),
                u_t: None,
                f: field(move |x: Jet<'_>| {
                    let (psi, _, d2, lap) = pentagon_derivs(x);
                    let c = cos_series(x.cols(1, d - 1), &[(1.0, 1.0)]);
                    let s2 = x.col(1).scale(PI).sin();
                    (psi * c).scale(pi2) - lap * c + (d2 * s2).scale(2.0 * PI)
                }),
            }
        }
        ExperimentId::PeriodicSum => SourceTerm {
            family: elliptic(pi2, 0.0),
            d,
            u: field(|x: Jet<'_>| cos_series(x, &[(1.0, 1.0), (1.0, 2.0)])),
            grad: field(|x: Jet<'_>| sin_series(x, &[(-PI, 1.0), (-2.0 * PI, 2.0)])),
            u_t: None,
            f: field(move |x: Jet<'_>| cos_series(x, &[(2.0 * pi2, 1.0), (5.0 * pi2, 2.0)])),
        },
        ExperimentId::PeriodicProduct => SourceTerm {
            family: elliptic(pi2, 0.0),
            d,
            u: field(|x: Jet<'_>| (x.scale(PI).cos() * x.scale(2.0 * PI).cos()).sum_width()),
            grad: field(|x: Jet<'_>| {
                let (a, b) = (x.scale(PI), x.scale(2.0 * PI));
                (a.sin() * b.cos()).scale(-PI) - (a.cos() * b.sin()).scale(2.0 * PI)
            }),
            u_t: None,
            f: field(move |x: Jet<'_>| cos_series(x, &[(pi2, 1.0), (5.0 * pi2, 3.0)])),
        },
        ExperimentId::Periodic1dHighFreq => {
            const FREQS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
            SourceTerm {
                family: elliptic(pi2, 0.0),
                d,
                u: field(|x: Jet<'_>| cos_series(x, &FREQS.map(|j| (1.0, j)))),
                grad: field(|x: Jet<'_>| sin_series(x, &FREQS.map(|j| (-j * PI, j)))),
                u_t: None,
                f: field(move |x: Jet<'_>| cos_series(x, &FREQS.map(|j| ((j * j + 1.0) * pi2, j)))),
            }
        }
        ExperimentId::Parabolic => SourceTerm {
            family: PdeFamily::Parabolic,
            d,
            u: field(move |x: Jet<'_>| x.col(d) * sine_product(x, d).0),
            grad: field(move |x: Jet<'_>| x.col(d) * sine_product(x, d).1),
            u_t: Some(field(move |x: Jet<'_>| sine_product(x, d).0)),
            f: field(move |x: Jet<'_>| {
                sine_product(x, d).0 * (x.col(d).scale(df * pi2) + 1.0)
            }),
        },
        ExperimentId::Wave => SourceTerm {
            family: PdeFamily::Wave,
            d,
            u: field(move |x: Jet<'_>| x.col(d).square() * sine_product(x, d).0),
            grad: field(move |x: Jet<'_>| x.col(d).square() * sine_product(x, d).1),
            u_t: Some(field(move |x: Jet<'_>| x.col(d).scale(2.0) * sine_product(x, d).0)),
            f: field(move |x: Jet<'_>| {
                sine_product(x, d).0 * (x.col(d).square().scale(df * pi2) + 2.0)
            }),
        },
    };
    Ok(src)
}

fn bubble1<'t>(x: Jet<'t>) -> Jet<'t> {
    let x1 = x.col(0);
    x1 * (1.0 - x1)
}

/// Fourth-order central difference weights for first and second derivatives.
const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
const D2: [(f64, f64); 5] = [
    (-2.0, -1.0 / 12.0),
    (-1.0, 16.0 / 12.0),
    (0.0, -30.0 / 12.0),
    (1.0, 16.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

/// Finite-difference derivatives of `u` at one point.
struct FdProbe<'a> {
    u: &'a Field,
    x: &'a [f64],
    h: f64,
}

impl FdProbe<'_> {
    fn eval_offsets(&self, offsets: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
        let dim = self.x.len();
        let mut pts = Vec::with_capacity(offsets.len() * dim);
        for off in offsets {
            let start = pts.len();
            pts.extend_from_slice(self.x);
            for &(i, k) in off {
                pts[start + i] += k * self.h;
            }
        }
        field::eval(self.u, &pts, dim)
    }

    fn first(&self, i: usize) -> Result<f64> {
        let offs: Vec<_> = D1.iter().map(|&(k, _)| vec![(i, k)]).collect();
        let v = self.eval_offsets(&offs)?;
        Ok(D1.iter().zip(v).map(|(&(_, w), f)| w * f).sum::<f64>() / self.h)
    }

    fn second(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            let offs: Vec<_> = D2.iter().map(|&(k, _)| vec![(i, k)]).collect();
            let v = self.eval_offsets(&offs)?;
            return Ok(D2.iter().zip(v).map(|(&(_, w), f)| w * f).sum::<f64>() / (self.h * self.h));
        }
        let mut offs = Vec::new();
        let mut ws = Vec::new();
        for &(a, wa) in &D1 {
            for &(b, wb) in &D1 {
                offs.push(vec![(i, a), (j, b)]);
                ws.push(wa * wb);
            }
        }
        let v = self.eval_offsets(&offs)?;
        Ok(ws.iter().zip(v).map(|(w, f)| w * f).sum::<f64>() / (self.h * self.h))
    }
}

/// The PDE operator applied to `src.u` at `x` by fourth-order finite
/// differences, together with the first-order quantities (spatial gradient
/// and time derivative) estimated the same way.
pub fn fd_operator(src: &SourceTerm, x: &[f64], h: f64) -> Result<(f64, Vec<f64>, Option<f64>)> {
    let probe = FdProbe { u: &src.u, x, h };
    let d = src.d;
    let grad: Vec<f64> = (0..d).map(|i| probe.first(i)).collect::<Result<_>>()?;
    let lap = || -> Result<f64> { (0..d).map(|i| probe.second(i, i)).sum() };
    let u0 = field::eval(&src.u, x, x.len())?[0];
    let (op, ut) = match src.family {
        PdeFamily::Elliptic { c, q } => (-lap()? + c * u0 + q * u0 * u0, None),
        PdeFamily::MongeAmpere => {
            let mut hess = vec![0.0; d * d];
            for i in 0..d {
                for j in i..d {
                    let v = probe.second(i, j)?;
                    hess[i * d + j] = v;
                    hess[j * d + i] = v;
                }
            }
            (crate::autodiff::kernels::det(&hess, d), None)
        }
        PdeFamily::Parabolic => {
            let ut = probe.first(d)?;
            (ut - lap()?, Some(ut))
        }
        PdeFamily::Wave => {
            let ut = probe.first(d)?;
            (probe.second(d, d)? - lap()?, Some(ut))
        }
    };
    Ok((op, grad, ut))
}

/// Largest discrepancy between the closed forms of a source term and finite
/// differences of its exact solution over the given points, each measured
/// relative to `max(1, |reference|)`. Returns `(source, gradient, time
/// derivative)` errors.
pub fn validate_source(src: &SourceTerm, points: &[f64]) -> Result<(f64, f64, f64)> {
    let dim = src.input_dim();
    let f = field::eval(&src.f, points, dim)?;
    let g = field::eval(&src.grad, points, dim)?;
    let ut = match &src.u_t {
        Some(t) => Some(field::eval(t, points, dim)?),
        None => None,
    };
    let rel = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1.0);
    let (mut ef, mut eg, mut et) = (0.0f64, 0.0f64, 0.0f64);
    for (k, x) in points.chunks(dim).enumerate() {
        let (op, grad, t) = fd_operator(src, x, 1e-3)?;
        ef = ef.max(rel(op, f[k]));
        for i in 0..src.d {
            eg = eg.max(rel(grad[i], g[k * src.d + i]));
        }
        if let (Some(t), Some(ut)) = (t, &ut) {
            et = et.max(rel(t, ut[k]));
        }
    }
    Ok((ef, eg, et))
}
