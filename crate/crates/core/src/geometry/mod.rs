//! Domains, uniform samplers and outward normals.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub(crate) mod boundary;

pub use boundary::{
    boundary_functions, robin_ball_data, robin_interval_data, BoundaryData, FluxData, FluxForm,
    ValueData,
};

/// Right edge `x1 = -0.4` of the notched pentagon.
const PENTAGON_RIGHT: f64 = -0.4;

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// `{‖x‖ < 1}`.
    Ball { d: usize },
    /// `(lo, hi)^d`.
    Cube { d: usize, lo: f64, hi: f64 },
    /// `{inner < ‖x‖ < 1}`.
    Annulus { d: usize, inner: f64 },
    /// Pentagon with vertices (−1,0), (−0.4,0), (−0.4,1), (−1,1), (−0.5,0.5)
    /// in the first two coordinates, times `(0,1)^(d-2)`.
    NotchedPentagon { d: usize },
    /// `base × (0, 1)`, time appended as the last coordinate.
    TimeCylinder { base: Box<Domain> },
}

/// Part of a boundary to sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Portion {
    All,
    /// Cube faces normal to the listed axes (for the pentagon domain: the
    /// faces of the extra unit-interval coordinates).
    Faces(Vec<usize>),
    InnerSphere,
    OuterSphere,
    /// The five polygon edges of the pentagon domain.
    Polygon,
    /// `t = 0` slice of a time cylinder.
    Initial,
    /// `∂base × (0, 1)` of a time cylinder.
    Lateral,
}

/// Boundary points with unit outward normals, both row-major.
#[derive(Clone, Debug, Default)]
pub struct BoundarySample {
    pub points: Vec<f64>,
    pub normals: Vec<f64>,
}

impl BoundarySample {
    fn with_capacity(n: usize) -> Self {
        BoundarySample {
            points: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
        }
    }
}

fn unit_direction(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 1e-12 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Edges of the pentagon as (start, end, outward normal).
fn pentagon_edges() -> [([f64; 2], [f64; 2], [f64; 2]); 5] {
    let h = 1.0 / SQRT_2;
    [
        ([-1.0, 0.0], [PENTAGON_RIGHT, 0.0], [0.0, -1.0]),
        ([PENTAGON_RIGHT, 0.0], [PENTAGON_RIGHT, 1.0], [1.0, 0.0]),
        ([PENTAGON_RIGHT, 1.0], [-1.0, 1.0], [0.0, 1.0]),
        ([-1.0, 1.0], [-0.5, 0.5], [-h, -h]),
        ([-0.5, 0.5], [-1.0, 0.0], [-h, h]),
    ]
}

fn pentagon_area() -> f64 {
    0.35
}

fn pentagon_perimeter() -> f64 {
    pentagon_edges()
        .iter()
        .map(|(a, b, _)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        .sum()
}

/// Picks an index with probability proportional to `weights`.
fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

impl Domain {
    /// Number of coordinates of a point (including time).
    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { d }
            | Domain::Cube { d, .. }
            | Domain::Annulus { d, .. }
            | Domain::NotchedPentagon { d } => *d,
            Domain::TimeCylinder { base } => base.dim() + 1,
        }
    }

    /// Spatial dimension (excluding time).
    pub fn spatial_dim(&self) -> usize {
        match self {
            Domain::TimeCylinder { base } => base.dim(),
            _ => self.dim(),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Domain::TimeCylinder { .. })
    }

    /// Negative strictly inside, zero on the boundary, positive outside.
    /// Not a distance in general, but its sign is exact.
    pub fn level(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Ball { .. } => norm(x) - 1.0,
            Domain::Cube { lo, hi, .. } => x
                .iter()
                .map(|&v| (lo - v).max(v - hi))
                .fold(f64::NEG_INFINITY, f64::max),
            Domain::Annulus { inner, .. } => {
                let r = norm(x);
                (inner - r).max(r - 1.0)
            }
            Domain::NotchedPentagon { .. } => {
                let (x1, x2) = (x[0], x[1]);
                let mut l = (-x2)
                    .max(x2 - 1.0)
                    .max(x1 - PENTAGON_RIGHT)
                    .max((x2 - 1.0).min(-x2) - x1);
                for &v in &x[2..] {
                    l = l.max(-v).max(v - 1.0);
                }
                l
            }
            Domain::TimeCylinder { base } => {
                let (xs, t) = x.split_at(x.len() - 1);
                base.level(xs).max(-t[0]).max(t[0] - 1.0)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.level(x) < 0.0
    }

    /// Uniform i.i.d. interior points, row-major.
    pub fn sample_interior(&self, count: usize, rng: &mut impl Rng) -> Vec<f64> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(count * dim);
        for _ in 0..count {
            self.push_interior(&mut out, rng);
        }
        out
    }

    fn push_interior(&self, out: &mut Vec<f64>, rng: &mut impl Rng) {
        match self {
            Domain::Ball { d } => {
                let dir = unit_direction(*d, rng);
                let r = rng.random::<f64>().powf(1.0 / *d as f64);
                out.extend(dir.iter().map(|v| v * r));
            }
            Domain::Cube { d, lo, hi } => {
                for _ in 0..*d {
                    out.push(lo + (hi - lo) * rng.random::<f64>());
                }
            }
            Domain::Annulus { d, inner } => {
                let dir = unit_direction(*d, rng);
                let df = *d as f64;
                let r0 = inner.powf(df);
                let r = (r0 + rng.random::<f64>() * (1.0 - r0)).powf(1.0 / df);
                out.extend(dir.iter().map(|v| v * r));
            }
            Domain::NotchedPentagon { d } => {
                let (x1, x2) = loop {
                    let x1 = -1.0 + (PENTAGON_RIGHT + 1.0) * rng.random::<f64>();
                    let x2 = rng.random::<f64>();
                    if x1 > (x2 - 1.0).min(-x2) {
                        break (x1, x2);
                    }
                };
                out.push(x1);
                out.push(x2);
                for _ in 2..*d {
                    out.push(rng.random::<f64>());
                }
            }
            Domain::TimeCylinder { base } => {
                base.push_interior(out, rng);
                out.push(rng.random::<f64>());
            }
        }
    }

    /// Uniform points on a boundary portion with unit outward normals.
    pub fn sample_boundary(
        &self,
        portion: &Portion,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<BoundarySample> {
        let undefined = || {
            Error::Unsupported(format!("boundary portion {portion:?} is not defined for {self:?}"))
        };
        let dim = self.dim();
        let mut s = BoundarySample::with_capacity(count * dim);
        match (self, portion) {
            (Domain::Ball { d }, Portion::All | Portion::OuterSphere) => {
                for _ in 0..count {
                    let dir = unit_direction(*d, rng);
                    s.points.extend_from_slice(&dir);
                    s.normals.extend_from_slice(&dir);
                }
            }
            (Domain::Annulus { d, inner }, Portion::All | Portion::InnerSphere | Portion::OuterSphere) => {
                let df = *d as f64;
                let w_in = inner.powf(df - 1.0);
                for _ in 0..count {
                    let dir = unit_direction(*d, rng);
                    let on_inner = match portion {
                        Portion::InnerSphere => true,
                        Portion::OuterSphere => false,
                        _ => rng.random::<f64>() < w_in / (1.0 + w_in),
                    };
                    if on_inner {
                        s.points.extend(dir.iter().map(|v| v * inner));
                        s.normals.extend(dir.iter().map(|v| -v));
                    } else {
                        s.points.extend_from_slice(&dir);
                        s.normals.extend_from_slice(&dir);
                    }
                }
            }
            (Domain::Cube { d, lo, hi }, Portion::All | Portion::Faces(_)) => {
                let axes: Vec<usize> = match portion {
                    Portion::Faces(a) => a.clone(),
                    _ => (0..*d).collect(),
                };
                if axes.is_empty() || axes.iter().any(|&a| a >= *d) {
                    return Err(undefined());
                }
                for _ in 0..count {
                    let axis = axes[rng.random_range(0..axes.len())];
                    let upper = rng.random::<bool>();
                    for k in 0..*d {
                        if k == axis {
                            s.points.push(if upper { *hi } else { *lo });
                        } else {
                            s.points.push(lo + (hi - lo) * rng.random::<f64>());
                        }
                        s.normals.push(match (k == axis, upper) {
                            (true, true) => 1.0,
                            (true, false) => -1.0,
                            _ => 0.0,
                        });
                    }
                }
            }
            (Domain::NotchedPentagon { d }, Portion::All | Portion::Polygon | Portion::Faces(_)) => {
                let extra: Vec<usize> = match portion {
                    Portion::Faces(a) => a.clone(),
                    Portion::All => (2..*d).collect(),
                    _ => Vec::new(),
                };
                if extra.iter().any(|&a| a < 2 || a >= *d) {
                    return Err(undefined());
                }
                let use_polygon = !matches!(portion, Portion::Faces(_));
                if !use_polygon && extra.is_empty() {
                    return Err(undefined());
                }
                let edges = pentagon_edges();
                let lens: Vec<f64> = edges
                    .iter()
                    .map(|(a, b, _)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
                    .collect();
                let poly_w = if use_polygon { pentagon_perimeter() } else { 0.0 };
                let face_w = 2.0 * extra.len() as f64 * pentagon_area();
                let interior = Domain::NotchedPentagon { d: 2 };
                for _ in 0..count {
                    let start = s.points.len();
                    if rng.random::<f64>() * (poly_w + face_w) < poly_w {
                        let e = pick(&lens, rng);
                        let (a, b, nu) = edges[e];
                        let t = rng.random::<f64>();
                        s.points.push(a[0] + t * (b[0] - a[0]));
                        s.points.push(a[1] + t * (b[1] - a[1]));
                        s.normals.extend_from_slice(&nu);
                        for _ in 2..*d {
                            s.points.push(rng.random::<f64>());
                            s.normals.push(0.0);
                        }
                    } else {
                        interior.push_interior(&mut s.points, rng);
                        s.normals.extend_from_slice(&[0.0, 0.0]);
                        for _ in 2..*d {
                            s.points.push(rng.random::<f64>());
                            s.normals.push(0.0);
                        }
                        let axis = extra[rng.random_range(0..extra.len())];
                        let upper = rng.random::<bool>();
                        s.points[start + axis] = if upper { 1.0 } else { 0.0 };
                        s.normals[start + axis] = if upper { 1.0 } else { -1.0 };
                    }
                }
            }
            (Domain::TimeCylinder { base }, Portion::Initial) => {
                for _ in 0..count {
                    base.push_interior(&mut s.points, rng);
                    s.points.push(0.0);
                    s.normals.extend(std::iter::repeat_n(0.0, dim - 1));
                    s.normals.push(-1.0);
                }
            }
            (Domain::TimeCylinder { base }, Portion::Lateral) => {
                let inner = base.sample_boundary(&Portion::All, count, rng)?;
                let bd = dim - 1;
                for k in 0..count {
                    s.points.extend_from_slice(&inner.points[k * bd..(k + 1) * bd]);
                    s.points.push(rng.random::<f64>());
                    s.normals.extend_from_slice(&inner.normals[k * bd..(k + 1) * bd]);
                    s.normals.push(0.0);
                }
            }
            _ => return Err(undefined()),
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn ball_mean_norm() {
        let n = 100_000;
        let pts = Domain::Ball { d: 2 }.sample_interior(n, &mut rng());
        let norms: Vec<f64> = pts.chunks(2).map(norm).collect();
        let mean = norms.iter().sum::<f64>() / n as f64;
        let var = norms.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0 / 3.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn supports() {
        let mut r = rng();
        let cube = Domain::Cube { d: 4, lo: 0.0, hi: 1.0 };
        assert!(cube.sample_interior(1000, &mut r).iter().all(|v| (0.0..=1.0).contains(v)));
        let ann = Domain::Annulus { d: 3, inner: 0.5 };
        for p in ann.sample_interior(1000, &mut r).chunks(3) {
            let n = norm(p);
            assert!(n > 0.5 && n < 1.0);
        }
        let pent = Domain::NotchedPentagon { d: 3 };
        for p in pent.sample_interior(1000, &mut r).chunks(3) {
            assert!(pent.contains(p));
        }
    }

    #[test]
    fn boundary_points_lie_on_boundary_with_unit_normals() {
        let mut r = rng();
        let cases = [
            (Domain::Ball { d: 3 }, Portion::All),
            (Domain::Cube { d: 3, lo: 0.0, hi: 1.0 }, Portion::All),
            (Domain::Cube { d: 3, lo: -1.0, hi: 1.0 }, Portion::Faces(vec![1])),
            (Domain::Annulus { d: 2, inner: 0.5 }, Portion::All),
            (Domain::NotchedPentagon { d: 4 }, Portion::All),
            (Domain::NotchedPentagon { d: 2 }, Portion::Polygon),
            (
                Domain::TimeCylinder {
                    base: Box::new(Domain::Cube { d: 2, lo: 0.0, hi: 1.0 }),
                },
                Portion::Lateral,
            ),
        ];
        for (dom, portion) in cases {
            let dim = dom.dim();
            let s = dom.sample_boundary(&portion, 500, &mut r).unwrap();
            for (p, nu) in s.points.chunks(dim).zip(s.normals.chunks(dim)) {
                assert!(dom.level(p).abs() <= 1e-12, "{dom:?} {p:?}");
                assert!((norm(nu) - 1.0).abs() <= 1e-14);
                // stepping outward leaves the domain, stepping inward enters it
                let out: Vec<f64> = p.iter().zip(nu).map(|(a, b)| a + 1e-6 * b).collect();
                let inw: Vec<f64> = p.iter().zip(nu).map(|(a, b)| a - 1e-6 * b).collect();
                assert!(!dom.contains(&out), "{dom:?} {p:?} {nu:?}");
                assert!(dom.contains(&inw), "{dom:?} {p:?} {nu:?}");
            }
        }
    }

    #[test]
    fn sphere_and_face_normals() {
        let mut r = rng();
        let s = Domain::Ball { d: 2 }.sample_boundary(&Portion::All, 100, &mut r).unwrap();
        assert_eq!(s.points, s.normals);
        let s = Domain::Annulus { d: 2, inner: 0.5 }
            .sample_boundary(&Portion::InnerSphere, 100, &mut r)
            .unwrap();
        for (p, nu) in s.points.chunks(2).zip(s.normals.chunks(2)) {
            assert!((nu[0] + p[0] / 0.5).abs() < 1e-14 && (nu[1] + p[1] / 0.5).abs() < 1e-14);
        }
        let s = Domain::Cube { d: 3, lo: 0.0, hi: 1.0 }
            .sample_boundary(&Portion::Faces(vec![0]), 100, &mut r)
            .unwrap();
        for (p, nu) in s.points.chunks(3).zip(s.normals.chunks(3)) {
            if p[0] == 0.0 {
                assert_eq!(nu, &[-1.0, 0.0, 0.0]);
            } else {
                assert_eq!(nu, &[1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn undefined_portion_is_rejected() {
        let err = Domain::Ball { d: 2 }.sample_boundary(&Portion::InnerSphere, 1, &mut rng());
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn ball_octants_are_uniform() {
        let n = 100_000;
        let pts = Domain::Ball { d: 3 }.sample_interior(n, &mut rng());
        let mut counts = [0usize; 8];
        for p in pts.chunks(3) {
            let k = (p[0] > 0.0) as usize | ((p[1] > 0.0) as usize) << 1 | ((p[2] > 0.0) as usize) << 2;
            counts[k] += 1;
        }
        let e = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 1% critical value of chi-square with 7 degrees of freedom
        assert!(chi2 < 18.475, "chi2 = {chi2}");
    }
}
