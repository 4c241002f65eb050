//! Multipliers `L`, extensions `G` and normal extensions per experiment.

use std::f64::consts::E;

use crate::autodiff::Jet;
use crate::error::{Error, Result};
use crate::experiment::ExperimentId;
use crate::field::{bubble, constant, field, Field};

/// `value = L ⊙ N + G`, with `L` vanishing where the value is prescribed.
/// `L` and `G` have the width of the network they wrap (or width 1 to
/// broadcast).
#[derive(Clone)]
pub struct ValueData {
    pub l: Field,
    pub g: Field,
}

/// Data for a flux condition `a ∇u·ν = g` (or `a ∇u·ν + u = g` for Robin)
/// enforced through `F = (G - a N·ν̃) / D`.
#[derive(Clone)]
pub struct FluxData {
    /// Vanishes on the constrained boundary portion.
    pub l: Field,
    pub grad_l: Field,
    /// Smooth extension `ν̃` of the outward normal.
    pub normal: Field,
    /// Smooth extension `D` of `a ∇L·ν`, bounded away from zero.
    pub denom: Field,
    /// Boundary data extension.
    pub g: Field,
    pub a: f64,
}

#[derive(Clone)]
pub enum FluxForm {
    /// `p = F ∇L + N*`.
    Projected(FluxData),
    /// `p = L ⊙ N* + G`, with `L_i` vanishing on the faces normal to axis `i`.
    Componentwise(ValueData),
}

/// Everything a construction needs for one experiment.
#[derive(Clone, Default)]
pub struct BoundaryData {
    /// Constraint on `u`.
    pub value: Option<ValueData>,
    /// Constraint on the flux `p`.
    pub flux: Option<FluxForm>,
    /// Constraint on the time-derivative variable `v`.
    pub velocity: Option<ValueData>,
    /// Componentwise constraints on split variables (Robin formulations).
    pub split: Vec<ValueData>,
}

fn s<'t>(x: Jet<'t>) -> Jet<'t> {
    x.norm_sq()
}

fn spatial<'t>(x: Jet<'t>, d: usize) -> Jet<'t> {
    x.cols(0, d)
}

/// `ψ = (x1 - x2 + 1)(x1 + x2)(x1 + 2/5) x2 (x2 - 1)`.
pub(crate) fn pentagon_psi<'t>(x: Jet<'t>) -> Jet<'t> {
    let (x1, x2) = (x.col(0), x.col(1));
    (x1 - x2 + 1.0) * (x1 + x2) * (x1 + 0.4) * x2 * (x2 - 1.0)
}

/// `(x_i (1 - x_i))_i` with the listed axes replaced by 1.
fn face_bubbles(d: usize, free: usize) -> Field {
    field(move |x: Jet<'_>| {
        let cols: Vec<Jet<'_>> = (0..d)
            .map(|i| {
                if i < free {
                    x.col(i).lit(1.0)
                } else {
                    let xi = x.col(i);
                    xi * (1.0 - xi)
                }
            })
            .collect();
        broadcast_concat(x, &cols)
    })
}

/// Concatenates width-1 columns, broadcasting constants to the batch.
fn broadcast_concat<'t>(x: Jet<'t>, cols: &[Jet<'t>]) -> Jet<'t> {
    let zero = x.col(0).scale(0.0);
    let full: Vec<Jet<'t>> = cols
        .iter()
        .map(|c| if c.batch() == x.batch() { *c } else { *c + zero })
        .collect();
    Jet::concat(&full)
}

/// Ball flux data with `L = (‖x‖² - 1)/2`, `∇L = x`, `ν̃ = x`, `D = a`.
fn ball_flux(g: Field, a: f64) -> FluxData {
    FluxData {
        l: field(|x: Jet<'_>| (s(x) - 1.0).scale(0.5)),
        grad_l: field(|x: Jet<'_>| x),
        normal: field(|x: Jet<'_>| x),
        denom: constant(a),
        g,
        a,
    }
}

/// Returns the boundary functions of an experiment in dimension `d`
/// (spatial dimension for time-dependent problems).
pub fn boundary_functions(id: ExperimentId, d: usize) -> Result<BoundaryData> {
    if d == 0 {
        return Err(Error::Unsupported("dimension must be positive".into()));
    }
    let needs2 = matches!(id, ExperimentId::MixedComplex2d | ExperimentId::MixedSlab);
    if needs2 && d < 2 {
        return Err(Error::Unsupported(format!("{id} needs d >= 2")));
    }
    let mut b = BoundaryData::default();
    match id {
        ExperimentId::DirichletEllipticBall => {
            b.value = Some(ValueData {
                l: field(|x: Jet<'_>| s(x).sqrt() - 1.0),
                g: constant(E),
            });
        }
        ExperimentId::MongeAmpere => {
            let g = (1.0 / d as f64).exp();
            b.value = Some(ValueData {
                l: field(|x: Jet<'_>| 1.0 - s(x)),
                g: constant(g),
            });
        }
        ExperimentId::NeumannCube => {
            b.flux = Some(FluxForm::Componentwise(ValueData {
                l: face_bubbles(d, 0),
                g: field(|x: Jet<'_>| x.scale(E - 1.0).shift(1.0)),
            }));
        }
        ExperimentId::NeumannBall => {
            b.flux = Some(FluxForm::Projected(ball_flux(constant(0.0), 1.0)));
        }
        ExperimentId::RobinSumDiff => {
            let g = robin_split_extension(d, true);
            b.split = vec![
                ValueData {
                    l: field(|x: Jet<'_>| x),
                    g: g.clone(),
                },
                ValueData {
                    l: field(|x: Jet<'_>| 1.0 - x),
                    g,
                },
            ];
        }
        ExperimentId::RobinAugmented => {
            b.split = vec![ValueData {
                l: field(|x: Jet<'_>| x * (1.0 - x)),
                g: robin_split_extension(d, false),
            }];
        }
        ExperimentId::MixedSlab => {
            b.value = Some(ValueData {
                l: field(|x: Jet<'_>| bubble(x, &[0])),
                g: constant(0.0),
            });
            b.flux = Some(FluxForm::Componentwise(ValueData {
                l: face_bubbles(d, 1),
                g: constant(0.0),
            }));
        }
        ExperimentId::MixedComplex2d => {
            b.value = Some(ValueData {
                l: field(pentagon_psi),
                g: constant(0.0),
            });
            b.flux = Some(FluxForm::Componentwise(ValueData {
                l: face_bubbles(d, 2),
                g: constant(0.0),
            }));
        }
        ExperimentId::MixedAnnulus => {
            b.value = Some(ValueData {
                l: field(|x: Jet<'_>| s(x) - 0.25),
                g: constant(0.75f64.cos()),
            });
            b.flux = Some(FluxForm::Projected(ball_flux(constant(0.0), 1.0)));
        }
        ExperimentId::PeriodicSum | ExperimentId::PeriodicProduct | ExperimentId::Periodic1dHighFreq => {}
        ExperimentId::Parabolic | ExperimentId::Wave => {
            let dims: Vec<usize> = (0..d).collect();
            b.value = Some(ValueData {
                l: field(move |x: Jet<'_>| x.col(d) * bubble(x, &dims)),
                g: constant(0.0),
            });
            if id == ExperimentId::Wave {
                b.velocity = Some(ValueData {
                    l: field(move |x: Jet<'_>| x.col(d)),
                    g: constant(0.0),
                });
            }
        }
    }
    Ok(b)
}

/// `G_i = sin S + c_i cos S` with `S = Σ x_k`; `c_i = 1 - 2x_i` for the
/// sum/difference split (so `G_i = u + ∂_i u` at `x_i = 0` and `u - ∂_i u` at
/// `x_i = 1`), `c_i = 1` for the augmented variable.
fn robin_split_extension(d: usize, sumdiff: bool) -> Field {
    field(move |x: Jet<'_>| {
        let xs = spatial(x, d);
        let sum = xs.sum_width();
        let (sn, cs) = (sum.sin(), sum.cos());
        if sumdiff {
            sn + cs * (1.0 - xs.scale(2.0))
        } else {
            (sn + cs) + xs.scale(0.0)
        }
    })
}

/// Robin data on the unit ball for `u = cos(‖x‖² - 1)`: `∇u·ν + u = 1` on
/// the sphere, extended by `G = -2‖x‖² sin(‖x‖² - 1) + cos(‖x‖² - 1)`.
pub fn robin_ball_data() -> FluxData {
    ball_flux(
        field(|x: Jet<'_>| {
            let r = s(x);
            let a = r - 1.0;
            a.cos() - r.scale(2.0) * a.sin()
        }),
        1.0,
    )
}

/// Robin data on `[0, 1]` with `L = x(1 - x)`, `ν̃ = 2x - 1`, `D = -1` and
/// the given extension of the boundary data.
pub fn robin_interval_data(g: Field) -> FluxData {
    FluxData {
        l: field(|x: Jet<'_>| x * (1.0 - x)),
        grad_l: field(|x: Jet<'_>| 1.0 - x.scale(2.0)),
        normal: field(|x: Jet<'_>| x.scale(2.0) - 1.0),
        denom: constant(-1.0),
        g,
        a: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::eval;
    use crate::geometry::{Domain, Portion};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    fn min_abs(v: &[f64]) -> f64 {
        v.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()))
    }

    #[test]
    fn dirichlet_multipliers_vanish_on_boundary_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases = [
            (ExperimentId::DirichletEllipticBall, Domain::Ball { d: 3 }, Portion::All),
            (ExperimentId::MongeAmpere, Domain::Ball { d: 2 }, Portion::All),
            (ExperimentId::MixedAnnulus, Domain::Annulus { d: 2, inner: 0.5 }, Portion::InnerSphere),
            (ExperimentId::MixedComplex2d, Domain::NotchedPentagon { d: 3 }, Portion::Polygon),
            (ExperimentId::MixedSlab, Domain::Cube { d: 3, lo: 0.0, hi: 1.0 }, Portion::Faces(vec![0])),
        ];
        for (id, dom, portion) in cases {
            let d = dom.dim();
            let b = boundary_functions(id, d).unwrap();
            let l = b.value.unwrap().l;
            let bd = dom.sample_boundary(&portion, 10_000, &mut rng).unwrap();
            assert!(max_abs(&eval(&l, &bd.points, d).unwrap()) <= 1e-12, "{id}");
            let inner = dom.sample_interior(10_000, &mut rng);
            assert!(min_abs(&eval(&l, &inner, d).unwrap()) > 0.0, "{id}");
        }
    }

    #[test]
    fn ball_flux_denominator_matches_normal_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let FluxForm::Projected(f) = boundary_functions(ExperimentId::NeumannBall, 3).unwrap().flux.unwrap() else {
            panic!("projected flux expected")
        };
        let bd = Domain::Ball { d: 3 }.sample_boundary(&Portion::All, 1000, &mut rng).unwrap();
        let grad = eval(&f.grad_l, &bd.points, 3).unwrap();
        let den = eval(&f.denom, &bd.points, 3).unwrap();
        for k in 0..1000 {
            let gn: f64 = (0..3).map(|i| grad[3 * k + i] * bd.normals[3 * k + i]).sum();
            assert!((f.a * gn - den[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn robin_split_extension_matches_exact_split() {
        let g = robin_split_extension(2, true);
        let pts = [0.0, 0.3, 1.0, 0.3];
        let v = eval(&g, &pts, 2).unwrap();
        let s0 = 0.3f64;
        assert!((v[0] - (s0.sin() + s0.cos())).abs() < 1e-15);
        let s1 = 1.3f64;
        assert!((v[2] - (s1.sin() - s1.cos())).abs() < 1e-15);
        let g = robin_split_extension(2, false);
        assert_eq!(eval(&g, &pts, 2).unwrap().len(), 4);
    }
}
