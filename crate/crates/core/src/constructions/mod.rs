//! Trial functions that satisfy boundary and initial conditions for every
//! parameter value.
//!
//! A [`TrialFunction`] owns the network specs it needs (one parameter block
//! each, in order) and a builder that turns parameter jets and input points
//! into the fields `û`, `p̂`, `v̂`. Each trial also carries the checks that
//! state which constraint it satisfies identically; [`verify_exactness`]
//! evaluates them at random points for random parameters.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Jet, Order, Tape};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{Domain, FluxData, FluxForm, Portion, ValueData};
use crate::network::NetworkSpec;

/// Smallest admissible magnitude of a construction denominator.
pub const DENOM_FLOOR: f64 = 1e-8;

/// Fields produced by a trial at a batch of points.
#[derive(Clone, Debug)]
pub struct TrialFields<'t> {
    pub u: Jet<'t>,
    pub p: Option<Jet<'t>>,
    pub v: Option<Jet<'t>>,
    /// Split variables of the Robin formulations (`r¹, r²` or `r`).
    pub aux: Vec<Jet<'t>>,
}

impl<'t> TrialFields<'t> {
    fn u(u: Jet<'t>) -> Self {
        TrialFields {
            u,
            p: None,
            v: None,
            aux: Vec::new(),
        }
    }

    fn up(u: Jet<'t>, p: Option<Jet<'t>>) -> Self {
        TrialFields { p, ..TrialFields::u(u) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Dirichlet,
    Neumann,
    Robin,
    Mixed,
    Periodic,
    ParabolicIc,
    WaveIc,
    /// Raw networks; conditions, if any, enter the loss as penalties.
    None,
}

/// A network slot of a trial function.
#[derive(Clone, Debug)]
pub struct NetSlot {
    pub role: &'static str,
    pub spec: NetworkSpec,
}

type BuildFn = Arc<dyn for<'t> Fn(&[Jet<'t>], Jet<'t>) -> Result<TrialFields<'t>> + Send + Sync>;

/// Constraint residual from the fields, the points and the outward normals.
pub type ResidualFn =
    Arc<dyn for<'t> Fn(&TrialFields<'t>, Jet<'t>, Jet<'t>) -> Jet<'t> + Send + Sync>;

/// A constraint the trial satisfies identically.
#[derive(Clone)]
pub enum Check {
    Boundary {
        name: &'static str,
        portion: Portion,
        order: Order,
        tolerance: f64,
        residual: ResidualFn,
    },
    /// `û(x + I_i e_i) = û(x)` for every axis.
    Periodic { name: &'static str, periods: Vec<f64> },
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Boundary { name, .. } | Check::Periodic { name, .. } => name,
        }
    }
}

/// A constructed `(û, p̂, v̂)` bundle.
#[derive(Clone)]
pub struct TrialFunction {
    pub kind: ConstraintKind,
    pub nets: Vec<NetSlot>,
    pub checks: Vec<Check>,
    /// Coordinates per input point (time last).
    pub input_dim: usize,
    build: BuildFn,
}

impl fmt::Debug for TrialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrialFunction")
            .field("kind", &self.kind)
            .field("nets", &self.nets)
            .field("checks", &self.checks.iter().map(Check::name).collect::<Vec<_>>())
            .field("input_dim", &self.input_dim)
            .finish()
    }
}

impl TrialFunction {
    /// Builds the fields; `params` holds one jet per net slot, in order.
    pub fn build<'t>(&self, params: &[Jet<'t>], x: Jet<'t>) -> Result<TrialFields<'t>> {
        if params.len() != self.nets.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter blocks",
                expected: self.nets.len(),
                actual: params.len(),
            });
        }
        if x.width() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "trial input",
                expected: self.input_dim,
                actual: x.width(),
            });
        }
        (self.build)(params, x)
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(|s| s.spec.param_count()).sum()
    }

    /// Xavier initialisation of every block from one stream.
    pub fn init(&self, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        self.nets.iter().map(|s| s.spec.init_with(rng)).collect()
    }

    /// `û` at a batch of points.
    pub fn eval_u(&self, params: &[Vec<f64>], points: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let blocks: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
        let jets: Vec<_> = blocks.iter().map(|&b| tape.param(b)).collect();
        let x = tape.input(points, self.input_dim, Order::Zero)?;
        let fields = self.build(&jets, x)?;
        tape.check_finite()?;
        Ok(fields.u.values())
    }
}

/// `num / den`, refusing denominators below [`DENOM_FLOOR`].
fn guarded_div<'t>(num: Jet<'t>, den: Jet<'t>, x: Jet<'t>) -> Result<Jet<'t>> {
    let vals = den.values();
    if let Some((row, &value)) = vals.iter().enumerate().find(|(_, v)| v.abs() < DENOM_FLOOR || v.is_nan()) {
        let dim = x.width();
        let xs = x.values();
        let row = if den.batch() == 1 { 0 } else { row / den.width() };
        return Err(Error::SmallDenominator {
            value,
            floor: DENOM_FLOOR,
            point: xs[row * dim..(row + 1) * dim].to_vec(),
        });
    }
    Ok(num / den)
}

fn value_check(name: &'static str, portion: Portion, target: Field) -> Check {
    Check::Boundary {
        name,
        portion,
        order: Order::Zero,
        tolerance: 1e-12,
        residual: Arc::new(move |f: &TrialFields<'_>, x, _| f.u - target(x)),
    }
}

fn value_checks(name: &'static str, on: &[Portion], target: &Field) -> Vec<Check> {
    on.iter().map(|p| value_check(name, p.clone(), target.clone())).collect()
}

fn slot(role: &'static str, spec: &NetworkSpec) -> NetSlot {
    NetSlot {
        role,
        spec: spec.clone(),
    }
}

/// `û = L N + G` with `p̂ = N*` free when a flux net is given.
pub fn dirichlet_trial(
    u_net: &NetworkSpec,
    p_net: Option<&NetworkSpec>,
    data: &ValueData,
    on: &[Portion],
) -> TrialFunction {
    let mut nets = vec![slot("u", u_net)];
    nets.extend(p_net.map(|p| slot("p", p)));
    let (us, ps) = (u_net.clone(), p_net.cloned());
    let (l, g) = (data.l.clone(), data.g.clone());
    TrialFunction {
        kind: ConstraintKind::Dirichlet,
        nets,
        checks: value_checks("dirichlet", on, &data.g),
        input_dim: u_net.d_in,
        build: Arc::new(move |params, x| {
            let u = l(x) * us.forward(params[0], x) + g(x);
            let p = ps.as_ref().map(|s| s.forward(params[1], x));
            Ok(TrialFields::up(u, p))
        }),
    }
}

/// Correction factor `F = (G - shift - a·along) / D` of the flux constructions.
fn flux_factor<'t>(
    data: &FluxData,
    x: Jet<'t>,
    along: Jet<'t>,
    shift: Option<Jet<'t>>,
) -> Result<Jet<'t>> {
    let mut num = (data.g)(x) - along.scale(data.a);
    if let Some(s) = shift {
        num = num - s;
    }
    guarded_div(num, (data.denom)(x), x)
}

/// `a ∇û·ν (+ û) - g` on the boundary, with `∇û` from the input tangents.
fn grad_flux_check(name: &'static str, portion: Portion, data: &FluxData, robin: bool) -> Check {
    let (g, a) = (data.g.clone(), data.a);
    Check::Boundary {
        name,
        portion,
        order: Order::First,
        tolerance: 1e-10,
        residual: Arc::new(move |f: &TrialFields<'_>, x, nu| {
            let mut r = f.u.grad().dot(nu).scale(a) - g(x);
            if robin {
                r = r + f.u;
            }
            r
        }),
    }
}

/// `a p̂·ν (+ û) - g` on the boundary.
fn p_flux_check(name: &'static str, portion: Portion, g: Field, a: f64, robin: bool) -> Check {
    Check::Boundary {
        name,
        portion,
        order: Order::Zero,
        tolerance: 1e-12,
        residual: Arc::new(move |f: &TrialFields<'_>, x, nu| {
            let p = f.p.expect("flux check needs p");
            let mut r = p.dot(nu).scale(a) - g(x);
            if robin {
                r = r + f.u;
            }
            r
        }),
    }
}

/// `p̂·ν - G·ν` for componentwise flux data.
fn componentwise_check(name: &'static str, portion: Portion, g: Field) -> Check {
    Check::Boundary {
        name,
        portion,
        order: Order::Zero,
        tolerance: 1e-12,
        residual: Arc::new(move |f: &TrialFields<'_>, x, nu| {
            let p = f.p.expect("flux check needs p");
            (p - g(x)).dot(nu)
        }),
    }
}

/// DGM construction `û = L F(x, N) + N` with
/// `F = (G - a ∇N·ν̃) / D`, so that `a ∇û·ν = g` on the boundary.
pub fn neumann_trial_dgm(net: &NetworkSpec, data: &FluxData, on: &[Portion]) -> TrialFunction {
    normal_derivative_trial(net, data, on, false)
}

/// DGM construction `û = L F(x, N) + N` with
/// `F = (G - N - a ∇N·ν̃) / D`, so that `a ∇û·ν + û = g` on the boundary.
pub fn robin_trial_dgm(net: &NetworkSpec, data: &FluxData, on: &[Portion]) -> TrialFunction {
    normal_derivative_trial(net, data, on, true)
}

fn normal_derivative_trial(net: &NetworkSpec, data: &FluxData, on: &[Portion], robin: bool) -> TrialFunction {
    let spec = net.clone();
    let d = data.clone();
    let name = if robin { "robin" } else { "neumann" };
    TrialFunction {
        kind: if robin { ConstraintKind::Robin } else { ConstraintKind::Neumann },
        nets: vec![slot("u", net)],
        checks: on.iter().map(|p| grad_flux_check(name, p.clone(), data, robin)).collect(),
        input_dim: net.d_in,
        build: Arc::new(move |params, x| {
            let (n, along) = spec.forward_directional(params[0], x, (d.normal)(x));
            let f = flux_factor(&d, x, along, robin.then_some(n))?;
            Ok(TrialFields::u((d.l)(x) * f + n))
        }),
    }
}

/// Builds `p̂` from `N*` for a flux form; `u` enters the Robin shift.
fn flux_p<'t>(form: &FluxForm, n_star: Jet<'t>, x: Jet<'t>, robin_u: Option<Jet<'t>>) -> Result<Jet<'t>> {
    match form {
        FluxForm::Projected(data) => {
            let along = n_star.dot((data.normal)(x));
            let f = flux_factor(data, x, along, robin_u)?;
            Ok((data.grad_l)(x) * f + n_star)
        }
        FluxForm::Componentwise(v) => Ok((v.l)(x) * n_star + (v.g)(x)),
    }
}

fn flux_checks(name: &'static str, form: &FluxForm, on: &[Portion], robin: bool) -> Vec<Check> {
    on.iter()
        .map(|p| match form {
            FluxForm::Projected(d) => p_flux_check(name, p.clone(), d.g.clone(), d.a, robin),
            FluxForm::Componentwise(v) => componentwise_check(name, p.clone(), v.g.clone()),
        })
        .collect()
}

/// MIM construction with `û = N` free and `p̂` satisfying the flux
/// condition: `p̂ = F ∇L + N*` with `F = (G - a N*·ν̃) / D`, or the
/// componentwise form `p̂ = L ⊙ N* + G`.
pub fn neumann_trial_mim(
    u_net: &NetworkSpec,
    p_net: &NetworkSpec,
    flux: &FluxForm,
    on: &[Portion],
) -> TrialFunction {
    let (us, ps, form) = (u_net.clone(), p_net.clone(), flux.clone());
    TrialFunction {
        kind: ConstraintKind::Neumann,
        nets: vec![slot("u", u_net), slot("p", p_net)],
        checks: flux_checks("neumann", flux, on, false),
        input_dim: u_net.d_in,
        build: Arc::new(move |params, x| {
            let u = us.forward(params[0], x);
            let p = flux_p(&form, ps.forward(params[1], x), x, None)?;
            Ok(TrialFields::up(u, Some(p)))
        }),
    }
}

/// MIM construction for mixed conditions: the Dirichlet part lives on `û`,
/// the flux part on `p̂`.
pub fn mixed_trial_mim(
    u_net: &NetworkSpec,
    p_net: &NetworkSpec,
    value: &ValueData,
    value_on: &[Portion],
    flux: &FluxForm,
    flux_on: &[Portion],
) -> TrialFunction {
    let (us, ps, form) = (u_net.clone(), p_net.clone(), flux.clone());
    let (l, g) = (value.l.clone(), value.g.clone());
    let mut checks = value_checks("mixed dirichlet", value_on, &value.g);
    checks.extend(flux_checks("mixed flux", flux, flux_on, false));
    TrialFunction {
        kind: ConstraintKind::Mixed,
        nets: vec![slot("u", u_net), slot("p", p_net)],
        checks,
        input_dim: u_net.d_in,
        build: Arc::new(move |params, x| {
            let u = l(x) * us.forward(params[0], x) + g(x);
            let p = flux_p(&form, ps.forward(params[1], x), x, None)?;
            Ok(TrialFields::up(u, Some(p)))
        }),
    }
}

/// MIM construction for Robin conditions: `û = N`,
/// `p̂ = F ∇L + N*` with `F = (G - N - a N*·ν̃) / D`, so that
/// `a p̂·ν + û = g` on the boundary.
pub fn robin_trial_mim(u_net: &NetworkSpec, p_net: &NetworkSpec, data: &FluxData, on: &[Portion]) -> TrialFunction {
    let (us, ps) = (u_net.clone(), p_net.clone());
    let form = FluxForm::Projected(data.clone());
    TrialFunction {
        kind: ConstraintKind::Robin,
        nets: vec![slot("u", u_net), slot("p", p_net)],
        checks: flux_checks("robin", &form, on, true),
        input_dim: u_net.d_in,
        build: Arc::new(move |params, x| {
            let u = us.forward(params[0], x);
            let p = flux_p(&form, ps.forward(params[1], x), x, Some(u))?;
            Ok(TrialFields::up(u, Some(p)))
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitVariant {
    /// `r¹ ≈ u ⊕ ∇u`, `r² ≈ u ⊖ ∇u` with `u = (1/d) Σ (r¹_i + r²_i)/2` and
    /// `p = (r¹ - r²)/2`.
    SumDiff,
    /// `û = N` and `r ≈ u ⊕ ∇u` with `p̂ = r ⊖ û`.
    Augmented,
}

/// Robin formulations on the unit cube through split variables. `split`
/// holds `[r¹, r²]` data for [`SplitVariant::SumDiff`] and `[r]` for
/// [`SplitVariant::Augmented`]; `nets` are `[N, N*]` (both width `d` for
/// the sum/difference split, scalar `N` for the augmented one).
pub fn robin_split_trial(
    nets: [&NetworkSpec; 2],
    split: &[ValueData],
    variant: SplitVariant,
    domain: &Domain,
) -> Result<TrialFunction> {
    let d = match domain {
        Domain::Cube { d, lo, hi } if *lo == 0.0 && *hi == 1.0 => *d,
        other => {
            return Err(Error::Unsupported(format!(
                "split Robin constructions need the unit cube, got {other:?}"
            )))
        }
    };
    let want = if variant == SplitVariant::SumDiff { 2 } else { 1 };
    if split.len() != want {
        return Err(Error::DimensionMismatch {
            what: "split data",
            expected: want,
            actual: split.len(),
        });
    }
    let (a, b) = (nets[0].clone(), nets[1].clone());
    let data = split.to_vec();
    let inv_2d = 0.5 / d as f64;
    let build: BuildFn = match variant {
        SplitVariant::SumDiff => Arc::new(move |params, x| {
            let r1 = (data[0].l)(x) * a.forward(params[0], x) + (data[0].g)(x);
            let r2 = (data[1].l)(x) * b.forward(params[1], x) + (data[1].g)(x);
            let u = (r1 + r2).sum_width().scale(inv_2d);
            let p = (r1 - r2).scale(0.5);
            Ok(TrialFields {
                u,
                p: Some(p),
                v: None,
                aux: vec![r1, r2],
            })
        }),
        SplitVariant::Augmented => Arc::new(move |params, x| {
            let u = a.forward(params[0], x);
            let r = (data[0].l)(x) * b.forward(params[1], x) + (data[0].g)(x);
            Ok(TrialFields {
                u,
                p: Some(r - u),
                v: None,
                aux: vec![r],
            })
        }),
    };
    let check = match variant {
        SplitVariant::SumDiff => {
            let g = split[0].g.clone();
            // r¹_i = G_i on x_i = 0 and r²_i = G_i on x_i = 1
            Check::Boundary {
                name: "robin split",
                portion: Portion::All,
                order: Order::Zero,
                tolerance: 1e-12,
                residual: Arc::new(move |f: &TrialFields<'_>, x, nu| {
                    let gx = g(x);
                    let lower = nu.scale(-1.0).relu();
                    let upper = nu.relu();
                    ((f.aux[0] - gx) * lower + (f.aux[1] - gx) * upper).sum_width()
                }),
            }
        }
        SplitVariant::Augmented => {
            let g = split[0].g.clone();
            // û + p̂_i = G_i on both faces normal to axis i
            Check::Boundary {
                name: "robin split",
                portion: Portion::All,
                order: Order::Zero,
                tolerance: 1e-12,
                residual: Arc::new(move |f: &TrialFields<'_>, x, nu| {
                    let p = f.p.expect("augmented trial has p");
                    ((p + f.u - g(x)) * nu.square()).sum_width()
                }),
            }
        }
    };
    Ok(TrialFunction {
        kind: ConstraintKind::Robin,
        nets: vec![slot("r1", nets[0]), slot("r2", nets[1])],
        checks: vec![check],
        input_dim: d,
        build,
    })
}

/// Fourier features `sin(2πj x_i / I_i), cos(2πj x_i / I_i)` for
/// `i = 1..d`, `j = 1..k`, in that order (sine before cosine).
pub fn periodic_features<'t>(x: Jet<'t>, periods: &[f64], k: usize) -> Jet<'t> {
    assert_eq!(x.width(), periods.len(), "one period per coordinate");
    let mut cols = Vec::with_capacity(2 * k * periods.len());
    for (i, &p) in periods.iter().enumerate() {
        let xi = x.col(i);
        for j in 1..=k {
            let arg = xi.scale(2.0 * PI * j as f64 / p);
            cols.push(arg.sin());
            cols.push(arg.cos());
        }
    }
    Jet::concat(&cols)
}

/// `û = N(T(x))`, `p̂ = N*(T(x))` on periodic features `T`. Both nets take
/// `2kd` inputs.
pub fn periodic_trial(u_net: &NetworkSpec, p_net: &NetworkSpec, periods: &[f64], k: usize) -> Result<TrialFunction> {
    let width = 2 * k * periods.len();
    if k == 0 || periods.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Unsupported("periodic features need k >= 1 and positive periods".into()));
    }
    for s in [u_net, p_net] {
        if s.d_in != width {
            return Err(Error::DimensionMismatch {
                what: "periodic network input",
                expected: width,
                actual: s.d_in,
            });
        }
    }
    let (us, ps, per) = (u_net.clone(), p_net.clone(), periods.to_vec());
    Ok(TrialFunction {
        kind: ConstraintKind::Periodic,
        nets: vec![slot("u", u_net), slot("p", p_net)],
        checks: vec![Check::Periodic {
            name: "periodic",
            periods: periods.to_vec(),
        }],
        input_dim: periods.len(),
        build: Arc::new(move |params, x| {
            let t = periodic_features(x, &per, k);
            Ok(TrialFields::up(us.forward(params[0], t), Some(ps.forward(params[1], t))))
        }),
    })
}

/// Time-dependent trial: `û = L N + G` with `L` vanishing on the lateral
/// boundary and at `t = 0`; optional free `p̂`; optional `v̂` which is
/// constrained by `velocity` when given and free otherwise.
fn time_trial(
    kind: ConstraintKind,
    u_net: &NetworkSpec,
    p_net: Option<&NetworkSpec>,
    v_net: Option<&NetworkSpec>,
    value: &ValueData,
    velocity: Option<&ValueData>,
) -> TrialFunction {
    let mut nets = vec![slot("u", u_net)];
    nets.extend(p_net.map(|s| slot("p", s)));
    nets.extend(v_net.map(|s| slot("v", s)));
    let mut checks = value_checks("initial/boundary value", &[Portion::Initial, Portion::Lateral], &value.g);
    if let Some(vel) = velocity {
        let g = vel.g.clone();
        checks.push(Check::Boundary {
            name: "initial velocity",
            portion: Portion::Initial,
            order: Order::Zero,
            tolerance: 1e-12,
            residual: Arc::new(move |f: &TrialFields<'_>, x, _| f.v.expect("velocity trial has v") - g(x)),
        });
    }
    let (us, ps, vs) = (u_net.clone(), p_net.cloned(), v_net.cloned());
    let (l, g) = (value.l.clone(), value.g.clone());
    let vel = velocity.cloned();
    TrialFunction {
        kind,
        nets,
        checks,
        input_dim: u_net.d_in,
        build: Arc::new(move |params, x| {
            let u = l(x) * us.forward(params[0], x) + g(x);
            let mut next = 1;
            let mut take = || {
                next += 1;
                params[next - 1]
            };
            let p = ps.as_ref().map(|s| s.forward(take(), x));
            let v = vs.as_ref().map(|s| {
                let n = s.forward(take(), x);
                match &vel {
                    Some(c) => (c.l)(x) * n + (c.g)(x),
                    None => n,
                }
            });
            Ok(TrialFields { u, p, v, aux: Vec::new() })
        }),
    }
}

/// `û = t Π(x_i - x_i²) N(x, t)`; `p̂` and `v̂` free when their nets are given.
pub fn parabolic_trial(
    u_net: &NetworkSpec,
    p_net: Option<&NetworkSpec>,
    v_net: Option<&NetworkSpec>,
    value: &ValueData,
) -> TrialFunction {
    time_trial(ConstraintKind::ParabolicIc, u_net, p_net, v_net, value, None)
}

/// Wave trial. With a velocity net, `v̂ = t Ñ(x, t)` so both initial
/// conditions hold identically; without one only `û(x, 0) = 0` does.
pub fn wave_trial(
    u_net: &NetworkSpec,
    p_net: Option<&NetworkSpec>,
    v_net: Option<&NetworkSpec>,
    value: &ValueData,
    velocity: &ValueData,
) -> TrialFunction {
    let vel = v_net.map(|_| velocity);
    time_trial(ConstraintKind::WaveIc, u_net, p_net, v_net, value, vel)
}

/// Convenience form of [`wave_trial`] with all three nets.
pub fn wave_trial_mim2(
    u_net: &NetworkSpec,
    v_net: &NetworkSpec,
    p_net: &NetworkSpec,
    value: &ValueData,
    velocity: &ValueData,
) -> TrialFunction {
    wave_trial(u_net, Some(p_net), Some(v_net), value, velocity)
}

/// Unconstrained networks for penalty formulations.
pub fn penalty_trial(u_net: &NetworkSpec, p_net: Option<&NetworkSpec>, v_net: Option<&NetworkSpec>) -> TrialFunction {
    let mut nets = vec![slot("u", u_net)];
    nets.extend(p_net.map(|s| slot("p", s)));
    nets.extend(v_net.map(|s| slot("v", s)));
    let (us, ps, vs) = (u_net.clone(), p_net.cloned(), v_net.cloned());
    TrialFunction {
        kind: ConstraintKind::None,
        nets,
        checks: Vec::new(),
        input_dim: u_net.d_in,
        build: Arc::new(move |params, x| {
            let u = us.forward(params[0], x);
            let mut i = 1;
            let p = ps.as_ref().map(|s| {
                i += 1;
                s.forward(params[i - 1], x)
            });
            let v = vs.as_ref().map(|s| s.forward(params[i], x));
            Ok(TrialFields { u, p, v, aux: Vec::new() })
        }),
    }
}

/// Result of one exactness check.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: &'static str,
    pub portion: Option<Portion>,
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// Draws parameters away from the initialiser's structure (nonzero biases),
/// as a stand-in for "any parameter values".
pub fn random_params(trial: &TrialFunction, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    trial
        .init(rng)
        .into_iter()
        .map(|v| v.into_iter().map(|w| w + rng.random_range(-0.1..0.1)).collect())
        .collect()
}

/// Evaluates every constraint of `trial` at `count` random constraint points
/// for each of `draws` random parameter vectors and reports the largest
/// residual per check.
pub fn verify_exactness(
    trial: &TrialFunction,
    domain: &Domain,
    count: usize,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<Vec<CheckReport>> {
    if trial.kind == ConstraintKind::None {
        return Err(Error::Unsupported("penalty-mode trials carry no exact constraint".into()));
    }
    let dim = trial.input_dim;
    let mut reports: Vec<CheckReport> = trial
        .checks
        .iter()
        .map(|c| CheckReport {
            name: c.name(),
            portion: match c {
                Check::Boundary { portion, .. } => Some(portion.clone()),
                Check::Periodic { .. } => None,
            },
            max_residual: 0.0,
            worst_point: Vec::new(),
            tolerance: match c {
                Check::Boundary { tolerance, .. } => *tolerance,
                Check::Periodic { .. } => 1e-12,
            },
        })
        .collect();
    for _ in 0..draws {
        let params = random_params(trial, rng);
        for (check, report) in trial.checks.iter().zip(reports.iter_mut()) {
            let (res, pts) = match check {
                Check::Boundary {
                    portion,
                    order,
                    residual,
                    ..
                } => {
                    let s = domain.sample_boundary(portion, count, rng)?;
                    let mut tape = Tape::new();
                    let blocks: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
                    let jets: Vec<_> = blocks.iter().map(|&b| tape.param(b)).collect();
                    let x = tape.input(&s.points, dim, *order)?;
                    let nu = tape.constant(&s.normals, count, dim);
                    let fields = trial.build(&jets, x)?;
                    let r = residual(&fields, x, nu);
                    tape.check_finite()?;
                    (r.values(), s.points)
                }
                Check::Periodic { periods, .. } => {
                    let pts = domain.sample_interior(count, rng);
                    let base = trial.eval_u(&params, &pts)?;
                    let mut worst = vec![0.0; count];
                    for (i, per) in periods.iter().enumerate() {
                        let mut shifted = pts.clone();
                        for row in shifted.chunks_mut(dim) {
                            row[i] += per;
                        }
                        let moved = trial.eval_u(&params, &shifted)?;
                        for k in 0..count {
                            let r = (moved[k] - base[k]).abs() / base[k].abs().max(1.0);
                            worst[k] = f64::max(worst[k], r);
                        }
                    }
                    (worst, pts)
                }
            };
            let per_row = res.len() / count;
            for (k, chunk) in res.chunks(per_row).enumerate() {
                let r = chunk.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if r > report.max_residual || report.worst_point.is_empty() {
                    report.max_residual = report.max_residual.max(r);
                    report.worst_point = pts[k * dim..(k + 1) * dim].to_vec();
                }
            }
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests;
