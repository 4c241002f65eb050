//! Monte Carlo least-squares losses.
//!
//! Each loss is a sum of plain sample means of squared residuals; residual
//! signs follow `operator(u) - f` throughout. Spatial coordinates come first
//! in every input point and time, when present, is last.

mod source;

use std::sync::Arc;

use crate::autodiff::{Jet, Order, Tape};
use crate::constructions::{ResidualFn, TrialFields, TrialFunction};
use crate::error::{Error, Result};
use crate::experiment::Variant;
use crate::field::{self, Field};
use crate::geometry::{BoundarySample, Portion};

pub use source::{fd_operator, manufactured_source, validate_source, PdeFamily, SourceTerm};

/// Largest dimension for which the Monge-Ampère determinant is formed.
pub const MAX_DET_DIM: usize = 8;

/// A boundary or initial-slice term `‖residual‖²` weighted by `λ`.
#[derive(Clone)]
pub struct PenaltyTerm {
    pub name: &'static str,
    pub portion: Portion,
    /// Input-derivative order the residual needs.
    pub order: Order,
    pub residual: ResidualFn,
}

impl std::fmt::Debug for PenaltyTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PenaltyTerm")
            .field("name", &self.name)
            .field("portion", &self.portion)
            .field("order", &self.order)
            .finish()
    }
}

/// `û - u` on the boundary.
pub fn value_penalty(source: &SourceTerm, portion: Portion) -> PenaltyTerm {
    let u = source.u.clone();
    PenaltyTerm {
        name: "boundary value",
        portion,
        order: Order::Zero,
        residual: Arc::new(move |f: &TrialFields<'_>, x, _| f.u - u(x)),
    }
}

/// `∂û/∂ν - ∂u/∂ν` on the boundary.
pub fn flux_penalty(source: &SourceTerm, portion: Portion) -> PenaltyTerm {
    let grad = source.grad.clone();
    let dims: Vec<usize> = (0..source.d).collect();
    PenaltyTerm {
        name: "normal derivative",
        portion,
        order: Order::First,
        residual: Arc::new(move |f: &TrialFields<'_>, x, nu| (f.u.jacobian(&dims) - grad(x)).dot(nu)),
    }
}

/// `û_t - u_t` on the `t = 0` slice.
pub fn initial_velocity_penalty(source: &SourceTerm) -> Result<PenaltyTerm> {
    let ut = source.u_t.clone().ok_or(Error::MissingField {
        field: "u_t",
        variant: "initial velocity penalty",
    })?;
    let t = source.d;
    Ok(PenaltyTerm {
        name: "initial velocity",
        portion: Portion::Initial,
        order: Order::First,
        residual: Arc::new(move |f: &TrialFields<'_>, x, _| f.u.partial(t) - ut(x)),
    })
}

/// Loss assembly for one (family, variant) pair.
#[derive(Clone, Debug)]
pub struct LossConfig {
    pub family: PdeFamily,
    pub variant: Variant,
    /// Penalty weight; zero means every constraint is built into the trial.
    pub lambda: f64,
    pub penalty: Option<PenaltyTerm>,
    pub interior: usize,
    /// Points per step for the penalty term.
    pub boundary: usize,
}

impl LossConfig {
    /// Exact-constraint loss.
    pub fn exact(family: PdeFamily, variant: Variant, interior: usize) -> Self {
        LossConfig {
            family,
            variant,
            lambda: 0.0,
            penalty: None,
            interior,
            boundary: 0,
        }
    }

    pub fn with_penalty(mut self, lambda: f64, penalty: PenaltyTerm, boundary: usize) -> Self {
        self.lambda = lambda;
        self.penalty = Some(penalty);
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let supported = match self.family {
            PdeFamily::Elliptic { .. } => matches!(self.variant, Variant::Dgm | Variant::Mim),
            PdeFamily::MongeAmpere => self.variant == Variant::Mim,
            PdeFamily::Parabolic | PdeFamily::Wave => self.variant != Variant::Mim,
        };
        if !supported {
            return Err(Error::config(
                "method",
                format!("{} is not defined for {:?}", self.variant, self.family),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be a nonnegative finite number"));
        }
        if self.interior == 0 {
            return Err(Error::config("samples", "interior sample count must be positive"));
        }
        if self.lambda > 0.0 && (self.boundary == 0 || self.penalty.is_none()) {
            return Err(Error::config(
                "boundary_samples",
                "a positive lambda needs a penalty term and boundary samples",
            ));
        }
        if self.lambda == 0.0 && (self.boundary > 0 || self.penalty.is_some()) {
            return Err(Error::config("lambda", "penalty terms need a positive lambda"));
        }
        Ok(())
    }

    /// Input-derivative order of the interior batch.
    pub fn interior_order(&self) -> Order {
        match (self.family, self.variant) {
            (PdeFamily::Elliptic { .. }, Variant::Dgm)
            | (PdeFamily::Parabolic, Variant::Dgm)
            | (PdeFamily::Wave, Variant::Dgm | Variant::Mim1) => Order::Second,
            _ => Order::First,
        }
    }

    /// Input-derivative order of the penalty batch.
    pub fn penalty_order(&self) -> Order {
        self.penalty.as_ref().map_or(Order::Zero, |p| p.order)
    }

    /// Interior residual mean for the configured family and variant.
    pub fn interior_loss<'t>(&self, fields: &TrialFields<'t>, x: Jet<'t>, source: &SourceTerm) -> Result<Jet<'t>> {
        match self.family {
            PdeFamily::Elliptic { .. } => match self.variant {
                Variant::Dgm => elliptic_dgm_loss(fields, x, source),
                _ => elliptic_mim_loss(fields, x, source),
            },
            PdeFamily::MongeAmpere => monge_ampere_loss(fields, x, source),
            PdeFamily::Parabolic => parabolic_loss(fields, x, source, self.variant),
            PdeFamily::Wave => wave_loss(fields, x, source, self.variant),
        }
    }

    /// Mean squared penalty residual over a boundary batch.
    pub fn penalty_loss<'t>(&self, fields: &TrialFields<'t>, x: Jet<'t>, normals: Jet<'t>) -> Result<Option<Jet<'t>>> {
        Ok(self.penalty.as_ref().map(|p| (p.residual)(fields, x, normals).mean_sq()))
    }

    /// Interior and penalty means over one batch, with the penalty unweighted.
    pub fn terms<'t>(
        &self,
        tape: &'t Tape,
        trial: &TrialFunction,
        params: &[Jet<'t>],
        source: &SourceTerm,
        batch: &Batch,
    ) -> Result<LossTerms<'t>> {
        let dim = trial.input_dim;
        let x = tape.input(&batch.interior, dim, self.interior_order())?;
        let fields = trial.build(params, x)?;
        let interior = self.interior_loss(&fields, x, source)?;
        let penalty = match (&self.penalty, &batch.boundary) {
            (None, _) => None,
            (Some(_), None) => {
                return Err(Error::MissingField {
                    field: "boundary batch",
                    variant: "penalty loss",
                })
            }
            (Some(_), Some(b)) if b.points.is_empty() => None,
            (Some(_), Some(b)) => {
                let xb = tape.input(&b.points, dim, self.penalty_order())?;
                let nb = tape.data(&b.normals, b.points.len() / dim, dim);
                let fb = trial.build(params, xb)?;
                self.penalty_loss(&fb, xb, nb)?
            }
        };
        Ok(LossTerms { interior, penalty })
    }

    /// `interior + λ·penalty` over one batch.
    pub fn evaluate<'t>(
        &self,
        tape: &'t Tape,
        trial: &TrialFunction,
        params: &[Jet<'t>],
        source: &SourceTerm,
        batch: &Batch,
    ) -> Result<Jet<'t>> {
        Ok(self.terms(tape, trial, params, source, batch)?.combine(self.lambda, 1.0, 1.0))
    }
}

/// Sample points for one loss evaluation.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub interior: Vec<f64>,
    pub boundary: Option<BoundarySample>,
}

/// Loss contributions of one batch.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<'t> {
    pub interior: Jet<'t>,
    pub penalty: Option<Jet<'t>>,
}

impl<'t> LossTerms<'t> {
    /// `w_i·interior + λ·w_b·penalty`; chunk weights make per-chunk means add
    /// up to the full-batch mean.
    pub fn combine(self, lambda: f64, w_interior: f64, w_boundary: f64) -> Jet<'t> {
        let base = self.interior.scale(w_interior);
        match self.penalty {
            Some(p) => base + p.scale(lambda * w_boundary),
            None => base,
        }
    }
}

fn spatial(d: usize) -> Vec<usize> {
    (0..d).collect()
}

fn require<'t>(f: Option<Jet<'t>>, field: &'static str, variant: &'static str) -> Result<Jet<'t>> {
    f.ok_or(Error::MissingField { field, variant })
}

fn require_width(p: Jet<'_>, d: usize) -> Result<()> {
    if p.width() != d {
        return Err(Error::DimensionMismatch {
            what: "flux field",
            expected: d,
            actual: p.width(),
        });
    }
    Ok(())
}

fn sum_of_means<'t>(residuals: &[Jet<'t>]) -> Jet<'t> {
    residuals
        .iter()
        .map(|r| r.mean_sq())
        .reduce(|a, b| a + b)
        .expect("at least one residual")
}

fn reaction<'t>(u: Jet<'t>, c: f64, q: f64) -> Jet<'t> {
    let mut out = u.scale(c);
    if q != 0.0 {
        out = out + u.square().scale(q);
    }
    out
}

fn elliptic_coefficients(source: &SourceTerm) -> Result<(f64, f64)> {
    match source.family {
        PdeFamily::Elliptic { c, q } => Ok((c, q)),
        other => Err(Error::Unsupported(format!("elliptic loss on a {other:?} source"))),
    }
}

/// `‖∇û - p̂‖² + ‖-∇·p̂ + cû + qû² - f‖²`.
pub fn elliptic_mim_loss<'t>(fields: &TrialFields<'t>, x: Jet<'t>, source: &SourceTerm) -> Result<Jet<'t>> {
    let (c, q) = elliptic_coefficients(source)?;
    let p = require(fields.p, "p", "mim")?;
    let dims = spatial(source.d);
    require_width(p, source.d)?;
    let u = fields.u;
    let r_flux = u.jacobian(&dims) - p;
    let r_eq = reaction(u, c, q) - p.divergence(&dims) - (source.f)(x);
    Ok(sum_of_means(&[r_flux, r_eq]))
}

/// `‖-Δû + cû + qû² - f‖²`.
pub fn elliptic_dgm_loss<'t>(fields: &TrialFields<'t>, x: Jet<'t>, source: &SourceTerm) -> Result<Jet<'t>> {
    let (c, q) = elliptic_coefficients(source)?;
    let u = fields.u;
    let r = reaction(u, c, q) - u.laplacian(&spatial(source.d)) - (source.f)(x);
    Ok(r.mean_sq())
}

/// `‖p̂ - ∇û‖² + ‖det ∇p̂ - f‖²`.
pub fn monge_ampere_loss<'t>(fields: &TrialFields<'t>, x: Jet<'t>, source: &SourceTerm) -> Result<Jet<'t>> {
    let d = source.d;
    if d > MAX_DET_DIM {
        return Err(Error::Unsupported(format!(
            "Monge-Ampère loss needs d <= {MAX_DET_DIM}, got {d}"
        )));
    }
    let p = require(fields.p, "p", "mim")?;
    require_width(p, d)?;
    let dims = spatial(d);
    let r_flux = p - fields.u.jacobian(&dims);
    let r_eq = p.jacobian(&dims).det(d) - (source.f)(x);
    Ok(sum_of_means(&[r_flux, r_eq]))
}

fn check_time(source: &SourceTerm, x: Jet<'_>) -> Result<()> {
    if x.width() != source.d + 1 {
        return Err(Error::DimensionMismatch {
            what: "space-time input",
            expected: source.d + 1,
            actual: x.width(),
        });
    }
    Ok(())
}

/// DGM: `‖û_t - Δû - f‖²`. MIM1: `‖v̂ - ∇·p̂ - f‖² + ‖p̂ - ∇û‖² + ‖v̂ - û_t‖²`.
/// MIM2: `‖û_t - ∇·p̂ - f‖² + ‖p̂ - ∇û‖²`.
pub fn parabolic_loss<'t>(fields: &TrialFields<'t>, x: Jet<'t>, source: &SourceTerm, variant: Variant) -> Result<Jet<'t>> {
    check_time(source, x)?;
    let d = source.d;
    let dims = spatial(d);
    let u = fields.u;
    let f = (source.f)(x);
    match variant {
        Variant::Dgm => Ok((u.partial(d) - u.laplacian(&dims) - f).mean_sq()),
        Variant::Mim1 => {
            let p = require(fields.p, "p", "mim1")?;
            let v = require(fields.v, "v", "mim1")?;
            require_width(p, d)?;
            Ok(sum_of_means(&[
                v - p.divergence(&dims) - f,
                p - u.jacobian(&dims),
                v - u.partial(d),
            ]))
        }
        Variant::Mim2 => {
            let p = require(fields.p, "p", "mim2")?;
            require_width(p, d)?;
            Ok(sum_of_means(&[u.partial(d) - p.divergence(&dims) - f, p - u.jacobian(&dims)]))
        }
        Variant::Mim => Err(Error::config("method", "parabolic problems use dgm, mim1 or mim2")),
    }
}

/// DGM: `‖û_tt - Δû - f‖²`. MIM1: `‖û_tt - ∇·p̂ - f‖² + ‖p̂ - ∇û‖²`.
/// MIM2: `‖v̂_t - ∇·p̂ - f‖² + ‖p̂ - ∇û‖² + ‖v̂ - û_t‖²`. The `û_t(x, 0)`
/// penalty of DGM and MIM1 is a separate [`PenaltyTerm`].
pub fn wave_loss<'t>(fields: &TrialFields<'t>, x: Jet<'t>, source: &SourceTerm, variant: Variant) -> Result<Jet<'t>> {
    check_time(source, x)?;
    let d = source.d;
    let dims = spatial(d);
    let u = fields.u;
    let f = (source.f)(x);
    match variant {
        Variant::Dgm => Ok((u.second_partial(d) - u.laplacian(&dims) - f).mean_sq()),
        Variant::Mim1 => {
            let p = require(fields.p, "p", "mim1")?;
            require_width(p, d)?;
            Ok(sum_of_means(&[u.second_partial(d) - p.divergence(&dims) - f, p - u.jacobian(&dims)]))
        }
        Variant::Mim2 => {
            let p = require(fields.p, "p", "mim2")?;
            let v = require(fields.v, "v", "mim2")?;
            require_width(p, d)?;
            Ok(sum_of_means(&[
                v.partial(d) - p.divergence(&dims) - f,
                p - u.jacobian(&dims),
                v - u.partial(d),
            ]))
        }
        Variant::Mim => Err(Error::config("method", "wave problems use dgm, mim1 or mim2")),
    }
}

/// `√Σ(û - u)² / √Σu²` over `points`.
pub fn relative_l2_error(trial: &TrialFunction, params: &[Vec<f64>], u_exact: &Field, points: &[f64]) -> Result<f64> {
    let approx = trial.eval_u(params, points)?;
    let exact = field::eval(u_exact, points, trial.input_dim)?;
    relative_l2(&approx, &exact)
}

/// Relative discrete L² distance of two sampled functions.
pub fn relative_l2(approx: &[f64], exact: &[f64]) -> Result<f64> {
    let (num, den) = approx
        .iter()
        .zip(exact)
        .fold((0.0, 0.0), |(n, d), (a, e)| (n + (a - e) * (a - e), d + e * e));
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests;
