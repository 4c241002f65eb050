//! Experiment catalogue: domains, trial constructions, losses and desk
//! defaults for every (experiment, method) pair.

use crate::activation::Activation;
use crate::autodiff::Jet;
use crate::constructions::{
    dirichlet_trial, mixed_trial_mim, neumann_trial_dgm, neumann_trial_mim, parabolic_trial, penalty_trial,
    periodic_trial, robin_split_trial, wave_trial, wave_trial_mim2, SplitVariant, TrialFunction,
};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentId, Variant};
use crate::field::field;
use crate::geometry::{boundary_functions, BoundaryData, Domain, FluxData, FluxForm, Portion, ValueData};
use crate::losses::{flux_penalty, initial_velocity_penalty, manufactured_source, LossConfig, PenaltyTerm, SourceTerm, MAX_DET_DIM};
use crate::network::NetworkSpec;
use crate::optimizer::Problem;

use super::config::RunConfig;

/// Largest dimension run under the desk budget.
pub const DESK_MAX_DIM: usize = 16;
/// Desk cap on interior samples.
pub const DESK_MAX_SAMPLES: usize = 10_000;
/// Desk cap on interior samples for the parabolic problem.
pub const DESK_MAX_SAMPLES_PARABOLIC: usize = 2_000;
/// Desk cap on epochs.
pub const DESK_MAX_EPOCHS: usize = 20_000;
/// Desk cap on epochs for the wave problem.
pub const DESK_MAX_EPOCHS_WAVE: usize = 50_000;

/// Published settings of an experiment (from the table captions).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaperSettings {
    pub activation: Activation,
    pub samples: usize,
    /// Penalty points per step (penalty formulations only).
    pub boundary_samples: usize,
    pub epochs: usize,
    pub k: usize,
}

/// `(d, n, m)` rows printed for each experiment.
pub fn architecture_rows(id: ExperimentId) -> &'static [(usize, usize, usize)] {
    use ExperimentId::*;
    match id {
        DirichletEllipticBall => &[(2, 10, 2), (4, 15, 2), (8, 20, 2), (16, 20, 2), (32, 35, 2), (64, 70, 2), (128, 144, 2), (256, 280, 2)],
        MongeAmpere => &[(2, 10, 2), (2, 20, 2), (2, 30, 2), (4, 20, 1), (4, 20, 2)],
        NeumannCube => &[(2, 10, 2), (4, 15, 2), (8, 20, 2), (16, 25, 2), (32, 35, 2), (64, 70, 2), (128, 130, 2)],
        NeumannBall => &[(2, 10, 3), (4, 15, 3), (8, 20, 3), (16, 25, 3)],
        RobinSumDiff => &[(2, 5, 2), (4, 10, 2), (8, 20, 2), (16, 20, 2), (32, 40, 2), (64, 80, 2)],
        RobinAugmented => &[(2, 5, 2), (4, 10, 2), (8, 20, 2), (16, 40, 2)],
        MixedSlab => &[(2, 5, 2), (4, 10, 2), (8, 15, 2), (16, 24, 2)],
        MixedComplex2d => &[(2, 5, 2), (4, 10, 2), (8, 20, 2), (16, 40, 2)],
        MixedAnnulus => &[(2, 10, 2), (4, 15, 2), (8, 20, 2), (16, 25, 2)],
        PeriodicSum => &[(2, 8, 3), (4, 16, 3), (8, 24, 3), (16, 32, 3)],
        PeriodicProduct => &[(2, 8, 3), (4, 8, 3), (8, 16, 3), (16, 24, 3)],
        Periodic1dHighFreq => &[(1, 20, 3)],
        Parabolic => &[(2, 4, 3), (3, 8, 3), (5, 8, 3), (10, 20, 3), (12, 20, 3)],
        Wave => &[(2, 20, 3), (3, 20, 3)],
    }
}

/// Width and depth for dimension `d`: the printed row for `d`, else the
/// last row with a smaller dimension, else the first row.
pub fn default_architecture(id: ExperimentId, d: usize) -> (usize, usize) {
    let rows = architecture_rows(id);
    let row = rows
        .iter()
        .find(|r| r.0 == d)
        .or_else(|| rows.iter().rev().find(|r| r.0 < d))
        .unwrap_or(&rows[0]);
    (row.1, row.2)
}

pub fn paper_settings(id: ExperimentId, d: usize) -> PaperSettings {
    use ExperimentId::*;
    let (activation, samples, epochs, k) = match id {
        DirichletEllipticBall => (Activation::ReQu, 10_000, 20_000, 0),
        MongeAmpere => (Activation::ReQu, 50_000, 10_000, 0),
        NeumannCube => (Activation::ReQu, 10_000, 10_000, 0),
        NeumannBall => (Activation::ReQu, 10_000, 100_000, 0),
        RobinSumDiff => (Activation::ReQu, 50_000, 50_000, 0),
        RobinAugmented => (Activation::ReQu, 50_000, 20_000, 0),
        MixedSlab | MixedComplex2d => (Activation::ReQu, 50_000, 50_000, 0),
        MixedAnnulus => (Activation::ReQu, 50_000, 50_000, 0),
        PeriodicSum => (Activation::Swish, 1_000, if d >= 16 { 50_000 } else { 20_000 }, 1),
        PeriodicProduct => (Activation::Swish, 1_000, if d >= 16 { 80_000 } else { 20_000 }, 3),
        Periodic1dHighFreq => (Activation::Swish, 1_000, 20_000, 1),
        Parabolic => (
            Activation::Swish,
            2_000,
            match d {
                ..=5 => 50_000,
                6..=10 => 100_000,
                _ => 200_000,
            },
            0,
        ),
        Wave => (Activation::ReQu, 50_000, 50_000, 0),
    };
    let boundary_samples = match id {
        NeumannCube => 1_000 * 2 * d,
        Wave => 1_000,
        _ => 0,
    };
    PaperSettings {
        activation,
        samples,
        boundary_samples,
        epochs,
        k,
    }
}

/// Published settings with the desk caps applied.
pub fn desk_settings(id: ExperimentId, d: usize) -> PaperSettings {
    let mut s = paper_settings(id, d);
    let cap = if id == ExperimentId::Parabolic {
        DESK_MAX_SAMPLES_PARABOLIC
    } else {
        DESK_MAX_SAMPLES
    };
    s.samples = s.samples.min(cap);
    let epoch_cap = if id == ExperimentId::Wave {
        DESK_MAX_EPOCHS_WAVE
    } else {
        DESK_MAX_EPOCHS
    };
    s.epochs = s.epochs.min(epoch_cap);
    s
}

/// Whether `(id, variant)` uses a penalty term.
pub fn uses_penalty(id: ExperimentId, variant: Variant) -> bool {
    matches!(
        (id, variant),
        (ExperimentId::NeumannCube, Variant::Dgm) | (ExperimentId::Wave, Variant::Dgm | Variant::Mim1)
    )
}

/// Smallest spatial dimension an experiment supports.
pub fn min_dim(id: ExperimentId) -> usize {
    match id {
        ExperimentId::MixedSlab | ExperimentId::MixedComplex2d => 2,
        _ => 1,
    }
}

pub fn domain(id: ExperimentId, d: usize) -> Domain {
    use ExperimentId::*;
    let unit = Domain::Cube { d, lo: 0.0, hi: 1.0 };
    match id {
        DirichletEllipticBall | MongeAmpere | NeumannBall => Domain::Ball { d },
        NeumannCube | RobinSumDiff | RobinAugmented | MixedSlab => unit,
        MixedComplex2d => Domain::NotchedPentagon { d },
        MixedAnnulus => Domain::Annulus { d, inner: 0.5 },
        PeriodicSum | PeriodicProduct | Periodic1dHighFreq => Domain::Cube { d, lo: -1.0, hi: 1.0 },
        Parabolic | Wave => Domain::TimeCylinder { base: Box::new(unit) },
    }
}

/// Period of every coordinate in the periodic problems.
pub const PERIOD: f64 = 2.0;

fn value(b: &BoundaryData) -> Result<&ValueData> {
    b.value.as_ref().ok_or(Error::MissingField {
        field: "value data",
        variant: "catalogue",
    })
}

fn flux(b: &BoundaryData) -> Result<&FluxForm> {
    b.flux.as_ref().ok_or(Error::MissingField {
        field: "flux data",
        variant: "catalogue",
    })
}

fn projected(b: &BoundaryData) -> Result<&FluxData> {
    match flux(b)? {
        FluxForm::Projected(f) => Ok(f),
        FluxForm::Componentwise(_) => Err(Error::Unsupported("projected flux data expected".into())),
    }
}

/// The trial function for a configuration. Penalty formulations get raw
/// networks for the constraints they do not build in.
pub fn build_trial(cfg: &RunConfig) -> Result<TrialFunction> {
    use ExperimentId::*;
    let (id, d) = (cfg.experiment, cfg.d);
    let net = |d_in: usize, d_out: usize| {
        let spec = NetworkSpec::new(d_in, cfg.width, cfg.depth, d_out, cfg.activation);
        spec.validate().map(|_| spec)
    };
    let b = boundary_functions(id, d)?;
    let all = [Portion::All];
    let mim = cfg.method == Variant::Mim;
    Ok(match id {
        DirichletEllipticBall if !mim => {
            // ΔL of L = ‖x‖ - 1 blows up at the origin; the second-order
            // residual gets the smooth ‖x‖² - 1 instead
            let v = ValueData {
                l: field(|x: Jet<'_>| x.norm_sq().shift(-1.0)),
                g: value(&b)?.g.clone(),
            };
            dirichlet_trial(&net(d, 1)?, None, &v, &all)
        }
        DirichletEllipticBall | MongeAmpere => {
            let p = if mim { Some(net(d, d)?) } else { None };
            dirichlet_trial(&net(d, 1)?, p.as_ref(), value(&b)?, &all)
        }
        NeumannCube if mim => neumann_trial_mim(&net(d, 1)?, &net(d, d)?, flux(&b)?, &all),
        NeumannCube => penalty_trial(&net(d, 1)?, None, None),
        NeumannBall if mim => neumann_trial_mim(&net(d, 1)?, &net(d, d)?, flux(&b)?, &all),
        NeumannBall => neumann_trial_dgm(&net(d, 1)?, projected(&b)?, &all),
        RobinSumDiff => robin_split_trial([&net(d, d)?, &net(d, d)?], &b.split, SplitVariant::SumDiff, &domain(id, d))?,
        RobinAugmented => robin_split_trial([&net(d, 1)?, &net(d, d)?], &b.split, SplitVariant::Augmented, &domain(id, d))?,
        MixedSlab => {
            let faces = Portion::Faces((1..d).collect());
            mixed_trial_mim(&net(d, 1)?, &net(d, d)?, value(&b)?, &[Portion::Faces(vec![0])], flux(&b)?, &[faces])
        }
        MixedComplex2d => {
            let faces: Vec<Portion> = if d > 2 { vec![Portion::Faces((2..d).collect())] } else { Vec::new() };
            mixed_trial_mim(&net(d, 1)?, &net(d, d)?, value(&b)?, &[Portion::Polygon], flux(&b)?, &faces)
        }
        MixedAnnulus => mixed_trial_mim(
            &net(d, 1)?,
            &net(d, d)?,
            value(&b)?,
            &[Portion::InnerSphere],
            flux(&b)?,
            &[Portion::OuterSphere],
        ),
        PeriodicSum | PeriodicProduct | Periodic1dHighFreq => {
            let feats = 2 * cfg.k * d;
            periodic_trial(&net(feats, 1)?, &net(feats, d)?, &vec![PERIOD; d], cfg.k)?
        }
        Parabolic => {
            let v = value(&b)?;
            let u = net(d + 1, 1)?;
            match cfg.method {
                Variant::Dgm => parabolic_trial(&u, None, None, v),
                Variant::Mim1 => parabolic_trial(&u, Some(&net(d + 1, d)?), Some(&net(d + 1, 1)?), v),
                _ => parabolic_trial(&u, Some(&net(d + 1, d)?), None, v),
            }
        }
        Wave => {
            let v = value(&b)?;
            let vel = b.velocity.as_ref().ok_or(Error::MissingField {
                field: "velocity data",
                variant: "wave",
            })?;
            let u = net(d + 1, 1)?;
            match cfg.method {
                Variant::Dgm => wave_trial(&u, None, None, v, vel),
                Variant::Mim1 => wave_trial(&u, Some(&net(d + 1, d)?), None, v, vel),
                _ => wave_trial_mim2(&u, &net(d + 1, 1)?, &net(d + 1, d)?, v, vel),
            }
        }
    })
}

fn penalty_for(cfg: &RunConfig, source: &SourceTerm) -> Result<Option<PenaltyTerm>> {
    if !uses_penalty(cfg.experiment, cfg.method) {
        return Ok(None);
    }
    Ok(Some(match cfg.experiment {
        ExperimentId::NeumannCube => flux_penalty(source, Portion::All),
        _ => initial_velocity_penalty(source)?,
    }))
}

/// Domain, trial, source and loss of a configuration.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    cfg.validate()?;
    let source = manufactured_source(cfg.experiment, cfg.d)?;
    if cfg.experiment == ExperimentId::MongeAmpere && cfg.d > MAX_DET_DIM {
        return Err(Error::config("d", format!("monge-ampere supports d <= {MAX_DET_DIM}")));
    }
    let trial = build_trial(cfg)?;
    let mut loss = LossConfig::exact(source.family, cfg.method, cfg.samples);
    if let Some(p) = penalty_for(cfg, &source)? {
        loss = loss.with_penalty(cfg.lambda, p, cfg.boundary_samples);
    }
    loss.validate()?;
    Ok(Problem {
        trial,
        source,
        loss,
        domain: domain(cfg.experiment, cfg.d),
    })
}
