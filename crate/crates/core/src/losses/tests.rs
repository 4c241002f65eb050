use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::activation::Activation;
use crate::constructions::{dirichlet_trial, penalty_trial, random_params};
use crate::experiment::ExperimentId;
use crate::field::{constant, field};
use crate::geometry::{boundary_functions, Domain};
use crate::network::NetworkSpec;

fn points(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n * dim).map(|_| rng.random_range(0.1..0.9)).collect()
}

fn config_for(source: &SourceTerm, variant: Variant) -> LossConfig {
    LossConfig::exact(source.family, variant, 1)
}

/// Fields built from the closed-form solution.
fn truth<'t>(source: &SourceTerm, x: Jet<'t>) -> TrialFields<'t> {
    let u_t = source.u_t.as_ref().map(|f| f(x));
    TrialFields {
        u: (source.u)(x),
        p: Some((source.grad)(x)),
        v: u_t,
        aux: Vec::new(),
    }
}

fn dims_for(id: ExperimentId) -> Vec<usize> {
    match id.fixed_dim() {
        Some(d) => vec![d],
        None if matches!(id, ExperimentId::MixedComplex2d | ExperimentId::MixedSlab) => vec![2, 3],
        None => vec![1, 2, 3],
    }
}

#[test]
fn truth_gives_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for id in ExperimentId::ALL {
        for d in dims_for(id) {
            let source = manufactured_source(id, d).unwrap();
            for &variant in id.methods() {
                let cfg = config_for(&source, variant);
                let tape = Tape::new();
                let dim = source.input_dim();
                let x = tape.input(&points(64, dim, &mut rng), dim, cfg.interior_order()).unwrap();
                let loss = cfg.interior_loss(&truth(&source, x), x, &source).unwrap();
                let value = loss.scalar().unwrap();
                assert!(value <= 1e-16, "{id} d={d} {variant}: {value:e}");
            }
        }
    }
}

fn poisson_1d(f: f64) -> SourceTerm {
    SourceTerm {
        family: PdeFamily::Elliptic { c: 0.0, q: 0.0 },
        d: 1,
        u: field(|x: Jet<'_>| x),
        grad: constant(1.0),
        u_t: None,
        f: constant(f),
    }
}

#[test]
fn mim_hand_value() {
    let source = poisson_1d(0.0);
    let tape = Tape::new();
    let x = tape.input(&[0.3], 1, Order::First).unwrap();
    let fields = TrialFields {
        u: x,
        p: Some(x.scale(0.0)),
        v: None,
        aux: Vec::new(),
    };
    let loss = elliptic_mim_loss(&fields, x, &source).unwrap().scalar().unwrap();
    assert!((loss - 1.0).abs() < 1e-15);
}

#[test]
fn mim_rejects_missing_flux() {
    let source = poisson_1d(0.0);
    let tape = Tape::new();
    let x = tape.input(&[0.3], 1, Order::First).unwrap();
    let fields = TrialFields {
        u: x,
        p: None,
        v: None,
        aux: Vec::new(),
    };
    let err = elliptic_mim_loss(&fields, x, &source).unwrap_err();
    assert!(matches!(err, Error::MissingField { field: "p", .. }));
}

#[test]
fn dgm_constant_case() {
    let source = poisson_1d(1.0);
    let tape = Tape::new();
    let x = tape.input(&[0.7], 1, Order::Second).unwrap();
    let fields = TrialFields {
        u: x.scale(0.0),
        p: None,
        v: None,
        aux: Vec::new(),
    };
    let loss = elliptic_dgm_loss(&fields, x, &source).unwrap().scalar().unwrap();
    assert!((loss - 1.0).abs() < 1e-15);
}

#[test]
fn dgm_residual_matches_finite_differences() {
    let d = 2;
    let source = manufactured_source(ExperimentId::DirichletEllipticBall, d).unwrap();
    let net = NetworkSpec::new(d, 8, 2, 1, Activation::Swish);
    let data = boundary_functions(ExperimentId::DirichletEllipticBall, d).unwrap().value.unwrap();
    let trial = dirichlet_trial(&net, None, &data, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = random_params(&trial, &mut rng);
    let h = 1e-3;
    let sample = Domain::Ball { d }.sample_interior(10, &mut rng);
    for x in sample.chunks(d) {
        let mut tape = Tape::new();
        let blocks: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
        let jets: Vec<_> = blocks.iter().map(|&b| tape.param(b)).collect();
        let xj = tape.input(x, d, Order::Second).unwrap();
        let fields = trial.build(&jets, xj).unwrap();
        let loss = elliptic_dgm_loss(&fields, xj, &source).unwrap().scalar().unwrap();
        let u = |p: &[f64]| trial.eval_u(&params, p).unwrap()[0];
        let u0 = u(x);
        let mut lap = 0.0;
        for i in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            lap += (u(&xp) - 2.0 * u0 + u(&xm)) / (h * h);
        }
        let f = crate::field::eval(&source.f, x, d).unwrap()[0];
        let r = -lap + u0 * u0 - f;
        assert!((loss.sqrt() - r.abs()).abs() <= 1e-4 * r.abs().max(1.0), "{} vs {}", loss.sqrt(), r.abs());
    }
}

fn ma_source(d: usize, f: f64) -> SourceTerm {
    SourceTerm {
        family: PdeFamily::MongeAmpere,
        d,
        u: field(|x: Jet<'_>| x.norm_sq().scale(0.5)),
        grad: field(|x: Jet<'_>| x),
        u_t: None,
        f: constant(f),
    }
}

#[test]
fn monge_ampere_cases() {
    let tape = Tape::new();
    let x = tape.input(&[0.4, -0.2], 1, Order::First).unwrap();
    let source = ma_source(1, 1.0);
    let loss = monge_ampere_loss(&truth(&source, x), x, &source).unwrap();
    assert!(loss.scalar().unwrap() < 1e-30);
    // identity map in 2D: only the mismatch with a zero potential remains
    let source = ma_source(2, 1.0);
    let x = tape.input(&[0.4, -0.2, 0.1, 0.3], 2, Order::First).unwrap();
    let fields = TrialFields {
        u: x.col(0).scale(0.0),
        p: Some(x),
        v: None,
        aux: Vec::new(),
    };
    let loss = monge_ampere_loss(&fields, x, &source).unwrap().scalar().unwrap();
    let flux = (0.16 + 0.04 + 0.01 + 0.09) / 2.0;
    assert!((loss - flux).abs() < 1e-15);
}

#[test]
fn monge_ampere_dimension_limit() {
    let source = ma_source(MAX_DET_DIM + 1, 1.0);
    let d = source.d;
    let tape = Tape::new();
    let x = tape.input(&vec![0.1; d], d, Order::First).unwrap();
    assert!(monge_ampere_loss(&truth(&source, x), x, &source).is_err());
}

fn time_points(source: &SourceTerm, n: usize, seed: u64) -> Vec<f64> {
    points(n, source.input_dim(), &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn parabolic_term_isolation_and_elimination() {
    let source = manufactured_source(ExperimentId::Parabolic, 2).unwrap();
    let pts = time_points(&source, 1, 2);
    let tape = Tape::new();
    let x = tape.input(&pts, 3, Order::First).unwrap();
    let mut fields = truth(&source, x);
    let mim1 = parabolic_loss(&fields, x, &source, Variant::Mim1).unwrap().scalar().unwrap();
    let mim2 = parabolic_loss(&fields, x, &source, Variant::Mim2).unwrap().scalar().unwrap();
    assert!(mim1 < 1e-28 && mim2 < 1e-28);
    // v off by 0.5 shows up in the equation and the coupling residuals
    fields.v = fields.v.map(|v| v.shift(0.5));
    let shifted = parabolic_loss(&fields, x, &source, Variant::Mim1).unwrap().scalar().unwrap();
    assert!((shifted - 0.5).abs() < 1e-13);
}

#[test]
fn mim1_equals_mim2_when_velocity_matches() {
    let source = manufactured_source(ExperimentId::Parabolic, 2).unwrap();
    let pts = time_points(&source, 16, 4);
    let tape = Tape::new();
    let x = tape.input(&pts, 3, Order::First).unwrap();
    let u = (source.u)(x).scale(1.3) + x.col(0).square();
    let p = (source.grad)(x).scale(0.7);
    let fields = TrialFields {
        u,
        p: Some(p),
        v: Some(u.partial(2)),
        aux: Vec::new(),
    };
    let a = parabolic_loss(&fields, x, &source, Variant::Mim1).unwrap().scalar().unwrap();
    let b = parabolic_loss(&fields, x, &source, Variant::Mim2).unwrap().scalar().unwrap();
    assert!((a - b).abs() <= 1e-14 * a.max(1.0));
}

#[test]
fn missing_fields_name_the_variant() {
    let source = manufactured_source(ExperimentId::Wave, 1).unwrap();
    let tape = Tape::new();
    let x = tape.input(&[0.3, 0.4], 2, Order::First).unwrap();
    let fields = TrialFields {
        u: (source.u)(x),
        p: Some((source.grad)(x)),
        v: None,
        aux: Vec::new(),
    };
    let err = wave_loss(&fields, x, &source, Variant::Mim2).unwrap_err();
    assert_eq!(err.to_string(), "mim2 requires the `v` field");
}

#[test]
fn wave_velocity_penalty_vanishes_for_t_squared() {
    let source = manufactured_source(ExperimentId::Wave, 2).unwrap();
    let pen = initial_velocity_penalty(&source).unwrap();
    let tape = Tape::new();
    let x = tape.input(&[0.2, 0.6, 0.0, 0.7, 0.1, 0.0], 3, Order::First).unwrap();
    let fields = TrialFields {
        u: x.col(2).square() * x.col(0).sin(),
        p: None,
        v: None,
        aux: Vec::new(),
    };
    let nu = tape.data(&[0.0; 6], 2, 3);
    let r = (pen.residual)(&fields, x, nu).mean_sq().scalar().unwrap();
    assert_eq!(r, 0.0);
}

fn penalised_setup(lambda: f64) -> (LossConfig, SourceTerm, crate::constructions::TrialFunction, Batch) {
    let d = 2;
    let source = manufactured_source(ExperimentId::NeumannCube, d).unwrap();
    let net = NetworkSpec::new(d, 6, 2, 1, Activation::ReQu);
    let trial = penalty_trial(&net, None, None);
    let dom = Domain::Cube { d, lo: 0.0, hi: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = Batch {
        interior: dom.sample_interior(40, &mut rng),
        boundary: Some(dom.sample_boundary(&Portion::All, 30, &mut rng).unwrap()),
    };
    let mut cfg = LossConfig::exact(source.family, Variant::Dgm, 40);
    if lambda > 0.0 {
        cfg = cfg.with_penalty(lambda, flux_penalty(&source, Portion::All), 30);
    }
    (cfg, source, trial, batch)
}

fn loss_value(cfg: &LossConfig, source: &SourceTerm, trial: &crate::constructions::TrialFunction, params: &[Vec<f64>], batch: &Batch) -> (f64, Option<f64>) {
    let mut tape = Tape::new();
    let blocks: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
    let jets: Vec<_> = blocks.iter().map(|&b| tape.param(b)).collect();
    let t = cfg.terms(&tape, trial, &jets, source, batch).unwrap();
    let total = t.combine(cfg.lambda, 1.0, 1.0).scalar().unwrap();
    (total, t.penalty.map(|p| p.scalar().unwrap()))
}

#[test]
fn penalty_decomposition() {
    let (with, source, trial, batch) = penalised_setup(2.5);
    let (without, ..) = penalised_setup(0.0);
    let params = random_params(&trial, &mut ChaCha8Rng::seed_from_u64(1));
    let (a, term) = loss_value(&with, &source, &trial, &params, &batch);
    let (b, _) = loss_value(&without, &source, &trial, &params, &Batch { boundary: None, ..batch.clone() });
    let term = term.unwrap();
    assert!(term > 0.0);
    assert!((a - b - 2.5 * term).abs() <= 1e-14 * a);
}

#[test]
fn loss_config_validation() {
    let family = PdeFamily::Elliptic { c: 0.0, q: 0.0 };
    assert!(LossConfig::exact(family, Variant::Mim, 10).validate().is_ok());
    assert!(LossConfig::exact(PdeFamily::MongeAmpere, Variant::Dgm, 10).validate().is_err());
    assert!(LossConfig::exact(PdeFamily::Wave, Variant::Mim, 10).validate().is_err());
    let source = manufactured_source(ExperimentId::NeumannCube, 2).unwrap();
    let pen = flux_penalty(&source, Portion::All);
    assert!(LossConfig::exact(family, Variant::Dgm, 10).with_penalty(1.0, pen.clone(), 0).validate().is_err());
    assert!(LossConfig::exact(family, Variant::Dgm, 10).with_penalty(0.0, pen.clone(), 5).validate().is_err());
    assert!(LossConfig::exact(family, Variant::Dgm, 10).with_penalty(1.0, pen, 5).validate().is_ok());
}

#[test]
fn relative_error_cases() {
    let u = [1.0, -2.0, 0.5];
    assert_eq!(relative_l2(&u, &u).unwrap(), 0.0);
    let twice: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
    assert!((relative_l2(&twice, &u).unwrap() - 1.0).abs() < 1e-15);
    assert!((relative_l2(&[0.0; 3], &u).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(relative_l2(&u, &[0.0; 3]), Err(Error::ZeroReference)));
}

#[test]
fn relative_error_of_trial() {
    let d = 2;
    let data = boundary_functions(ExperimentId::DirichletEllipticBall, d).unwrap().value.unwrap();
    let net = NetworkSpec::new(d, 4, 1, 1, Activation::ReQu);
    let trial = dirichlet_trial(&net, None, &data, &[]);
    let zero = vec![vec![0.0; net.param_count()]];
    let pts = Domain::Ball { d }.sample_interior(100, &mut ChaCha8Rng::seed_from_u64(2));
    // with N = 0 the trial is the constant e
    let err = relative_l2_error(&trial, &zero, &constant(std::f64::consts::E), &pts).unwrap();
    assert!(err < 1e-15);
    let wave = manufactured_source(ExperimentId::Wave, 1).unwrap();
    let v = crate::field::eval(&wave.f, &[0.5, 0.0], 2).unwrap()[0];
    assert!((v - 2.0 * (PI * 0.5).sin()).abs() < 1e-14);
}
