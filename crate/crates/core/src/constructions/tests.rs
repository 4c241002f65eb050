use std::f64::consts::E;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::activation::Activation;
use crate::experiment::ExperimentId;
use crate::field::{self, field};
use crate::geometry::{boundary_functions, robin_interval_data};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

fn net(d_in: usize, d_out: usize) -> NetworkSpec {
    NetworkSpec::new(d_in, 6, 2, d_out, Activation::ReQu)
}

fn value_data(id: ExperimentId, d: usize) -> ValueData {
    boundary_functions(id, d).unwrap().value.unwrap()
}

fn flux_form(id: ExperimentId, d: usize) -> FluxForm {
    boundary_functions(id, d).unwrap().flux.unwrap()
}

fn projected(id: ExperimentId, d: usize) -> FluxData {
    match flux_form(id, d) {
        FluxForm::Projected(f) => f,
        FluxForm::Componentwise(_) => panic!("projected data expected"),
    }
}

/// Linear network `N(x) = c·x + b` expressed through the residual network.
fn linear_net(d: usize, c: &[f64], b: f64) -> (NetworkSpec, Vec<f64>) {
    let spec = net(d, 1);
    let mut w = spec.unpack(&vec![0.0; spec.param_count()]).unwrap();
    for (j, &cj) in c.iter().enumerate() {
        w.out_w[[0, j]] = cj;
    }
    w.out_b[0] = b;
    let params = spec.pack(&w);
    (spec, params)
}

fn assert_all_pass(reports: &[CheckReport]) {
    for r in reports {
        assert!(r.passed(), "{} residual {:e} at {:?}", r.name, r.max_residual, r.worst_point);
    }
}

#[test]
fn dirichlet_ball_boundary_and_centre() {
    let data = value_data(ExperimentId::DirichletEllipticBall, 2);
    let trial = dirichlet_trial(&net(2, 1), Some(&net(2, 2)), &data, &[Portion::All]);
    let mut r = rng();
    let params = random_params(&trial, &mut r);
    let s = Domain::Ball { d: 2 }.sample_boundary(&Portion::All, 1000, &mut r).unwrap();
    let u = trial.eval_u(&params, &s.points).unwrap();
    assert!(u.iter().all(|v| (v - E).abs() <= 1e-12 * E));
    let n0 = trial.nets[0].spec.eval(&params[0], &[0.0, 0.0]).unwrap()[0];
    let u0 = trial.eval_u(&params, &[0.0, 0.0]).unwrap()[0];
    assert!((u0 - (E - n0)).abs() < 1e-14);
}

#[test]
fn monge_ampere_trial_on_sphere() {
    let d = 3;
    let data = value_data(ExperimentId::MongeAmpere, d);
    let trial = dirichlet_trial(&net(d, 1), Some(&net(d, d)), &data, &[Portion::All]);
    let reports = verify_exactness(&trial, &Domain::Ball { d }, 200, 3, &mut rng()).unwrap();
    assert_all_pass(&reports);
}

#[test]
fn neumann_dgm_linear_network_closed_form() {
    let (spec, params) = linear_net(2, &[0.7, -1.3], 0.25);
    let data = projected(ExperimentId::NeumannBall, 2);
    let trial = neumann_trial_dgm(&spec, &data, &[Portion::All]);
    let x = [0.3, -0.4];
    let u = trial.eval_u(&[params], &x).unwrap()[0];
    // F = (0 - c·x) / 1 and L = (|x|² - 1)/2
    let cx = 0.7 * x[0] - 1.3 * x[1];
    let l = (x[0] * x[0] + x[1] * x[1] - 1.0) / 2.0;
    assert!((u - (l * (-cx) + cx + 0.25)).abs() < 1e-14);
}

#[test]
fn neumann_dgm_exact_on_sphere() {
    let data = projected(ExperimentId::NeumannBall, 3);
    let trial = neumann_trial_dgm(&net(3, 1), &data, &[Portion::All]);
    let reports = verify_exactness(&trial, &Domain::Ball { d: 3 }, 300, 4, &mut rng()).unwrap();
    assert_all_pass(&reports);
}

#[test]
fn denominator_floor_trips() {
    let mut data = projected(ExperimentId::NeumannBall, 2);
    // gradient-free direction at x_1 = 0
    data.denom = field(|x: Jet<'_>| x.col(0));
    let trial = neumann_trial_mim(&net(2, 1), &net(2, 2), &FluxForm::Projected(data), &[]);
    let params = random_params(&trial, &mut rng());
    match trial.eval_u(&params, &[0.5, 0.1, 0.0, 0.3]) {
        Err(Error::SmallDenominator { point, .. }) => assert_eq!(point, vec![0.0, 0.3]),
        other => panic!("expected a denominator error, got {other:?}"),
    }
}

#[test]
fn mim_flux_constructions_are_exact() {
    let mut r = rng();
    let ball = neumann_trial_mim(&net(2, 1), &net(2, 2), &flux_form(ExperimentId::NeumannBall, 2), &[Portion::All]);
    assert_all_pass(&verify_exactness(&ball, &Domain::Ball { d: 2 }, 300, 3, &mut r).unwrap());
    let cube = neumann_trial_mim(&net(3, 1), &net(3, 3), &flux_form(ExperimentId::NeumannCube, 3), &[Portion::All]);
    let dom = Domain::Cube { d: 3, lo: 0.0, hi: 1.0 };
    assert_all_pass(&verify_exactness(&cube, &dom, 300, 3, &mut r).unwrap());
}

#[test]
fn cube_flux_takes_face_values() {
    let cube = neumann_trial_mim(&net(2, 1), &net(2, 2), &flux_form(ExperimentId::NeumannCube, 2), &[]);
    let params = random_params(&cube, &mut rng());
    let mut tape = Tape::new();
    let b: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
    let jets: Vec<_> = b.iter().map(|&b| tape.param(b)).collect();
    let x = tape.input(&[0.0, 0.4, 1.0, 0.4], 2, Order::Zero).unwrap();
    let p = cube.build(&jets, x).unwrap().p.unwrap().values();
    assert!((p[0] - 1.0).abs() < 1e-15);
    assert!((p[2] - E).abs() < 1e-15);
}

#[test]
fn mixed_constructions_are_exact() {
    let mut r = rng();
    let cases = [
        (ExperimentId::MixedSlab, Domain::Cube { d: 3, lo: 0.0, hi: 1.0 }, vec![Portion::Faces(vec![0])], vec![Portion::Faces(vec![1, 2])]),
        (ExperimentId::MixedComplex2d, Domain::NotchedPentagon { d: 3 }, vec![Portion::Polygon], vec![Portion::Faces(vec![2])]),
        (ExperimentId::MixedAnnulus, Domain::Annulus { d: 2, inner: 0.5 }, vec![Portion::InnerSphere], vec![Portion::OuterSphere]),
    ];
    for (id, dom, von, fon) in cases {
        let d = dom.dim();
        let trial = mixed_trial_mim(&net(d, 1), &net(d, d), &value_data(id, d), &von, &flux_form(id, d), &fon);
        let reports = verify_exactness(&trial, &dom, 300, 3, &mut r).unwrap();
        assert_eq!(reports.len(), 2);
        assert_all_pass(&reports);
    }
}

#[test]
fn annulus_inner_value() {
    let trial = mixed_trial_mim(
        &net(2, 1),
        &net(2, 2),
        &value_data(ExperimentId::MixedAnnulus, 2),
        &[],
        &flux_form(ExperimentId::MixedAnnulus, 2),
        &[],
    );
    let params = random_params(&trial, &mut rng());
    let u = trial.eval_u(&params, &[0.5, 0.0, 0.0, -0.5]).unwrap();
    assert!(u.iter().all(|v| (v - 0.75f64.cos()).abs() < 1e-15));
}

#[test]
fn robin_ball_both_variants() {
    let data = crate::geometry::robin_ball_data();
    let mut r = rng();
    let dom = Domain::Ball { d: 2 };
    let dgm = robin_trial_dgm(&net(2, 1), &data, &[Portion::All]);
    assert_all_pass(&verify_exactness(&dgm, &dom, 300, 3, &mut r).unwrap());
    let mim = robin_trial_mim(&net(2, 1), &net(2, 2), &data, &[Portion::All]);
    assert_all_pass(&verify_exactness(&mim, &dom, 300, 3, &mut r).unwrap());
}

#[test]
fn robin_interval_hand_expansion() {
    // G(x) = 1 + x; L = x(1-x), ∇L = 1 - 2x, ν̃ = 2x - 1, D = -1
    let data = robin_interval_data(field(|x: Jet<'_>| x + 1.0));
    let (u_net, p_net) = (net(1, 1), net(1, 1));
    let mim = robin_trial_mim(&u_net, &p_net, &data, &[]);
    let params = random_params(&mim, &mut rng());
    let x = 0.3;
    let n = u_net.eval(&params[0], &[x]).unwrap()[0];
    let ns = p_net.eval(&params[1], &[x]).unwrap()[0];
    let f = (1.0 + x - n - ns * (2.0 * x - 1.0)) / -1.0;
    let expected = f * (1.0 - 2.0 * x) + ns;
    let mut tape = Tape::new();
    let b: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
    let jets: Vec<_> = b.iter().map(|&b| tape.param(b)).collect();
    let xj = tape.input(&[x], 1, Order::Zero).unwrap();
    let p = mim.build(&jets, xj).unwrap().p.unwrap().values()[0];
    assert!((p - expected).abs() < 1e-14);
    // boundary identity p(x)ν + u = G at both ends
    let dom = Domain::Cube { d: 1, lo: 0.0, hi: 1.0 };
    let mim = robin_trial_mim(&u_net, &p_net, &data, &[Portion::All]);
    assert_all_pass(&verify_exactness(&mim, &dom, 50, 3, &mut rng()).unwrap());
    let dgm = robin_trial_dgm(&u_net, &data, &[Portion::All]);
    assert_all_pass(&verify_exactness(&dgm, &dom, 50, 3, &mut rng()).unwrap());
}

#[test]
fn robin_split_variants() {
    let d = 3;
    let dom = Domain::Cube { d, lo: 0.0, hi: 1.0 };
    let mut r = rng();
    let split = boundary_functions(ExperimentId::RobinSumDiff, d).unwrap().split;
    let sd = robin_split_trial([&net(d, d), &net(d, d)], &split, SplitVariant::SumDiff, &dom).unwrap();
    assert_all_pass(&verify_exactness(&sd, &dom, 300, 3, &mut r).unwrap());
    let split = boundary_functions(ExperimentId::RobinAugmented, d).unwrap().split;
    let aug = robin_split_trial([&net(d, 1), &net(d, d)], &split, SplitVariant::Augmented, &dom).unwrap();
    assert_all_pass(&verify_exactness(&aug, &dom, 300, 3, &mut r).unwrap());
    assert!(robin_split_trial([&net(d, 1), &net(d, d)], &split, SplitVariant::Augmented, &Domain::Ball { d }).is_err());
}

#[test]
fn split_face_values() {
    let d = 2;
    let dom = Domain::Cube { d, lo: 0.0, hi: 1.0 };
    let split = boundary_functions(ExperimentId::RobinSumDiff, d).unwrap().split;
    let sd = robin_split_trial([&net(d, d), &net(d, d)], &split, SplitVariant::SumDiff, &dom).unwrap();
    let params = random_params(&sd, &mut rng());
    let mut tape = Tape::new();
    let b: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
    let jets: Vec<_> = b.iter().map(|&b| tape.param(b)).collect();
    let pts = [0.0, 0.6, 1.0, 0.6];
    let x = tape.input(&pts, d, Order::Zero).unwrap();
    let f = sd.build(&jets, x).unwrap();
    let g = field::eval(&split[0].g, &pts, d).unwrap();
    assert!((f.aux[0].values()[0] - g[0]).abs() < 1e-15);
    assert!((f.aux[1].values()[2] - g[2]).abs() < 1e-15);
}

#[test]
fn periodic_features_layout_and_trial() {
    let tape = Tape::new();
    let x = tape.input(&[0.5], 1, Order::Zero).unwrap();
    let t = periodic_features(x, &[2.0], 1).values();
    assert!((t[0] - 1.0).abs() < 1e-15 && t[1].abs() < 1e-15);
    let x = tape.input(&[0.1, 0.2], 2, Order::Zero).unwrap();
    assert_eq!(periodic_features(x, &[2.0, 2.0], 3).width(), 12);
    let k = 2;
    let spec = NetworkSpec::new(8, 6, 2, 1, Activation::Swish);
    let pspec = NetworkSpec::new(8, 6, 2, 2, Activation::Swish);
    let trial = periodic_trial(&spec, &pspec, &[2.0, 2.0], k).unwrap();
    let dom = Domain::Cube { d: 2, lo: -1.0, hi: 1.0 };
    assert_all_pass(&verify_exactness(&trial, &dom, 200, 3, &mut rng()).unwrap());
}

#[test]
fn time_trials_are_exact() {
    let d = 2;
    let dom = Domain::TimeCylinder {
        base: Box::new(Domain::Cube { d, lo: 0.0, hi: 1.0 }),
    };
    let b = boundary_functions(ExperimentId::Wave, d).unwrap();
    let (value, vel) = (b.value.unwrap(), b.velocity.unwrap());
    let mut r = rng();
    let par = parabolic_trial(&net(3, 1), Some(&net(3, d)), Some(&net(3, 1)), &value);
    assert_all_pass(&verify_exactness(&par, &dom, 300, 3, &mut r).unwrap());
    let wave = wave_trial_mim2(&net(3, 1), &net(3, 1), &net(3, d), &value, &vel);
    let reports = verify_exactness(&wave, &dom, 300, 3, &mut r).unwrap();
    assert_eq!(reports.len(), 3);
    assert_all_pass(&reports);
    // v is free away from t = 0
    let params = random_params(&wave, &mut r);
    let mut tape = Tape::new();
    let blocks: Vec<_> = params.iter().map(|p| tape.register_params(p)).collect();
    let jets: Vec<_> = blocks.iter().map(|&b| tape.param(b)).collect();
    let x = tape.input(&[1.0, 0.3, 0.5], 3, Order::Zero).unwrap();
    let f = wave.build(&jets, x).unwrap();
    assert_eq!(f.u.values()[0], 0.0);
    assert!(f.v.unwrap().values()[0] != 0.0);
}

#[test]
fn mim_fields_use_independent_blocks() {
    let trial = neumann_trial_mim(&net(2, 1), &net(2, 2), &flux_form(ExperimentId::NeumannBall, 2), &[]);
    let mut r = rng();
    let mut params = random_params(&trial, &mut r);
    let pts = Domain::Ball { d: 2 }.sample_interior(50, &mut r);
    let before = trial.eval_u(&params, &pts).unwrap();
    for v in params[1].iter_mut() {
        *v += 0.3;
    }
    assert_eq!(before, trial.eval_u(&params, &pts).unwrap());
}

#[test]
fn penalty_trial_is_rejected_by_verification() {
    let trial = penalty_trial(&net(2, 1), None, None);
    assert!(verify_exactness(&trial, &Domain::Ball { d: 2 }, 10, 1, &mut rng()).is_err());
}

#[test]
fn wrong_multiplier_is_detected() {
    let mut data = value_data(ExperimentId::DirichletEllipticBall, 2);
    data.l = field(|x: Jet<'_>| x.norm_sq() - 0.9);
    let trial = dirichlet_trial(&net(2, 1), None, &data, &[Portion::All]);
    let reports = verify_exactness(&trial, &Domain::Ball { d: 2 }, 100, 1, &mut rng()).unwrap();
    assert!(!reports[0].passed());
}
