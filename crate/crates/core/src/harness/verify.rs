//! The no-training property suite behind `mimpde verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::autodiff::{Order, Tape};
use crate::constructions::{
    robin_trial_dgm, robin_trial_mim, verify_exactness, ConstraintKind, TrialFunction,
};
use crate::error::Result;
use crate::experiment::{ExperimentId, Variant};
use crate::geometry::{robin_ball_data, Domain, Portion};
use crate::losses::{manufactured_source, validate_source, SourceTerm};
use crate::network::{count_parameters, Method, NetworkSpec};
use crate::optimizer::{AdamParams, AdamState};

use super::catalogue::{architecture_rows, build_trial, domain, min_dim};
use super::config::RunConfig;

/// Outcome of one property.
#[derive(Clone, Debug)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        PropertyResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => PropertyResult::new(name, passed, detail),
            Err(e) => PropertyResult::new(name, false, format!("error: {e}")),
        }
    }

    /// `PASS name: detail` / `FAIL name: detail`.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Sample and draw counts of the suite.
#[derive(Clone, Copy, Debug)]
pub struct SuiteSize {
    pub constraint_points: usize,
    pub draws: usize,
    pub fd_points: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        SuiteSize {
            constraint_points: 1000,
            draws: 20,
            fd_points: 100,
        }
    }
}

/// A named trial function with the domain its constraints live on.
pub struct Construction {
    pub name: String,
    pub trial: TrialFunction,
    pub domain: Domain,
}

/// Every exactly-constrained construction of the catalogue at `d`, plus the
/// generic Robin constructions on the ball.
pub fn catalogue_constructions(d: usize) -> Result<Vec<Construction>> {
    let mut out = Vec::new();
    for id in ExperimentId::ALL {
        let d = id.fixed_dim().unwrap_or(d.max(min_dim(id)));
        for &method in id.methods() {
            let mut cfg = RunConfig::new(id, method, d);
            cfg.width = cfg.width.clamp(4, 12);
            let trial = build_trial(&cfg)?;
            if trial.kind == ConstraintKind::None {
                continue;
            }
            out.push(Construction {
                name: format!("{id}/{method} d={d}"),
                trial,
                domain: domain(id, d),
            });
        }
    }
    let data = robin_ball_data();
    let net = |d_out| NetworkSpec::new(d, 8, 2, d_out, Activation::ReQu);
    out.push(Construction {
        name: format!("robin-ball/dgm d={d}"),
        trial: robin_trial_dgm(&net(1), &data, &[Portion::All]),
        domain: Domain::Ball { d },
    });
    out.push(Construction {
        name: format!("robin-ball/mim d={d}"),
        trial: robin_trial_mim(&net(1), &net(d), &data, &[Portion::All]),
        domain: Domain::Ball { d },
    });
    Ok(out)
}

/// Largest constraint residual of each construction; fails when any check
/// exceeds its tolerance.
pub fn exactness(constructions: &[Construction], size: SuiteSize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst_value = 0.0f64;
    let mut worst_flux = 0.0f64;
    let mut checks = 0;
    for c in constructions {
        match verify_exactness(&c.trial, &c.domain, size.constraint_points, size.draws, &mut rng) {
            Ok(reports) => {
                for r in reports {
                    checks += 1;
                    if r.tolerance <= 1e-12 {
                        worst_value = worst_value.max(r.max_residual);
                    } else {
                        worst_flux = worst_flux.max(r.max_residual);
                    }
                    if !r.passed() {
                        failures.push(format!(
                            "{} [{}] residual {:.3e} > {:.0e} at {:?}",
                            c.name, r.name, r.max_residual, r.tolerance, r.worst_point
                        ));
                    }
                }
            }
            Err(e) => failures.push(format!("{}: {e}", c.name)),
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "{checks} checks over {} constructions; worst derivative-free {worst_value:.2e}, worst flux {worst_flux:.2e}",
            constructions.len()
        )
    } else {
        failures.join("; ")
    };
    PropertyResult::new("exact constraints", failures.is_empty(), detail)
}

/// Periodicity of the periodic trials, reported separately.
pub fn periodicity(size: SuiteSize, seed: u64) -> PropertyResult {
    let r = (|| -> Result<Vec<Construction>> {
        let mut out = Vec::new();
        for (id, d) in [
            (ExperimentId::PeriodicSum, 2),
            (ExperimentId::PeriodicProduct, 3),
            (ExperimentId::Periodic1dHighFreq, 1),
        ] {
            let cfg = RunConfig::new(id, Variant::Mim, d);
            out.push(Construction {
                name: format!("{id} d={d} k={}", cfg.k),
                trial: build_trial(&cfg)?,
                domain: domain(id, d),
            });
        }
        Ok(out)
    })();
    match r {
        Ok(cs) => {
            let mut p = exactness(&cs, size, seed);
            p.name = "periodicity".into();
            p
        }
        Err(e) => PropertyResult::new("periodicity", false, format!("error: {e}")),
    }
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    num / den.max(1e-12)
}

/// Input gradients and Laplacians of random networks, and parameter
/// gradients of a loss containing both, against central differences.
pub fn autodiff_fd(size: SuiteSize, seed: u64) -> PropertyResult {
    PropertyResult::from_result("autodiff vs finite differences", autodiff_fd_inner(size, seed))
}

fn autodiff_fd_inner(size: SuiteSize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut e1, mut e2, mut ep) = (0.0f64, 0.0f64, 0.0f64);
    for (d, act) in [(2, Activation::Swish), (3, Activation::Swish), (3, Activation::ReCu)] {
        let spec = NetworkSpec::new(d, 6, 2, 1, act);
        let params: Vec<f64> = spec
            .init_with(&mut rng)
            .into_iter()
            .map(|w| w + rng.random_range(-0.1..0.1))
            .collect();
        let pts: Vec<f64> = (0..size.fd_points * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |p: &[f64], x: &[f64]| spec.eval(p, x);
        // input derivatives at every point
        let tape = Tape::new();
        let pj = tape.constant(&params, 1, params.len());
        let x = tape.input(&pts, d, Order::Second)?;
        let y = spec.forward(pj, x);
        let grad = y.grad().values();
        let dims: Vec<usize> = (0..d).collect();
        let lap = y.laplacian(&dims).values();
        let (h1, h2) = (1e-5, 1e-4);
        let mut fd_grad = Vec::with_capacity(grad.len());
        let mut fd_lap = Vec::with_capacity(lap.len());
        for row in pts.chunks(d) {
            let f0 = eval(&params, row)?[0];
            let mut l = 0.0;
            for i in 0..d {
                let mut p = row.to_vec();
                let mut m = row.to_vec();
                p[i] += h1;
                m[i] -= h1;
                fd_grad.push((eval(&params, &p)?[0] - eval(&params, &m)?[0]) / (2.0 * h1));
                p[i] += h2 - h1;
                m[i] -= h2 - h1;
                l += (eval(&params, &p)?[0] - 2.0 * f0 + eval(&params, &m)?[0]) / (h2 * h2);
            }
            fd_lap.push(l);
        }
        e1 = e1.max(rel_inf(&grad, &fd_grad));
        if act == Activation::Swish {
            e2 = e2.max(rel_inf(&lap, &fd_lap));
        }
        // parameter gradient of mean((ΔN)² + |∇N|²) over a few points
        let few = &pts[..10 * d];
        let loss_at = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut tape = Tape::new();
            let b = tape.register_params(p);
            let x = tape.input(few, d, Order::Second)?;
            let y = spec.forward(tape.param(b), x);
            let l = y.laplacian(&dims).mean_sq() + y.grad().mean_sq();
            Ok((l.scalar()?, tape.backward(l)?))
        };
        let (_, g) = loss_at(&params)?;
        let hp = 1e-6;
        let mut fd = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += hp;
            let up = loss_at(&p)?.0;
            p[i] -= 2.0 * hp;
            let dn = loss_at(&p)?.0;
            fd.push((up - dn) / (2.0 * hp));
        }
        if act == Activation::Swish {
            ep = ep.max(rel_inf(&g, &fd));
        }
    }
    let ok = e1 <= 1e-5 && e2 <= 1e-4 && ep <= 1e-5;
    Ok((
        ok,
        format!("input gradient {e1:.2e} (<= 1e-5), Laplacian {e2:.2e} (<= 1e-4), parameter gradient {ep:.2e} (<= 1e-5)"),
    ))
}

/// Ten random ADAM steps against a scalar transcription of the update.
pub fn adam_oracle(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 64;
    let AdamParams { alpha, beta1, beta2, eps } = AdamParams::default();
    let mut state = AdamState::new(n, AdamParams::default());
    let mut theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut reference = theta.clone();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut worst = 0.0f64;
    let mut max_step = 0.0f64;
    for k in 1..=10 {
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let before = theta.clone();
        if let Err(e) = state.step(&mut theta, &g) {
            return PropertyResult::new("adam oracle", false, format!("error: {e}"));
        }
        for i in 0..n {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - beta1.powi(k));
            let vh = v[i] / (1.0 - beta2.powi(k));
            reference[i] -= alpha * mh / (vh.sqrt() + eps);
            worst = worst.max((theta[i] - reference[i]).abs());
            max_step = max_step.max((theta[i] - before[i]).abs());
        }
    }
    let ok = worst <= 1e-15 && max_step <= 10.0 * alpha && state.k == 10;
    PropertyResult::new(
        "adam oracle",
        ok,
        format!("max deviation {worst:.1e} (<= 1e-15), max step {max_step:.2e} (<= 10α)"),
    )
}

/// Closed-form parameter counts against the packed layouts.
pub fn parameter_counts() -> PropertyResult {
    let mut checked = 0;
    let mut failures = Vec::new();
    for id in ExperimentId::ALL {
        let d_fixed = id.fixed_dim();
        for &(d, n, m) in architecture_rows(id) {
            let d = d_fixed.unwrap_or(d);
            for &method in id.methods() {
                let mut cfg = RunConfig::new(id, method, d);
                cfg.width = n;
                cfg.depth = m;
                let trial = match build_trial(&cfg) {
                    Ok(t) => t,
                    Err(e) => {
                        failures.push(format!("{id}/{method} d={d}: {e}"));
                        continue;
                    }
                };
                let packed: usize = trial.init(&mut ChaCha8Rng::seed_from_u64(0)).iter().map(Vec::len).sum();
                let nets: usize = trial.nets.iter().map(|s| s.spec.param_count()).sum();
                // the closed forms describe a scalar u net on x, plus a d-vector p net for MIM
                let formula = match (id, method) {
                    (ExperimentId::RobinSumDiff, _) | (ExperimentId::PeriodicSum | ExperimentId::PeriodicProduct | ExperimentId::Periodic1dHighFreq, _) => None,
                    (ExperimentId::Parabolic | ExperimentId::Wave, _) => None,
                    (_, Variant::Dgm) => Some(count_parameters(Method::Dgm, m, n, d)),
                    _ => Some(count_parameters(Method::Mim, m, n, d)),
                };
                checked += 1;
                if packed != nets || trial.param_count() != nets {
                    failures.push(format!("{id}/{method} d={d}: packed {packed} vs layout {nets}"));
                }
                if let Some(f) = formula {
                    if f != nets {
                        failures.push(format!("{id}/{method} (d,n,m)=({d},{n},{m}): formula {f} vs {nets}"));
                    }
                }
            }
        }
    }
    let ok = failures.is_empty();
    let detail = if ok {
        format!("{checked} (experiment, method, d, n, m) combinations")
    } else {
        failures.join("; ")
    };
    PropertyResult::new("parameter counts", ok, detail)
}

/// Sources of every experiment at the given dimensions.
pub fn catalogue_sources(dims: &[usize]) -> Result<Vec<(String, SourceTerm, Domain)>> {
    let mut out = Vec::new();
    for id in ExperimentId::ALL {
        let ds: Vec<usize> = match id.fixed_dim() {
            Some(d) => vec![d],
            None => dims.iter().map(|&d| d.max(min_dim(id))).collect(),
        };
        for d in ds {
            out.push((format!("{id} d={d}"), manufactured_source(id, d)?, domain(id, d)));
        }
    }
    Ok(out)
}

/// Closed-form sources against finite differences of the exact solutions.
pub fn source_validation(sources: &[(String, SourceTerm, Domain)], size: SuiteSize, seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, src, dom) in sources {
        let pts = dom.sample_interior(size.fd_points, &mut rng);
        match validate_source(src, &pts) {
            Ok((ef, eg, et)) => {
                let e = ef.max(eg).max(et);
                worst = worst.max(e);
                if e > 1e-6 {
                    failures.push(format!("{name}: source {ef:.2e}, gradient {eg:.2e}, time derivative {et:.2e}"));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let ok = failures.is_empty();
    let detail = if ok {
        format!("{} sources, worst relative error {worst:.2e} (<= 1e-6)", sources.len())
    } else {
        failures.join("; ")
    };
    PropertyResult::new("source terms", ok, detail)
}

/// The whole suite in a fixed order.
pub fn run_suite(size: SuiteSize) -> Vec<PropertyResult> {
    let mut out = Vec::new();
    let mut constructions = Vec::new();
    let mut build_error = None;
    for d in [2, 3] {
        match catalogue_constructions(d) {
            Ok(c) => constructions.extend(c),
            Err(e) => build_error = Some(e),
        }
    }
    out.push(match build_error {
        Some(e) => PropertyResult::new("exact constraints", false, format!("error: {e}")),
        None => exactness(&constructions, size, 1),
    });
    out.push(autodiff_fd(size, 2));
    out.push(adam_oracle(3));
    out.push(parameter_counts());
    out.push(match catalogue_sources(&[1, 2, 3, 5]) {
        Ok(s) => source_validation(&s, size, 4),
        Err(e) => PropertyResult::new("source terms", false, format!("error: {e}")),
    });
    out.push(periodicity(size, 5));
    out
}
