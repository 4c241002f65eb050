//! ADAM and the resample-every-step training loop.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamBlock, Tape};
use crate::constructions::TrialFunction;
use crate::error::{Error, Result};
use crate::geometry::{BoundarySample, Domain};
use crate::losses::{relative_l2, Batch, LossConfig, SourceTerm};

/// Environment variable holding the number of worker threads used for
/// point-parallel loss evaluation.
pub const THREADS_ENV: &str = "MIMPDE_THREADS";

/// ADAM hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub hyper: AdamParams,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub k: u64,
}

impl AdamState {
    pub fn new(n: usize, hyper: AdamParams) -> Self {
        AdamState {
            hyper,
            m: vec![0.0; n],
            v: vec![0.0; n],
            k: 0,
        }
    }

    /// One update of `params` along `grad`. The state is left untouched when
    /// the gradient is rejected.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        for (what, len) in [("parameters", params.len()), ("gradient", grad.len())] {
            if len != self.m.len() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: self.m.len(),
                    actual: len,
                });
            }
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step: self.k + 1, index });
        }
        self.k += 1;
        let AdamParams { alpha, beta1, beta2, eps } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.k as i32);
        let c2 = 1.0 - beta2.powi(self.k as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Everything needed to train one trial function.
#[derive(Clone)]
pub struct Problem {
    pub trial: TrialFunction,
    pub source: SourceTerm,
    pub loss: LossConfig,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub eval_interval: usize,
    pub eval_count: usize,
    pub seed: u64,
    pub eval_seed: u64,
    /// Points per tape; gradients of the chunks are summed in order.
    pub chunk: usize,
    pub threads: usize,
    /// Stop at the first evaluation whose relative error is at most this.
    pub target_error: Option<f64>,
    /// Reuse the first batch for every step.
    pub freeze_samples: bool,
    pub adam: AdamParams,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: 1000,
            eval_interval: 100,
            eval_count: 10_000,
            seed: 0,
            eval_seed: 0x5eed,
            chunk: 512,
            threads: threads_from_env(),
            target_error: None,
            freeze_samples: false,
            adam: AdamParams::default(),
        }
    }
}

/// Worker count from [`THREADS_ENV`], defaulting to one.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// One evaluation row of a training curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub loss: f64,
    pub rel_l2: f64,
}

#[derive(Clone, Debug)]
pub enum Status {
    Completed,
    ReachedTarget,
    /// Aborted at `epoch`; parameters are from the last finite step.
    Diverged { epoch: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rows: Vec<CurveRow>,
    pub params: Vec<Vec<f64>>,
    pub status: Status,
    pub epochs_run: usize,
    /// Relative error of the returned parameters.
    pub final_error: f64,
    pub elapsed_secs: f64,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        matches!(self.status, Status::Diverged { .. })
    }
}

/// Seed of the parameter initialisation stream.
pub fn init_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA5A5_A5A5
}

/// Fixed evaluation set of a problem.
pub fn eval_points(domain: &Domain, count: usize, eval_seed: u64) -> Vec<f64> {
    domain.sample_interior(count, &mut ChaCha8Rng::seed_from_u64(eval_seed))
}

fn sample(problem: &Problem, rng: &mut ChaCha8Rng) -> Result<Batch> {
    let interior = problem.domain.sample_interior(problem.loss.interior, rng);
    let boundary = match &problem.loss.penalty {
        Some(p) => Some(problem.domain.sample_boundary(&p.portion, problem.loss.boundary, rng)?),
        None => None,
    };
    Ok(Batch { interior, boundary })
}

/// Splits `n` rows into `parts` contiguous near-equal ranges.
fn ranges(n: usize, parts: usize) -> Vec<(usize, usize)> {
    (0..parts).map(|i| (i * n / parts, (i + 1) * n / parts)).collect()
}

fn chunk_batches(batch: &Batch, dim: usize, chunk: usize) -> Vec<(Batch, f64, f64)> {
    let n = batch.interior.len() / dim;
    let parts = n.div_ceil(chunk.max(1)).max(1);
    let nb = batch.boundary.as_ref().map_or(0, |b| b.points.len() / dim);
    ranges(n, parts)
        .into_iter()
        .zip(ranges(nb, parts))
        .map(|((a, b), (c, e))| {
            let boundary = batch.boundary.as_ref().map(|bs| BoundarySample {
                points: bs.points[c * dim..e * dim].to_vec(),
                normals: bs.normals[c * dim..e * dim].to_vec(),
            });
            let wb = if nb > 0 { (e - c) as f64 / nb as f64 } else { 0.0 };
            let sub = Batch {
                interior: batch.interior[a * dim..b * dim].to_vec(),
                boundary,
            };
            (sub, (b - a) as f64 / n as f64, wb)
        })
        .collect()
}

/// Loss and flat gradient of one chunk.
fn chunk_gradient(
    tape: &mut Tape,
    blocks: &[ParamBlock],
    problem: &Problem,
    params: &[Vec<f64>],
    (batch, wi, wb): &(Batch, f64, f64),
) -> Result<(f64, Vec<f64>)> {
    tape.clear();
    for (b, p) in blocks.iter().zip(params) {
        tape.set_params(*b, p);
    }
    let jets: Vec<_> = blocks.iter().map(|&b| tape.param(b)).collect();
    let terms = problem.loss.terms(tape, &problem.trial, &jets, &problem.source, batch)?;
    let loss = terms.combine(problem.loss.lambda, *wi, *wb);
    let value = loss.scalar()?;
    let grad = tape.backward(loss)?;
    Ok((value, grad))
}

/// Worker tapes with the parameter blocks registered.
struct Workers {
    tapes: Vec<(Tape, Vec<ParamBlock>)>,
}

impl Workers {
    fn new(params: &[Vec<f64>], threads: usize) -> Self {
        let tapes = (0..threads.max(1))
            .map(|_| {
                let mut t = Tape::new();
                let blocks = params.iter().map(|p| t.register_params(p)).collect();
                (t, blocks)
            })
            .collect();
        Workers { tapes }
    }

    /// Total loss and gradient of a batch. Chunk results are summed in chunk
    /// order, so the result does not depend on the thread count.
    fn loss_and_grad(&mut self, problem: &Problem, params: &[Vec<f64>], batch: &Batch, chunk: usize) -> Result<(f64, Vec<f64>)> {
        let chunks = chunk_batches(batch, problem.trial.input_dim, chunk);
        let mut results: Vec<Option<Result<(f64, Vec<f64>)>>> = (0..chunks.len()).map(|_| None).collect();
        if self.tapes.len() == 1 || chunks.len() == 1 {
            let (tape, blocks) = &mut self.tapes[0];
            for (slot, c) in results.iter_mut().zip(&chunks) {
                *slot = Some(chunk_gradient(tape, blocks, problem, params, c));
            }
        } else {
            let workers = self.tapes.len();
            let chunks = &chunks;
            let done: Vec<Vec<(usize, Result<(f64, Vec<f64>)>)>> = std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .tapes
                    .iter_mut()
                    .enumerate()
                    .map(|(w, (tape, blocks))| {
                        s.spawn(move || {
                            (w..chunks.len())
                                .step_by(workers)
                                .map(|i| (i, chunk_gradient(tape, blocks, problem, params, &chunks[i])))
                                .collect()
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("loss worker panicked")).collect()
            });
            for (i, r) in done.into_iter().flatten() {
                results[i] = Some(r);
            }
        }
        let mut total = 0.0;
        let mut grad = vec![0.0; params.iter().map(Vec::len).sum()];
        for r in results {
            let (l, g) = r.expect("every chunk evaluated")?;
            total += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((total, grad))
    }
}

/// Runs ADAM on a fresh sample every step, recording `(epoch, loss, ε)` every
/// `eval_interval` epochs and at the last epoch. A non-finite loss or
/// gradient ends the run with the last finite parameters.
pub fn train(problem: &Problem, opts: &TrainOptions) -> Result<TrainOutcome> {
    train_with(problem, opts, |_| {})
}

/// [`train`] with a callback for every curve row as it is recorded.
pub fn train_with(problem: &Problem, opts: &TrainOptions, mut on_row: impl FnMut(&CurveRow)) -> Result<TrainOutcome> {
    problem.loss.validate()?;
    if opts.eval_interval == 0 {
        return Err(Error::config("eval_interval", "must be positive"));
    }
    let start = Instant::now();
    let mut params = problem.trial.init(&mut ChaCha8Rng::seed_from_u64(init_seed(opts.seed)));
    let eval = eval_points(&problem.domain, opts.eval_count, opts.eval_seed);
    let exact = crate::field::eval(&problem.source.u, &eval, problem.trial.input_dim)?;
    let error_of = |params: &[Vec<f64>]| -> Result<f64> {
        let approx = problem.trial.eval_u(params, &eval)?;
        relative_l2(&approx, &exact)
    };
    let sizes: Vec<usize> = params.iter().map(Vec::len).collect();
    let mut flat: Vec<f64> = params.concat();
    let mut adam = AdamState::new(flat.len(), opts.adam);
    let mut workers = Workers::new(&params, opts.threads);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let frozen = if opts.freeze_samples { Some(sample(problem, &mut rng)?) } else { None };
    let mut rows = Vec::new();
    let mut status = Status::Completed;
    let mut epochs_run = 0;
    let mut last_error = f64::NAN;
    for epoch in 0..=opts.max_epochs {
        let fresh;
        let batch = match &frozen {
            Some(b) => b,
            None => {
                fresh = sample(problem, &mut rng)?;
                &fresh
            }
        };
        let step = workers
            .loss_and_grad(problem, &params, batch, opts.chunk)
            .and_then(|(loss, grad)| if loss.is_finite() { Ok((loss, grad)) } else { Err(Error::Diverged { epoch }) });
        let (loss, grad) = match step {
            Ok(v) => v,
            Err(e) => {
                status = Status::Diverged {
                    epoch,
                    reason: e.to_string(),
                };
                break;
            }
        };
        if epoch % opts.eval_interval == 0 || epoch == opts.max_epochs {
            last_error = error_of(&params)?;
            let row = CurveRow {
                epoch,
                loss,
                rel_l2: last_error,
            };
            on_row(&row);
            rows.push(row);
            if opts.target_error.is_some_and(|t| last_error <= t) {
                status = Status::ReachedTarget;
                break;
            }
        }
        if epoch == opts.max_epochs {
            break;
        }
        let mut next = flat.clone();
        if let Err(e) = adam.step(&mut next, &grad) {
            status = Status::Diverged {
                epoch,
                reason: e.to_string(),
            };
            break;
        }
        flat = next;
        params = split(&flat, &sizes);
        epochs_run = epoch + 1;
    }
    let final_error = match rows.last() {
        Some(r) if r.epoch == epochs_run => r.rel_l2,
        _ => error_of(&params).unwrap_or(last_error),
    };
    Ok(TrainOutcome {
        rows,
        params,
        status,
        epochs_run,
        final_error,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

fn split(flat: &[f64], sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &n in sizes {
        out.push(flat[at..at + n].to_vec());
        at += n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::constructions::dirichlet_trial;
    use crate::experiment::{ExperimentId, Variant};
    use crate::field::{constant, field};
    use crate::geometry::ValueData;
    use crate::losses::{manufactured_source, PdeFamily};
    use crate::network::NetworkSpec;
    use rand::Rng;

    /// Scalar transcription of the update rule.
    fn reference_step(theta: f64, g: f64, m: f64, v: f64, k: i32) -> (f64, f64, f64) {
        let m = 0.9 * m + 0.1 * g;
        let v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(k));
        let vh = v / (1.0 - 0.999f64.powi(k));
        (theta - 0.001 * mh / (vh.sqrt() + 1e-8), m, v)
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut s = AdamState::new(1, AdamParams::default());
        let mut p = [2.0];
        s.step(&mut p, &[0.5]).unwrap();
        assert!((p[0] - (2.0 - 0.001 * 0.5 / (0.5 + 1e-8))).abs() < 1e-16);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn zero_gradient_from_rest() {
        let mut s = AdamState::new(3, AdamParams::default());
        let mut p = [1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert!(s.m.iter().chain(&s.v).all(|&x| x == 0.0));
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50;
        let mut s = AdamState::new(n, AdamParams::default());
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut r = p.clone();
        let mut rm = vec![0.0; n];
        let mut rv = vec![0.0; n];
        for k in 1..=20 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            s.step(&mut p, &g).unwrap();
            for i in 0..n {
                let (t, m, v) = reference_step(r[i], g[i], rm[i], rv[i], k);
                r[i] = t;
                rm[i] = m;
                rv[i] = v;
                assert!((p[i] - r[i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut s = AdamState::new(3, AdamParams::default());
        let mut p = [0.0; 3];
        match s.step(&mut p, &[0.0, f64::NAN, 1.0]) {
            Err(Error::NonFiniteGradient { step: 1, index: 1 }) => {}
            other => panic!("{other:?}"),
        }
        assert_eq!(s.k, 0);
    }

    /// Fit `u = x²` on `[-1, 1]` with `û = (1 - x²)N + 1`.
    fn quadratic_problem() -> Problem {
        let data = ValueData {
            l: field(|x: Jet<'_>| x.norm_sq().scale(-1.0).shift(1.0)),
            g: constant(1.0),
        };
        let net = NetworkSpec::new(1, 8, 1, 1, Activation::Swish);
        let source = SourceTerm {
            family: PdeFamily::Elliptic { c: 0.0, q: 0.0 },
            d: 1,
            u: field(|x: Jet<'_>| x.square()),
            grad: field(|x: Jet<'_>| x.scale(2.0)),
            u_t: None,
            f: constant(-2.0),
        };
        Problem {
            trial: dirichlet_trial(&net, None, &data, &[]),
            source,
            loss: LossConfig::exact(PdeFamily::Elliptic { c: 0.0, q: 0.0 }, Variant::Dgm, 200),
            domain: Domain::Ball { d: 1 },
        }
    }

    use crate::autodiff::Jet;

    fn opts(epochs: usize) -> TrainOptions {
        TrainOptions {
            max_epochs: epochs,
            eval_count: 500,
            threads: 1,
            ..TrainOptions::default()
        }
    }

    #[test]
    fn zero_epochs_records_initial_row() {
        let out = train(&quadratic_problem(), &opts(0)).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].epoch, 0);
        assert_eq!(out.epochs_run, 0);
        assert_eq!(out.final_error, out.rows[0].rel_l2);
    }

    #[test]
    fn quadratic_smoke_test() {
        let out = train(&quadratic_problem(), &opts(2000)).unwrap();
        assert!(out.final_error < 1e-2, "error {}", out.final_error);
        let epochs: Vec<usize> = out.rows.iter().map(|r| r.epoch).collect();
        assert!(epochs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*epochs.last().unwrap(), 2000);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let p = quadratic_problem();
        let mut o = opts(30);
        o.chunk = 64;
        let a = train(&p, &o).unwrap();
        let b = train(&p, &o).unwrap();
        o.threads = 3;
        let c = train(&p, &o).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.params, c.params);
        assert_eq!(a.rows, c.rows);
    }

    #[test]
    fn chunked_gradient_matches_single_tape() {
        let p = quadratic_problem();
        let params = p.trial.init(&mut ChaCha8Rng::seed_from_u64(4));
        let batch = sample(&p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut w = Workers::new(&params, 1);
        let (l1, g1) = w.loss_and_grad(&p, &params, &batch, 1000).unwrap();
        let (l2, g2) = w.loss_and_grad(&p, &params, &batch, 37).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn resampling_advances() {
        let p = quadratic_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sample(&p, &mut rng).unwrap();
        let b = sample(&p, &mut rng).unwrap();
        assert_ne!(a.interior, b.interior);
    }

    #[test]
    fn early_stop_on_target() {
        let mut o = opts(2000);
        o.target_error = Some(0.5);
        let out = train(&quadratic_problem(), &o).unwrap();
        assert!(matches!(out.status, Status::ReachedTarget));
        assert!(out.final_error <= 0.5);
        assert!(out.epochs_run < 2000);
    }

    #[test]
    fn divergence_keeps_last_params() {
        let mut p = quadratic_problem();
        p.source = manufactured_source(ExperimentId::DirichletEllipticBall, 1).unwrap();
        p.source.f = field(|x: Jet<'_>| x.recip().recip().scale(0.0) + x.scale(0.0).recip());
        let out = train(&p, &opts(5)).unwrap();
        assert!(out.diverged());
        assert!(out.params.iter().flatten().all(|v| v.is_finite()));
    }
}
