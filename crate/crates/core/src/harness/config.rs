//! Run configuration in line-oriented `key = value` text.
//!
//! Keys (`#` starts a comment, blank lines are ignored):
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `experiment` | catalogue id | required |
//! | `method` | `dgm`, `mim`, `mim1` or `mim2` | required |
//! | `d` | spatial dimension | 2 (1 for the 1D problem) |
//! | `width`, `depth` | `n` and `m` of every network | printed row for `d` |
//! | `activation` | `requ`, `recu` or `swish` | per experiment |
//! | `k` | Fourier harmonics (periodic problems) | per experiment |
//! | `samples` | interior points per step | desk value |
//! | `boundary_samples` | penalty points per step | desk value or 0 |
//! | `lambda` | penalty weight | 1 for penalty formulations, else 0 |
//! | `max_epochs` | ADAM steps | desk value |
//! | `eval_interval` | epochs between curve rows | 100 |
//! | `eval_count` | size of the fixed evaluation set | 10⁴ (5·10⁴ for d > 4) |
//! | `seed`, `eval_seed` | training and evaluation RNG seeds | 0, 24301 |
//! | `chunk` | points per tape | 512 |
//! | `target_error` | stop once ε falls to this value | none |
//! | `output` | directory for the curve and record files | `runs` |

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentId, Variant};
use crate::optimizer::{AdamParams, TrainOptions};

use super::catalogue::{default_architecture, desk_settings, min_dim, uses_penalty};

pub const DEFAULT_EVAL_SEED: u64 = 24301;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub method: Variant,
    pub d: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    pub k: usize,
    pub samples: usize,
    pub boundary_samples: usize,
    pub lambda: f64,
    pub max_epochs: usize,
    pub eval_interval: usize,
    pub eval_count: usize,
    pub seed: u64,
    pub eval_seed: u64,
    pub chunk: usize,
    pub target_error: Option<f64>,
    pub output: PathBuf,
}

/// Smallest evaluation set allowed in dimension `d`.
pub fn min_eval_count(d: usize) -> usize {
    if d <= 4 {
        10_000
    } else {
        50_000
    }
}

const KEYS: [&str; 18] = [
    "experiment",
    "method",
    "d",
    "width",
    "depth",
    "activation",
    "k",
    "samples",
    "boundary_samples",
    "lambda",
    "max_epochs",
    "eval_interval",
    "eval_count",
    "seed",
    "eval_seed",
    "chunk",
    "target_error",
    "output",
];

impl RunConfig {
    /// Desk defaults for an experiment, method and dimension.
    pub fn new(experiment: ExperimentId, method: Variant, d: usize) -> Self {
        let s = desk_settings(experiment, d);
        let (width, depth) = default_architecture(experiment, d);
        let penalty = uses_penalty(experiment, method);
        RunConfig {
            experiment,
            method,
            d,
            width,
            depth,
            activation: s.activation,
            k: s.k,
            samples: s.samples,
            boundary_samples: if penalty { s.boundary_samples } else { 0 },
            lambda: if penalty { 1.0 } else { 0.0 },
            max_epochs: s.epochs,
            eval_interval: 100,
            eval_count: min_eval_count(d),
            seed: 0,
            eval_seed: DEFAULT_EVAL_SEED,
            chunk: 512,
            target_error: None,
            output: PathBuf::from("runs"),
        }
    }

    /// Field-level validation against the catalogue.
    pub fn validate(&self) -> Result<()> {
        let id = self.experiment;
        if !id.methods().contains(&self.method) {
            let valid: Vec<&str> = id.methods().iter().map(|m| m.name()).collect();
            return Err(Error::config(
                "method",
                format!("{} is not run for {id}; valid: {}", self.method, valid.join(", ")),
            ));
        }
        if let Some(d) = id.fixed_dim() {
            if self.d != d {
                return Err(Error::config("d", format!("{id} is defined for d = {d} only")));
            }
        }
        if self.d < min_dim(id) {
            return Err(Error::config("d", format!("{id} needs d >= {}", min_dim(id))));
        }
        for (field, v) in [
            ("width", self.width),
            ("depth", self.depth),
            ("samples", self.samples),
            ("eval_interval", self.eval_interval),
            ("chunk", self.chunk),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        let periodic = matches!(
            id,
            ExperimentId::PeriodicSum | ExperimentId::PeriodicProduct | ExperimentId::Periodic1dHighFreq
        );
        if periodic && self.k == 0 {
            return Err(Error::config("k", "periodic problems need k >= 1"));
        }
        if self.eval_count < min_eval_count(self.d) {
            return Err(Error::config(
                "eval_count",
                format!("must be at least {} for d = {}", min_eval_count(self.d), self.d),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be a nonnegative finite number"));
        }
        if uses_penalty(id, self.method) {
            if self.lambda == 0.0 || self.boundary_samples == 0 {
                return Err(Error::config(
                    "lambda",
                    format!("{id}/{} is a penalty formulation: lambda and boundary_samples must be positive", self.method),
                ));
            }
        } else if self.lambda != 0.0 || self.boundary_samples != 0 {
            return Err(Error::config(
                "lambda",
                format!("{id}/{} enforces its conditions exactly: lambda and boundary_samples must be 0", self.method),
            ));
        }
        if let Some(t) = self.target_error {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("target_error", "must be a positive number"));
            }
        }
        Ok(())
    }

    pub fn train_options(&self, threads: usize) -> TrainOptions {
        TrainOptions {
            max_epochs: self.max_epochs,
            eval_interval: self.eval_interval,
            eval_count: self.eval_count,
            seed: self.seed,
            eval_seed: self.eval_seed,
            chunk: self.chunk,
            threads,
            target_error: self.target_error,
            freeze_samples: false,
            adam: AdamParams::default(),
        }
    }

    /// File-name stem shared by the curve and record files.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_d{}_n{}_m{}_{}_seed{}",
            self.experiment, self.method, self.d, self.width, self.depth, self.activation, self.seed
        )
    }

    /// Canonical text; [`RunConfig::parse`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// `(key, value)` pairs in canonical order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("experiment", self.experiment.to_string()),
            ("method", self.method.to_string()),
            ("d", self.d.to_string()),
            ("width", self.width.to_string()),
            ("depth", self.depth.to_string()),
            ("activation", self.activation.to_string()),
            ("k", self.k.to_string()),
            ("samples", self.samples.to_string()),
            ("boundary_samples", self.boundary_samples.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
            ("max_epochs", self.max_epochs.to_string()),
            ("eval_interval", self.eval_interval.to_string()),
            ("eval_count", self.eval_count.to_string()),
            ("seed", self.seed.to_string()),
            ("eval_seed", self.eval_seed.to_string()),
            ("chunk", self.chunk.to_string()),
        ];
        if let Some(t) = self.target_error {
            out.push(("target_error", format!("{t:?}")));
        }
        out.push(("output", self.output.display().to_string()));
        out
    }

    /// Parses configuration text; unknown keys, duplicates and malformed
    /// values are rejected with the offending field.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::config(k, format!("unknown key (valid keys: {})", KEYS.join(", "))));
            }
            if entries.iter().any(|(e, ..)| *e == k) {
                return Err(Error::config(k, format!("duplicate key on line {}", i + 1)));
            }
            entries.push((k, v, i + 1));
        }
        let get = |key: &str| entries.iter().find(|(k, ..)| k == key).map(|(_, v, _)| v.as_str());
        let experiment: ExperimentId = get("experiment")
            .ok_or_else(|| Error::config("experiment", format!("missing; valid ids: {}", ExperimentId::valid_names())))?
            .parse()?;
        let method: Variant = get("method").ok_or_else(|| Error::config("method", "missing"))?.parse()?;
        let d = match get("d") {
            Some(v) => parse_field::<usize>("d", v)?,
            None => experiment.fixed_dim().unwrap_or(2),
        };
        let mut cfg = RunConfig::new(experiment, method, d);
        for (k, v, _) in &entries {
            match k.as_str() {
                "experiment" | "method" | "d" => {}
                "width" => cfg.width = parse_field("width", v)?,
                "depth" => cfg.depth = parse_field("depth", v)?,
                "activation" => cfg.activation = v.parse().map_err(|e: String| Error::config("activation", e))?,
                "k" => cfg.k = parse_field("k", v)?,
                "samples" => cfg.samples = parse_field("samples", v)?,
                "boundary_samples" => cfg.boundary_samples = parse_field("boundary_samples", v)?,
                "lambda" => cfg.lambda = parse_field("lambda", v)?,
                "max_epochs" => cfg.max_epochs = parse_field("max_epochs", v)?,
                "eval_interval" => cfg.eval_interval = parse_field("eval_interval", v)?,
                "eval_count" => cfg.eval_count = parse_field("eval_count", v)?,
                "seed" => cfg.seed = parse_field("seed", v)?,
                "eval_seed" => cfg.eval_seed = parse_field("eval_seed", v)?,
                "chunk" => cfg.chunk = parse_field("chunk", v)?,
                "target_error" => cfg.target_error = Some(parse_field("target_error", v)?),
                "output" => cfg.output = PathBuf::from(v),
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_field<T: FromStr>(field: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::config(field, format!("cannot parse `{v}`: {e}")))
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunConfig::parse(s)
    }
}
