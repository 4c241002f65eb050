//! Curve and record files.
//!
//! The curve file is CSV with header `epoch,loss,rel_l2`; floats are written
//! with 17 significant digits. Lines starting with `#` are markers (a run that
//! diverged ends with `# diverged at epoch N: reason`).
//!
//! The record file is `key = value` text:
//!
//! ```text
//! version = <library version>
//! status = completed | reached_target | diverged
//! diverged_epoch = <epoch>            (diverged runs only)
//! diverged_reason = <message>         (diverged runs only)
//! epochs_run = <steps taken>
//! final_error = <ε of the stored parameters>
//! wall_clock_secs = <seconds>
//! train_seed = <seed of the sampling stream>
//! init_seed = <seed of the initialisation stream>
//! eval_seed = <seed of the evaluation set>
//! param_count = <total parameters>
//! rows = <curve rows>
//! config.<key> = <value>              (one line per configuration key)
//! params.<block> = <comma-separated values>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::optimizer::{init_seed, CurveRow, Status, TrainOutcome};

use super::config::RunConfig;

pub const CURVE_HEADER: &str = "epoch,loss,rel_l2";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    pub rows: Vec<CurveRow>,
    pub status: Status,
    pub epochs_run: usize,
    pub final_error: f64,
    pub wall_clock_secs: f64,
    pub params: Vec<Vec<f64>>,
    pub version: String,
}

impl RunRecord {
    pub fn from_outcome(config: &RunConfig, out: TrainOutcome) -> Self {
        RunRecord {
            config: config.clone(),
            rows: out.rows,
            status: out.status,
            epochs_run: out.epochs_run,
            final_error: out.final_error,
            wall_clock_secs: out.elapsed_secs,
            params: out.params,
            version: VERSION.to_string(),
        }
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, Status::Diverged { .. })
    }

    pub fn curve_text(&self) -> String {
        let mut s = format!("{CURVE_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.epoch, fmt17(r.loss), fmt17(r.rel_l2));
        }
        if let Status::Diverged { epoch, reason } = &self.status {
            let _ = writeln!(s, "# diverged at epoch {epoch}: {reason}");
        }
        s
    }

    pub fn record_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("version", self.version.clone());
        match &self.status {
            Status::Completed => kv("status", "completed".into()),
            Status::ReachedTarget => kv("status", "reached_target".into()),
            Status::Diverged { epoch, reason } => {
                kv("status", "diverged".into());
                kv("diverged_epoch", epoch.to_string());
                kv("diverged_reason", reason.replace('\n', " "));
            }
        }
        kv("epochs_run", self.epochs_run.to_string());
        kv("final_error", fmt17(self.final_error));
        kv("wall_clock_secs", format!("{:.3}", self.wall_clock_secs));
        kv("train_seed", self.config.seed.to_string());
        kv("init_seed", init_seed(self.config.seed).to_string());
        kv("eval_seed", self.config.eval_seed.to_string());
        kv("param_count", self.params.iter().map(Vec::len).sum::<usize>().to_string());
        kv("rows", self.rows.len().to_string());
        for (k, v) in self.config.pairs() {
            kv(&format!("config.{k}"), v);
        }
        for (i, p) in self.params.iter().enumerate() {
            let vals: Vec<String> = p.iter().map(|&v| fmt17(v)).collect();
            kv(&format!("params.{i}"), vals.join(","));
        }
        s
    }

    pub fn curve_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.curve.csv", self.config.stem()))
    }

    pub fn record_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.record.txt", self.config.stem()))
    }

    /// Writes both files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let (c, r) = (self.curve_path(dir), self.record_path(dir));
        fs::write(&c, self.curve_text())?;
        fs::write(&r, self.record_text())?;
        Ok((c, r))
    }

    /// Reads a record file back (curve rows come from the curve file next to
    /// it when present).
    pub fn read(record_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(record_path)?;
        let mut cfg_lines = String::new();
        let mut params: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut fields = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let Some((k, v)) = line.split_once(" = ").or_else(|| line.split_once('=')) else {
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if let Some(key) = k.strip_prefix("config.") {
                let _ = writeln!(cfg_lines, "{key} = {v}");
            } else if let Some(idx) = k.strip_prefix("params.") {
                let idx: usize = idx.parse().map_err(|_| parse_err(i, "bad parameter block index"))?;
                let vals = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|x| x.parse::<f64>().map_err(|_| parse_err(i, "bad parameter value")))
                        .collect::<Result<Vec<_>>>()?
                };
                params.push((idx, vals));
            } else {
                fields.insert(k.to_string(), (i, v.to_string()));
            }
        }
        let get = |k: &str| fields.get(k).map(|(_, v)| v.as_str()).ok_or_else(|| parse_err(0, &format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse::<f64>().map_err(|_| parse_err(fields[k].0, &format!("bad `{k}`"))) };
        let status = match get("status")? {
            "completed" => Status::Completed,
            "reached_target" => Status::ReachedTarget,
            "diverged" => Status::Diverged {
                epoch: num("diverged_epoch")? as usize,
                reason: get("diverged_reason").unwrap_or("").to_string(),
            },
            other => return Err(parse_err(fields["status"].0, &format!("unknown status `{other}`"))),
        };
        params.sort_by_key(|p| p.0);
        let config = RunConfig::parse(&cfg_lines)?;
        let mut rec = RunRecord {
            config,
            rows: Vec::new(),
            status,
            epochs_run: num("epochs_run")? as usize,
            final_error: num("final_error")?,
            wall_clock_secs: num("wall_clock_secs")?,
            params: params.into_iter().map(|p| p.1).collect(),
            version: get("version")?.to_string(),
        };
        let curve = record_path.with_file_name(
            record_path
                .file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.replace(".record.txt", ".curve.csv"))
                .unwrap_or_default(),
        );
        if curve.is_file() {
            rec.rows = parse_curve(&fs::read_to_string(curve)?)?;
        }
        Ok(rec)
    }
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line: line + 1,
        message: message.to_string(),
    }
}

/// Parses curve CSV text, skipping marker lines.
pub fn parse_curve(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CURVE_HEADER => {}
        _ => return Err(parse_err(0, &format!("expected header `{CURVE_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(parse_err(i, "expected three columns"));
        }
        let bad = |_| parse_err(i, "bad number");
        rows.push(CurveRow {
            epoch: parts[0].parse().map_err(|_| parse_err(i, "bad epoch"))?,
            loss: parts[1].parse().map_err(bad)?,
            rel_l2: parts[2].parse().map_err(bad)?,
        });
    }
    Ok(rows)
}
