//! The ten result tables as batches of runs, with the printed values kept
//! verbatim next to ours.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentId, Variant};

use super::catalogue::{paper_settings, DESK_MAX_DIM};
use super::config::RunConfig;
use super::record::{fmt17, RunRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
}

impl TableId {
    pub const ALL: [TableId; 10] = [
        TableId::T1,
        TableId::T2,
        TableId::T3,
        TableId::T4,
        TableId::T5,
        TableId::T6,
        TableId::T7,
        TableId::T8,
        TableId::T9,
        TableId::T10,
    ];

    pub fn title(self) -> &'static str {
        match self {
            TableId::T1 => "Dirichlet problem on the unit ball, MIM and DGM",
            TableId::T2 => "Monge-Ampère equation on the unit ball",
            TableId::T3 => "Neumann problem on the unit cube, MIM and DGM with penalty",
            TableId::T4 => "Neumann problem on the unit ball, MIM and DGM",
            TableId::T5 => "Robin problem, sum/difference split",
            TableId::T6 => "Robin problem, augmented variable",
            TableId::T7 => "Mixed boundary conditions: slab, notched pentagon, annulus",
            TableId::T8 => "Periodic problems",
            TableId::T9 => "Parabolic equation",
            TableId::T10 => "Wave equation",
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", *self as usize + 1)
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::config("table", format!("unknown table `{s}`; valid: T1 to T10"))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    Desk,
    Paper,
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Budget::Desk => "desk",
            Budget::Paper => "paper",
        })
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "desk" => Ok(Budget::Desk),
            "paper" => Ok(Budget::Paper),
            other => Err(Error::config("budget", format!("unknown budget `{other}`; valid: desk, paper"))),
        }
    }
}

/// One printed row: an architecture and the value printed for each method.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub experiment: ExperimentId,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub activation: Activation,
    /// `(method, printed value)`; `-` marks an empty cell.
    pub paper: Vec<(Variant, &'static str)>,
}

/// A table: the methods it compares and its rows.
#[derive(Clone, Debug)]
pub struct Table {
    pub id: TableId,
    pub methods: Vec<Variant>,
    pub rows: Vec<TableRow>,
}

fn rows(
    experiment: ExperimentId,
    activation: Activation,
    methods: &[Variant],
    data: &[(usize, usize, usize, &[&'static str])],
) -> Vec<TableRow> {
    data.iter()
        .map(|&(d, n, m, vals)| TableRow {
            experiment,
            d,
            n,
            m,
            activation,
            paper: methods.iter().copied().zip(vals.iter().copied()).collect(),
        })
        .collect()
}

pub fn table(id: TableId) -> Table {
    use ExperimentId::*;
    use Variant::*;
    let requ = Activation::ReQu;
    let swish = Activation::Swish;
    let (methods, rows): (Vec<Variant>, Vec<TableRow>) = match id {
        TableId::T1 => (
            vec![Mim, Dgm],
            rows(
                DirichletEllipticBall,
                requ,
                &[Mim, Dgm],
                &[
                    (2, 10, 2, &["2.37 e-04", "3.26 e-04"]),
                    (4, 15, 2, &["5.85 e-04", "3.13 e-04"]),
                    (8, 20, 2, &["8.10 e-04", "3.22 e-04"]),
                    (16, 20, 2, &["8.63 e-04", "2.31 e-04"]),
                    (32, 35, 2, &["1.01 e-03", "1.53 e-04"]),
                    (64, 70, 2, &["5.85 e-04", "9.41 e-05"]),
                    (128, 144, 2, &["4.63 e-04", "-"]),
                    (256, 280, 2, &["5.19 e-04", "-"]),
                ],
            ),
        ),
        TableId::T2 => (
            vec![Mim],
            rows(
                MongeAmpere,
                requ,
                &[Mim],
                &[
                    (2, 10, 2, &["1.39 e-04"]),
                    (2, 20, 2, &["2.16 e-04"]),
                    (2, 30, 2, &["1.91 e-04"]),
                    (4, 20, 1, &["1.66 e-04"]),
                    (4, 20, 2, &["6.82 e-05"]),
                ],
            ),
        ),
        TableId::T3 => (
            vec![Mim, Dgm],
            rows(
                NeumannCube,
                requ,
                &[Mim, Dgm],
                &[
                    (2, 10, 2, &["2.86 e-05", "3.67 e-04"]),
                    (4, 15, 2, &["6.23 e-04", "1.37 e-03"]),
                    (8, 20, 2, &["1.70 e-03", "6.12 e-03"]),
                    (16, 25, 2, &["2.55 e-03", "7.18 e-03"]),
                    (32, 35, 2, &["3.08 e-03", "6.14 e-03"]),
                    (64, 70, 2, &["2.43 e-03", "-"]),
                    (128, 130, 2, &["3.61 e-03", "-"]),
                ],
            ),
        ),
        TableId::T4 => (
            vec![Mim, Dgm],
            rows(
                NeumannBall,
                requ,
                &[Mim, Dgm],
                &[
                    (2, 10, 3, &["5.19 e-04", "1.01 e-03"]),
                    (4, 15, 3, &["3.60 e-04", "6.53 e-04"]),
                    (8, 20, 3, &["5.84 e-04", "6.00 e-03"]),
                    (16, 25, 3, &["1.14 e-03", "9.97 e-03"]),
                ],
            ),
        ),
        TableId::T5 => (
            vec![Mim],
            rows(
                RobinSumDiff,
                requ,
                &[Mim],
                &[
                    (2, 5, 2, &["9.47 e-05"]),
                    (4, 10, 2, &["7.38 e-05"]),
                    (8, 20, 2, &["4.79 e-05"]),
                    (16, 20, 2, &["3.80 e-05"]),
                    (32, 40, 2, &["4.32 e-05"]),
                    (64, 80, 2, &["3.39 e-05"]),
                ],
            ),
        ),
        TableId::T6 => (
            vec![Mim],
            rows(
                RobinAugmented,
                requ,
                &[Mim],
                &[
                    (2, 5, 2, &["7.42 e-03"]),
                    (4, 10, 2, &["9.71 e-03"]),
                    (8, 20, 2, &["1.30 e-02"]),
                    (16, 40, 2, &["2.82 e-02"]),
                ],
            ),
        ),
        TableId::T7 => {
            let mut r = rows(
                MixedSlab,
                requ,
                &[Mim],
                &[
                    (2, 5, 2, &["1.74 e-03"]),
                    (4, 10, 2, &["3.87 e-03"]),
                    (8, 15, 2, &["1.24 e-02"]),
                    (16, 24, 2, &["1.91 e-02"]),
                ],
            );
            r.extend(rows(
                MixedComplex2d,
                requ,
                &[Mim],
                &[
                    (2, 5, 2, &["5.71 e-03"]),
                    (4, 10, 2, &["9.33 e-03"]),
                    (8, 20, 2, &["1.35 e-02"]),
                    (16, 40, 2, &["1.77 e-02"]),
                ],
            ));
            r.extend(rows(
                MixedAnnulus,
                requ,
                &[Mim],
                &[
                    (2, 10, 2, &["2.32 e-04"]),
                    (4, 15, 2, &["8.62 e-04"]),
                    (8, 20, 2, &["2.94 e-03"]),
                    (16, 25, 2, &["3.26 e-03"]),
                ],
            ));
            (vec![Mim], r)
        }
        TableId::T8 => {
            let mut r = rows(
                PeriodicSum,
                swish,
                &[Mim],
                &[
                    (2, 8, 3, &["1.514e-03"]),
                    (4, 16, 3, &["6.593e-03"]),
                    (8, 24, 3, &["1.608e-02"]),
                    (16, 32, 3, &["1.658e-02"]),
                ],
            );
            r.extend(rows(
                PeriodicProduct,
                swish,
                &[Mim],
                &[
                    (2, 8, 3, &["2.578e-03"]),
                    (4, 8, 3, &["2.747e-03"]),
                    (8, 16, 3, &["2.965e-03"]),
                    (16, 24, 3, &["3.885e-03"]),
                ],
            ));
            r.extend(rows(Periodic1dHighFreq, swish, &[Mim], &[(1, 20, 3, &["0.0043"])]));
            (vec![Mim], r)
        }
        TableId::T9 => (
            vec![Mim1, Mim2, Dgm],
            rows(
                Parabolic,
                swish,
                &[Mim1, Mim2, Dgm],
                &[
                    (2, 4, 3, &["1.92 e-02", "4.27 e-02", "5.16 e-04"]),
                    (3, 8, 3, &["1.42 e-02", "3.83 e-02", "1.74 e-04"]),
                    (5, 8, 3, &["3.48 e-02", "3.22 e-02", "1.49 e-03"]),
                    (10, 20, 3, &["8.17 e-02", "1.32 e-01", "4.70e-03"]),
                    (12, 20, 3, &["7.47 e-02", "2.20 e-01", "5.06e-02"]),
                ],
            ),
        ),
        TableId::T10 => (vec![Dgm, Mim1, Mim2], wave_rows()),
    };
    Table { id, methods, rows }
}

fn wave_rows() -> Vec<TableRow> {
    use Activation::{ReCu, ReQu};
    // (d, n, σ, [DGM, MIM1, MIM2] at m = 2, the same at m = 3)
    let data: [(usize, usize, Activation, [&str; 3], [&str; 3]); 12] = [
        (2, 10, ReQu, ["1.25 e-01", "5.20 e-02", "7.02 e-02"], ["7.28 e-02", "6.33 e-03", "2.90 e-03"]),
        (2, 10, ReCu, ["1.79 e-02", "1.23 e-02", "6.89 e-03"], ["2.39 e-02", "3.84 e-03", "7.20 e-03"]),
        (2, 20, ReQu, ["4.58 e-02", "4.58 e-03", "3.71 e-03"], ["1.68 e-02", "2.21 e-03", "2.47 e-03"]),
        (2, 20, ReCu, ["1.87 e-02", "1.19 e-03", "3.19 e-03"], ["1.14 e-02", "1.13 e-03", "2.62 e-03"]),
        (2, 40, ReQu, ["2.77 e-02", "1.67 e-03", "2.77 e-03"], ["1.24 e-02", "1.42 e-03", "2.23 e-03"]),
        (2, 40, ReCu, ["4.91 e-03", "1.33 e-03", "1.67 e-03"], ["3.11 e-03", "1.22 e-03", "1.83 e-03"]),
        (3, 10, ReQu, ["2.05 e-01", "2.88 e-02", "1.64 e-02"], ["1.86 e-01", "5.85 e-02", "6.21 e-03"]),
        (3, 10, ReCu, ["1.34 e-01", "5.13 e-02", "2.34 e-02"], ["1.30 e-01", "3.17 e-02", "1.47 e-02"]),
        (3, 20, ReQu, ["1.54 e-01", "4.30 e-02", "1.57 e-02"], ["1.01 e-01", "4.03 e-02", "9.32 e-03"]),
        (3, 20, ReCu, ["5.66 e-02", "2.23 e-02", "2.02 e-02"], ["5.63 e-02", "1.62 e-02", "1.18 e-02"]),
        (3, 40, ReQu, ["5.98 e-02", "3.47 e-02", "1.02 e-02"], ["7.34 e-02", "4.34 e-03", "4.41 e-03"]),
        (3, 40, ReCu, ["1.74 e-02", "4.01 e-03", "3.27 e-03"], ["2.15 e-02", "2.80 e-03", "6.11 e-03"]),
    ];
    let methods = [Variant::Dgm, Variant::Mim1, Variant::Mim2];
    let mut out = Vec::new();
    for (d, n, act, m2, m3) in data {
        for (m, vals) in [(2, m2), (3, m3)] {
            out.push(TableRow {
                experiment: ExperimentId::Wave,
                d,
                n,
                m,
                activation: act,
                paper: methods.into_iter().zip(vals).collect(),
            });
        }
    }
    out
}

/// Options of a table run.
#[derive(Clone, Debug)]
pub struct TableOptions {
    pub budget: Budget,
    pub out: PathBuf,
    /// Rows with larger `d` are skipped.
    pub max_dim: usize,
    /// Further cap on epochs (mostly for smoke runs).
    pub max_epochs: Option<usize>,
    pub seed: u64,
    pub threads: usize,
}

impl TableOptions {
    pub fn new(budget: Budget, out: impl Into<PathBuf>) -> Self {
        TableOptions {
            budget,
            out: out.into(),
            max_dim: match budget {
                Budget::Desk => DESK_MAX_DIM,
                Budget::Paper => usize::MAX,
            },
            max_epochs: None,
            seed: 0,
            threads: crate::optimizer::threads_from_env(),
        }
    }
}

/// Configuration of one cell under a budget.
pub fn cell_config(row: &TableRow, method: Variant, opts: &TableOptions) -> RunConfig {
    let mut cfg = RunConfig::new(row.experiment, method, row.d);
    cfg.width = row.n;
    cfg.depth = row.m;
    cfg.activation = row.activation;
    cfg.seed = opts.seed;
    if opts.budget == Budget::Paper {
        let p = paper_settings(row.experiment, row.d);
        cfg.samples = p.samples;
        cfg.max_epochs = p.epochs;
        if cfg.boundary_samples > 0 {
            cfg.boundary_samples = p.boundary_samples;
        }
    }
    if let Some(e) = opts.max_epochs {
        cfg.max_epochs = cfg.max_epochs.min(e);
    }
    cfg.output = opts.out.join("runs");
    cfg
}

/// Result of one cell.
#[derive(Clone, Debug)]
pub enum CellOutcome {
    Done(RunRecord),
    Failed(String),
}

impl CellOutcome {
    fn status(&self) -> String {
        match self {
            CellOutcome::Done(r) if r.diverged() => "diverged".into(),
            CellOutcome::Done(_) => "ok".into(),
            CellOutcome::Failed(m) => format!("error: {}", m.replace(',', ";")),
        }
    }

    fn error(&self) -> String {
        match self {
            CellOutcome::Done(r) => fmt17(r.final_error),
            CellOutcome::Failed(_) => String::new(),
        }
    }
}

/// Rows kept under the options, in table order.
pub fn selected_rows(t: &Table, opts: &TableOptions) -> Vec<TableRow> {
    t.rows.iter().filter(|r| r.d <= opts.max_dim).cloned().collect()
}

/// A stored run whose configuration matches `cfg` exactly.
pub fn resume(cfg: &RunConfig) -> Option<RunRecord> {
    let probe = RunRecord {
        config: cfg.clone(),
        rows: Vec::new(),
        status: crate::optimizer::Status::Completed,
        epochs_run: 0,
        final_error: 0.0,
        wall_clock_secs: 0.0,
        params: Vec::new(),
        version: String::new(),
    };
    let rec = RunRecord::read(&probe.record_path(&cfg.output)).ok()?;
    (rec.config == *cfg).then_some(rec)
}

/// Column header of the aggregated file.
pub fn header(t: &Table) -> String {
    let mut h = String::from("experiment,d,n,m,activation");
    for m in &t.methods {
        let _ = write!(h, ",{m},{m}_epochs,{m}_status,{m}_paper");
    }
    h
}

/// Runs (or resumes) every selected cell and writes `<out>/<id>_<budget>.csv`.
/// `progress` receives one line per finished cell.
pub fn run_table(id: TableId, opts: &TableOptions, mut progress: impl FnMut(&str)) -> Result<(PathBuf, String)> {
    let t = table(id);
    let mut text = format!("{}\n", header(&t));
    for row in selected_rows(&t, opts) {
        let _ = write!(text, "{},{},{},{},{}", row.experiment, row.d, row.n, row.m, row.activation);
        for &method in &t.methods {
            let paper = row.paper.iter().find(|p| p.0 == method).map_or("-", |p| p.1);
            let cfg = cell_config(&row, method, opts);
            let outcome = match resume(&cfg) {
                Some(rec) => CellOutcome::Done(rec),
                None => match super::run_config(&cfg, opts.threads) {
                    Ok(rec) => CellOutcome::Done(rec),
                    Err(e) => CellOutcome::Failed(e.to_string()),
                },
            };
            let epochs = match &outcome {
                CellOutcome::Done(r) => r.epochs_run.to_string(),
                CellOutcome::Failed(_) => String::new(),
            };
            progress(&format!(
                "{id} {} d={} n={} m={} {} {method}: {} {} (paper {paper})",
                row.experiment,
                row.d,
                row.n,
                row.m,
                row.activation,
                outcome.status(),
                outcome.error()
            ));
            let _ = write!(text, ",{},{epochs},{},{paper}", outcome.error(), outcome.status());
        }
        text.push('\n');
    }
    fs::create_dir_all(&opts.out)?;
    let path = table_path(&opts.out, id, opts.budget);
    fs::write(&path, &text)?;
    Ok((path, text))
}

pub fn table_path(dir: &Path, id: TableId, budget: Budget) -> PathBuf {
    dir.join(format!("{id}_{budget}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::catalogue::architecture_rows;

    #[test]
    fn every_table_row_is_a_catalogue_row() {
        for id in TableId::ALL {
            let t = table(id);
            assert!(!t.rows.is_empty());
            for r in &t.rows {
                assert_eq!(r.paper.len(), t.methods.len(), "{id}");
                let cat = architecture_rows(r.experiment);
                if r.experiment != ExperimentId::Wave {
                    assert!(cat.contains(&(r.d, r.n, r.m)), "{id} {:?}", (r.d, r.n, r.m));
                }
            }
        }
    }

    #[test]
    fn desk_rows_of_t1() {
        let t = table(TableId::T1);
        let mut o = TableOptions::new(Budget::Desk, "x");
        assert_eq!(selected_rows(&t, &o).len(), 4);
        o.max_dim = 4;
        let r = selected_rows(&t, &o);
        assert_eq!(r.iter().map(|r| r.d).collect::<Vec<_>>(), vec![2, 4]);
        assert_eq!(header(&t), "experiment,d,n,m,activation,mim,mim_epochs,mim_status,mim_paper,dgm,dgm_epochs,dgm_status,dgm_paper");
    }

    #[test]
    fn printed_values_are_verbatim() {
        let t5 = table(TableId::T5);
        assert_eq!(t5.rows[0].paper, vec![(Variant::Mim, "9.47 e-05")]);
        let t2 = table(TableId::T2);
        assert_eq!((t2.rows[0].d, t2.rows[0].n), (2, 10));
        assert_eq!(t2.rows[0].paper[0].1, "1.39 e-04");
        let t10 = table(TableId::T10);
        assert_eq!(t10.rows.len(), 24);
        let r = t10.rows.iter().find(|r| r.d == 2 && r.n == 20 && r.m == 3 && r.activation == Activation::ReQu).unwrap();
        assert_eq!(r.paper, vec![(Variant::Dgm, "1.68 e-02"), (Variant::Mim1, "2.21 e-03"), (Variant::Mim2, "2.47 e-03")]);
    }

    #[test]
    fn budgets_differ_in_scale() {
        let t = table(TableId::T3);
        let row = &t.rows[0];
        let desk = cell_config(row, Variant::Dgm, &TableOptions::new(Budget::Desk, "o"));
        let paper = cell_config(row, Variant::Dgm, &TableOptions::new(Budget::Paper, "o"));
        assert_eq!(desk.max_epochs, 10_000);
        assert_eq!(paper.boundary_samples, 4_000);
        desk.validate().unwrap();
        paper.validate().unwrap();
        let p9 = cell_config(&table(TableId::T9).rows[4], Variant::Dgm, &TableOptions::new(Budget::Paper, "o"));
        assert_eq!(p9.max_epochs, 200_000);
        let d9 = cell_config(&table(TableId::T9).rows[4], Variant::Dgm, &TableOptions::new(Budget::Desk, "o"));
        assert_eq!((d9.max_epochs, d9.samples), (20_000, 2_000));
    }

    #[test]
    fn ids_parse() {
        assert_eq!("t10".parse::<TableId>().unwrap(), TableId::T10);
        assert_eq!(TableId::T7.to_string(), "T7");
        assert!("T11".parse::<TableId>().is_err());
        assert_eq!("paper".parse::<Budget>().unwrap(), Budget::Paper);
    }
}
