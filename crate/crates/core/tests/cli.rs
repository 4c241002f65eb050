//! The `mimpde` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mimpde(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimpde"))
        .args(args)
        .current_dir(cwd)
        .env("MIMPDE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const MINIMAL: &str = "experiment = dirichlet-elliptic-ball\nmethod = mim\nd = 2\nsamples = 200\nmax_epochs = 20\neval_interval = 5\n";

#[test]
fn run_writes_curve_and_record() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.cfg"), format!("{MINIMAL}output = out_a\n")).unwrap();
    fs::write(dir.path().join("b.cfg"), format!("{MINIMAL}output = out_b\n")).unwrap();
    let a = mimpde(&["run", "a.cfg"], dir.path());
    assert!(a.status.success(), "{}", text(&a.stderr));
    let b = mimpde(&["run", "b.cfg"], dir.path());
    assert!(b.status.success());
    let stem = "dirichlet-elliptic-ball_mim_d2_n10_m2_requ_seed0";
    let ca = fs::read_to_string(dir.path().join(format!("out_a/{stem}.curve.csv"))).unwrap();
    let cb = fs::read_to_string(dir.path().join(format!("out_b/{stem}.curve.csv"))).unwrap();
    assert_eq!(ca.lines().next(), Some("epoch,loss,rel_l2"));
    assert_eq!(ca.lines().count(), 6);
    assert_eq!(ca, cb);
    let rec = fs::read_to_string(dir.path().join(format!("out_a/{stem}.record.txt"))).unwrap();
    assert!(rec.contains("status = completed"));
    assert!(rec.contains("config.experiment = dirichlet-elliptic-ball"));
}

#[test]
fn unknown_experiment_lists_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "experiment = heat-equation\nmethod = mim\n").unwrap();
    let o = mimpde(&["run", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("heat-equation"));
    assert!(err.contains("monge-ampere") && err.contains("periodic-1d-highfreq"), "{err}");
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "experiment = monge-ampere\nmethod = dgm\n").unwrap();
    let o = mimpde(&["run", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("`method`"), "{}", text(&o.stderr));
}

#[test]
fn diverged_run_keeps_marked_files() {
    let dir = tempfile::tempdir().unwrap();
    // an absurd penalty weight overflows the loss within a few steps
    let cfg = "experiment = neumann-cube\nmethod = dgm\nd = 2\nsamples = 100\nboundary_samples = 50\nlambda = 1e308\nmax_epochs = 50\neval_interval = 10\noutput = out\n";
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    let o = mimpde(&["run", "c.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}{}", text(&o.stdout), text(&o.stderr));
    let stem = "neumann-cube_dgm_d2_n10_m2_requ_seed0";
    let curve = fs::read_to_string(dir.path().join(format!("out/{stem}.curve.csv"))).unwrap();
    assert!(curve.contains("# diverged at epoch"), "{curve}");
    let rec = fs::read_to_string(dir.path().join(format!("out/{stem}.record.txt"))).unwrap();
    assert!(rec.contains("status = diverged"));
}

#[test]
fn verify_passes_on_a_pristine_build() {
    let dir = tempfile::tempdir().unwrap();
    let o = mimpde(&["verify"], dir.path());
    let out = text(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS ")).count(), 6, "{out}");
}

#[test]
fn table_runs_rows_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["table", "T1", "--budget", "desk", "--out", "t", "--max-dim", "4", "--max-epochs", "2"];
    let o = mimpde(&args, dir.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("t/T1_desk.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[0].starts_with("experiment,d,n,m,activation,mim,"));
    assert!(lines[1].starts_with("dirichlet-elliptic-ball,2,10,2,requ,"));
    assert!(lines[1].ends_with(",3.26 e-04"));
    assert!(lines[1].contains(",2.37 e-04,"));
    assert!(lines[2].starts_with("dirichlet-elliptic-ball,4,15,2,"));
    // a second invocation reuses the stored runs
    let again = mimpde(&args, dir.path());
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("t/T1_desk.csv")).unwrap(), csv);
}

#[test]
fn list_and_bad_table_id() {
    let dir = tempfile::tempdir().unwrap();
    let o = mimpde(&["list"], dir.path());
    assert!(o.status.success());
    let out = text(&o.stdout);
    assert!(out.contains("wave: dgm mim1 mim2"), "{out}");
    assert!(out.contains("T10: Wave equation"));
    let bad = mimpde(&["table", "T12"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}
