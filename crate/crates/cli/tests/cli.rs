use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fkjump"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_config(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg(sub).arg("--config").arg(config).arg("--out").arg(out).args(extra);
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn ts1_exact_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("exact", &configs().join("ts1.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("eta.csv"));
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][2..], [1.0, 0.0]);
    assert!((rows[1][2] - 0.7).abs() < 1e-15 && (rows[1][3] - 0.3).abs() < 1e-15);
    for name in ["semigroup.csv", "variance_constant.csv", "mesh_flow_m1.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn unit_potential_gives_chain_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
type = "discrete"
initial_law = [1.0, 0.0]
horizon = 4
kernels = [[[0.7, 0.3], [0.4, 0.6]]]
potentials = [[1.0, 1.0]]
"#,
    );
    let o = run_config("exact", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("out/eta.csv"));
    let mut p = [1.0, 0.0];
    for row in &rows {
        assert!((row[1] - 1.0).abs() < 1e-14, "gamma(1) = {}", row[1]);
        assert!((row[2] - p[0]).abs() < 1e-14 && (row[3] - p[1]).abs() < 1e-14);
        p = [0.7 * p[0] + 0.4 * p[1], 0.3 * p[0] + 0.6 * p[1]];
    }
}

#[test]
fn ct1_exact_flow_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("exact", &configs().join("ct1.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden = read_rows(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ct1_ct_flow.csv"));
    let got = read_rows(&dir.path().join("ct_flow.csv"));
    assert_eq!(got.len(), golden.len());
    for (g, e) in got.iter().zip(&golden) {
        for (a, b) in g.iter().zip(e) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn malformed_kernel_row_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 1
[model]
type = "discrete"
initial_law = [0.5, 0.5]
horizon = 3
kernels = [[[0.5, 0.5], [0.5, 0.4]]]
potentials = [[1.0, 2.0]]
"#,
    );
    let o = run_config("exact", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("model.kernels[0]") && err.contains("row 1"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write_config(dir.path(), "[model]\nzoo = \"ts1\"\n[particle]\nn = [10]\nm = [1]\n");
    let o = run_config("particle", &no_seed, &dir.path().join("a"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let empty_m = write_config(dir.path(), "seed = 1\n[model]\nzoo = \"ct1\"\n[particle]\nn = [10]\nm = []\n");
    let o = run_config("sweep", &empty_m, &dir.path().join("b"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("particle.m"), "{}", stderr(&o));

    let unknown = write_config(dir.path(), "seed = 1\nbogus = 2\n");
    assert_eq!(run_config("exact", &unknown, &dir.path().join("c"), &[]).status.code(), Some(1));

    let ok = configs().join("ts1.toml");
    assert_eq!(run_config("sweep", &ok, &dir.path().join("d"), &["--suite", "nope"]).status.code(), Some(1));
    assert_eq!(run_config("exact", &ok, &dir.path().join("e"), &["--threads", "0"]).status.code(), Some(1));
    assert_eq!(run(&["exact"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_csv_layout_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ts1.toml");
    let strip = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let a = run_config("sweep", &cfg, &dir.path().join("a"), &["--threads", "1"]);
    let b = run_config("sweep", &cfg, &dir.path().join("b"), &["--threads", "2"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let path = dir.path().join("a/sweep.csv");
    assert_eq!(first_line(&path), "N,m,step,f_id,mean,var,exact,bias,se,seed,wall_ms");
    assert_eq!(strip(&path), strip(&dir.path().join("b/sweep.csv")));

    let c = run_config("sweep", &cfg, &dir.path().join("c"), &["--seed", "8"]);
    assert_eq!(c.status.code(), Some(0));
    assert_ne!(strip(&path), strip(&dir.path().join("c/sweep.csv")));
}

#[test]
fn particle_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("custom-discrete.toml");
    assert_eq!(run_config("particle", &cfg, &dir.path().join("a"), &[]).status.code(), Some(0));
    assert_eq!(run_config("particle", &cfg, &dir.path().join("b"), &[]).status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a/particle.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/particle.csv")).unwrap());
}

#[test]
fn ctsim_writes_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 4
[model]
zoo = "ct1"
[ctsim]
interaction = "case1"
shift = true
mode = "individual"
n = 200
replications = 3
record_at = [1.0, 2.0]
log_events = true
"#,
    );
    let o = run_config("ctsim", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let events = dir.path().join("out/events.csv");
    assert_eq!(first_line(&events), "time,particle,kind,from,to");
    let text = std::fs::read_to_string(&events).unwrap();
    let times: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(!times.is_empty() && times.windows(2).all(|w| w[0] <= w[1]));
    assert!(times.iter().all(|&t| (0.0..=2.0).contains(&t)));
    let summary = read_rows(&dir.path().join("out/ctsim.csv"));
    assert_eq!(summary.len(), 2 * 3);
    assert_eq!(first_line(&dir.path().join("out/ctsim.csv")), "N,m,step,f_id,mean,var,exact,bias,se,seed,wall_ms");
}

#[test]
fn variance_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("sweep", &configs().join("ts1-variance.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert_eq!(
        first_line(&dir.path().join("slopes.csv")),
        "suite,series,points,slope,intercept,r_squared,target,tol,passed"
    );
}

#[test]
fn deterministic_rate_suites_pass() {
    for name in ["ct1-bias-deterministic.toml", "ct1-recycling-gap.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run_config("sweep", &configs().join(name), dir.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn impossible_slope_target_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
suite = "bias-vs-m-deterministic"
[model]
zoo = "ct1"
[particle]
m = [4, 8, 16, 32]
time = 1.0
[slope]
target = -2.0
tol = 0.1
"#,
    );
    let o = run_config("sweep", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = run(&["verify", "--suite", "1,c3", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}{}", stderr(&o));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2, "{stdout}");
    assert!(out.join("verify.csv").exists());
    assert_eq!(run(&["verify", "--suite", "13"]).status.code(), Some(1));
}
