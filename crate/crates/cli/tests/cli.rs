use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[geometry]
kind = "block-power"
omega = 1.0

[task]
k = 4
d = 6
x_bound = 1.0
rho_star = 0.1

[loss]
rho = 1.0

[run]
n = 200
replicates = 3
base_seed = 11
n_mc = 2000
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("cli")
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn msmd(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msmd"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn run_writes_csv_and_is_reproducible() {
    let dir = scratch("run");
    let cfg = write_config(&dir, SMALL);
    let a = msmd(&["run", "--check"], &cfg, &dir.join("a"));
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let b = msmd(&["run", "--workers", "1"], &cfg, &dir.join("b"));
    assert_eq!(b.status.code(), Some(0));
    let csv_a = fs::read(dir.join("a/results.csv")).unwrap();
    let csv_b = fs::read(dir.join("b/results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,n,geometry,replicate,seed,empirical_excess,std_error,bound_eq2,bound_rate,audit_min_residual"
    );
    assert_eq!(lines.count(), 3);
    let json: String = fs::read_to_string(dir.join("a/report.json")).unwrap();
    assert!(json.contains("\"summary\""));
}

#[test]
fn seed_override_changes_results() {
    let dir = scratch("seed");
    let cfg = write_config(&dir, SMALL);
    assert_eq!(msmd(&["run"], &cfg, &dir.join("a")).status.code(), Some(0));
    assert_eq!(
        msmd(&["run", "--seed", "12"], &cfg, &dir.join("b"))
            .status
            .code(),
        Some(0)
    );
    let a = fs::read(dir.join("a/results.csv")).unwrap();
    let b = fs::read(dir.join("b/results.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn bad_configs_exit_2() {
    let dir = scratch("bad");
    let unknown = write_config(
        &dir,
        &SMALL.replace("n_mc = 2000", "n_mc = 2000\ncolour = 1"),
    );
    assert_eq!(
        msmd(&["run"], &unknown, &dir.join("o")).status.code(),
        Some(2)
    );
    let negative = write_config(&dir, &SMALL.replace("rho = 1.0", "rho = -1.0"));
    assert_eq!(
        msmd(&["run"], &negative, &dir.join("o")).status.code(),
        Some(2)
    );
    let missing = dir.join("nope.toml");
    assert_eq!(
        msmd(&["run"], &missing, &dir.join("o")).status.code(),
        Some(2)
    );
}

#[test]
fn short_k_grid_exits_2() {
    let dir = scratch("grid");
    let cfg = write_config(&dir, SMALL);
    let out = msmd(&["sweep-k", "--k-grid", "4,8"], &cfg, &dir.join("o"));
    assert_eq!(out.status.code(), Some(2));
    let out = msmd(&["sweep-k", "--k-grid", "4,8,8"], &cfg, &dir.join("o"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_reports_slope() {
    let dir = scratch("sweep");
    let cfg = write_config(&dir, SMALL);
    let out = msmd(&["sweep-k", "--k-grid", "2,4,8"], &cfg, &dir.join("o"));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.join("o/results.csv")).unwrap();
    let ks: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ks, ["2", "2", "2", "4", "4", "4", "8", "8", "8"]);
}

#[test]
fn bounds_needs_no_sampling_and_is_seed_free() {
    let dir = scratch("bounds");
    let cfg = write_config(&dir, SMALL);
    let a = msmd(&["bounds"], &cfg, &dir.join("a"));
    let b = msmd(&["bounds", "--seed", "999"], &cfg, &dir.join("b"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("eq2_bound")));
    assert!(dir.join("a/report.json").exists());
}

#[test]
fn audit_passes_check() {
    let dir = scratch("audit");
    let cfg = write_config(&dir, SMALL);
    let out = msmd(&["audit", "--check"], &cfg, &dir.join("o"));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("worst audit residual"));
    let csv = fs::read_to_string(dir.join("o/results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn missing_config_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_msmd"))
        .arg("bounds")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
