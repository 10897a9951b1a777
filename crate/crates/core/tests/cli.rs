use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn gcts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcts")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a plain CSV file with no quoted fields.
fn rows(file: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(file)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn two_area_args(extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "--stitch".to_string(),
        data("configs/two_area.toml").to_str().unwrap().to_string(),
        "--bids".to_string(),
        data("configs/two_area_bids.toml").to_str().unwrap().to_string(),
        "--scenario".to_string(),
        data("configs/scenario.toml").to_str().unwrap().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(gcts(&["--help"]).status.code(), Some(0));
    let out = gcts(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bad_arguments_exit_with_config_code() {
    assert_eq!(gcts(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gcts(&["solve", "--stitch", "x.toml"]).status.code(), Some(1));
}

#[test]
fn missing_input_file_exits_with_config_code() {
    let out = gcts(&["validate", "--stitch", "/nonexistent/stitch.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/stitch.toml"));
}

#[test]
fn validate_reports_network_size() {
    let args = two_area_args(&[]);
    let mut full = vec!["validate"];
    full.extend(args.iter().map(String::as_str));
    let out = gcts(&full);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("44 buses"), "{text}");
    assert!(text.contains("2 tie-lines"), "{text}");
    assert!(text.contains("8 bids"), "{text}");
}

const SHORT_CASE: &str = "function mpc = short
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	0	1	1.1	0.9;
	2	1	50	0	0	0	1	1	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	0	0	1	100	1	20	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.02	10	0;
];
";

#[test]
fn infeasible_dispatch_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("short.m"), SHORT_CASE).unwrap();
    let stitch = dir.path().join("stitch.toml");
    std::fs::write(
        &stitch,
        "format_version = 1
[[areas]]
id = 1
case = \"short.m\"
offset = 0
[[areas]]
id = 2
case = \"short.m\"
offset = 2
[[tie_lines]]
area_a = 1
bus_a = 2
area_b = 2
bus_b = 2
",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = gcts(&["solve", "--stitch", path(&stitch), "--mechanism", "jed", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("gcts");
    let args = two_area_args(&["--mechanism", "gcts", "--out", path(&out_dir)]);
    let mut full = vec!["solve"];
    full.extend(args.iter().map(String::as_str));
    let out = gcts(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["summary", "buses", "generators", "branches", "bids", "settlement"] {
        assert!(out_dir.join(format!("{name}.csv")).is_file(), "{name}.csv missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 6);
    assert_eq!(rows(&out_dir.join("buses.csv")).len(), 45);
}

#[test]
fn json_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let args = two_area_args(&["--mechanism", "jed", "--format", "json", "--out", path(dir.path())]);
    let mut full = vec!["solve"];
    full.extend(args.iter().map(String::as_str));
    assert_eq!(gcts(&full).status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    serde_json::from_str::<serde_json::Value>(&text).unwrap();
}

#[test]
fn zero_load_noise_reproduces_look_ahead_cost() {
    let dir = tempfile::tempdir().unwrap();
    let args = two_area_args(&["--samples", "2", "--sigma", "0", "--out", path(dir.path())]);
    let mut full = vec!["compare"];
    full.extend(args.iter().map(String::as_str));
    let out = gcts(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("comparison.csv"));
    let col = |name: &str| table[0].iter().position(|h| h.starts_with(name)).unwrap();
    let (gen, total, rt) = (
        col("Look-ahead generation"),
        col("Look-ahead total"),
        col("Average real-time"),
    );
    for row in &table[1..] {
        let look_ahead = if row[total] == "--" { &row[gen] } else { &row[total] };
        let a: f64 = look_ahead.parse().unwrap();
        let b: f64 = row[rt].parse().unwrap();
        assert!((a - b).abs() <= 1e-6 * a.abs(), "{}: {a} vs {b}", row[0]);
    }
    assert_eq!(table.len(), 4);
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let args = two_area_args(&["--w", "0.1,1.0", "--dpi", "1.0,0.0", "--out", path(dir.path())]);
    let mut full = vec!["sweep"];
    full.extend(args.iter().map(String::as_str));
    let out = gcts(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&dir.path().join("sweep.csv")).len(), 1 + 4);
    assert!(dir.path().join("clearing.csv").is_file());
}
