use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cutoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutoff"))
        .args(args)
        .env("CUTOFF_THREADS", "1")
        .output()
        .expect("running cutoff")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "gsnr_grid = [0.0, 10.0]\noutput_dir = \"out\"\n[noise]\nalpha = [1.2]\nrho = [0.2]\n[modulation]\norder = 4\nlayout = \"qpsk\"\n";

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[noise]\nalpha = [2.5]\nrho = [0.2]\n");
    let out = cutoff(&["--config", &cfg, "bounds-sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bounds_sweep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = cutoff(&["--config", &cfg, "bounds-sweep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/bounds_a1.2_r0.2.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("alpha,rho,"));
    assert!(!text.contains("nan"));
}

#[test]
fn cr_sweep_is_ordered_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(cutoff(&["--config", &cfg, "cr-sweep"]).status.success());
    let first = fs::read_to_string(dir.path().join("out/cr_sweep.csv")).unwrap();
    assert!(cutoff(&["--config", &cfg, "cr-sweep"]).status.success());
    let second = fs::read_to_string(dir.path().join("out/cr_sweep.csv")).unwrap();
    assert_eq!(first, second);
    for row in first.lines().skip(1) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        let (oracle, lower, upper) = (v[5], v[6], v[7]);
        assert!(lower <= oracle && oracle <= upper, "{row}");
    }
}

#[test]
fn shape_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let body = "gsnr_grid = [2.0]\noutput_dir = \"out\"\n[noise]\nalpha = [1.8]\nrho = [0.8]\n[modulation]\norder = 4\nlayout = \"qpsk\"\n[shaping]\ni_max = 20\nsurrogate_cells = 16\n";
    let cfg = write_config(dir.path(), body);
    let out = cutoff(&["--config", &cfg, "shape"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("out/shape_comparison.csv")).unwrap();
    let schemes: Vec<&str> = table.lines().skip(1).map(|r| r.split(',').nth(5).unwrap()).collect();
    assert_eq!(schemes, ["proposed", "conventional", "only-geo", "only-pro", "wgnc"]);
    assert!(dir.path().join("out/shape_a1.8_r0.8_g2.svg").exists());
}

#[test]
fn out_flag_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let other = dir.path().join("elsewhere");
    let out = cutoff(&["--config", &cfg, "--out", other.to_str().unwrap(), "bounds-sweep"]);
    assert!(out.status.success());
    assert!(other.join("bounds_a1.2_r0.2.csv").exists());
}
