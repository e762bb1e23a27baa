//! End-to-end checks of the command-line interface: happy paths, flag
//! validation, error reporting, and output layout.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdirw"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn fdirw");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small self-consistent domain: geometry plus a matching config file.
fn setup(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let geom = dir.join("g.geom");
    run_ok(bin()
        .args(["gen-geometry", "--size", "20", "--rp", "4", "--pores", "4"])
        .args(["--pore-radius", "1:2", "--seed", "3", "--out"])
        .arg(&geom));
    let grid = fdirw::io::read_geometry(&geom).unwrap();
    let tables = fdirw::fd_solver::StencilTables::new(&grid);
    let mut params = fdirw::driver::desk_params(tables.n_solid(), tables.n_near());
    params.dt_macro = 5.0e-5;
    let cfg = dir.join("p.cfg");
    std::fs::write(&cfg, params.to_config_string()).unwrap();
    (geom, cfg)
}

#[test]
fn gen_geometry_happy_path_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("g.geom");
    let out = run_ok(bin()
        .args(["gen-geometry", "--size", "48", "--rp", "12", "--pores", "20"])
        .args(["--pore-radius", "2:3", "--seed", "7", "--out"])
        .arg(&out_path));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out_path.exists());
    assert!(stdout.contains("N_S"));
    assert!(stdout.contains("N_L"));
    assert!(stdout.contains("porosity"));
}

#[test]
fn gen_geometry_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.geom");
    let b = dir.path().join("b.geom");
    for p in [&a, &b] {
        run_ok(bin()
            .args(["gen-geometry", "--size", "24", "--rp", "5", "--pores", "6"])
            .args(["--pore-radius", "1:2", "--seed", "9", "--out"])
            .arg(p));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_required_flag_fails_with_usage() {
    let out = bin().args(["gen-geometry", "--size", "48"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage") || stderr.contains("--rp"), "stderr: {stderr}");
}

#[test]
fn oversized_particle_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen-geometry", "--size", "20", "--rp", "12", "--out"])
        .arg(dir.path().join("g.geom"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("clearance"), "stderr: {stderr}");
}

#[test]
fn precondition_prints_residual_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let mat = dir.path().join("m.mat");
    let out = run_ok(bin()
        .args(["precondition", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .args(["--dump-coarse-map", "--out"])
        .arg(&mat));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("row-sum residual"));
    assert!(mat.exists());
    assert!(mat.with_extension("cmap").exists());
    let m = fdirw::io::read_matrix(&mat).unwrap();
    assert!(m.construction_residual <= 1.0e-9);
}

#[test]
fn run_rejects_mismatched_geometry_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let mat = dir.path().join("m.mat");
    run_ok(bin()
        .args(["precondition", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&mat));

    // A different geometry under the same config.
    let other = dir.path().join("other.geom");
    run_ok(bin()
        .args(["gen-geometry", "--size", "20", "--rp", "4", "--pores", "2"])
        .args(["--pore-radius", "1:2", "--seed", "99", "--out"])
        .arg(&other));
    let out = bin()
        .args(["run", "--geometry"])
        .arg(&other)
        .arg("--matrix")
        .arg(&mat)
        .arg("--config")
        .arg(&cfg)
        .args(["--t-end", "0.0005", "--out"])
        .arg(dir.path().join("r"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    // Both fingerprints are named.
    let m = fdirw::io::read_matrix(&mat).unwrap();
    let other_grid = fdirw::io::read_geometry(&other).unwrap();
    assert!(stderr.contains(&m.geometry_hash), "stderr: {stderr}");
    assert!(stderr.contains(&other_grid.hash()), "stderr: {stderr}");
}

#[test]
fn run_writes_expected_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let mat = dir.path().join("m.mat");
    run_ok(bin()
        .args(["precondition", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&mat));
    let run_dir = dir.path().join("run");
    run_ok(bin()
        .args(["run", "--geometry"])
        .arg(&geom)
        .arg("--matrix")
        .arg(&mat)
        .arg("--config")
        .arg(&cfg)
        .args(["--solver", "fdirw", "--precision", "mixed", "--t-end", "0.001"])
        .args(["--dump-stride", "10", "--out"])
        .arg(&run_dir));
    assert!(run_dir.join("kinetics.csv").exists());
    assert!(run_dir.join("report.txt").exists());
    assert!(run_dir.join("timings.txt").exists());
    assert!(run_dir.join("plots/kinetics.svg").exists());
    assert!(run_dir.join("fields/final.field").exists());
    assert!(run_dir.join("fields/step_000010.field").exists());
    let report = std::fs::read_to_string(run_dir.join("report.txt")).unwrap();
    assert!(report.contains("precision mixed"));

    // The field dump reads back onto its geometry.
    let grid = {
        let mut g = fdirw::io::read_geometry(&geom).unwrap();
        let params = fdirw::physics::PhysParams::from_config_file(&cfg).unwrap();
        fdirw::physics::apply_far_field(&mut g, &params);
        g
    };
    let state = fdirw::io::read_field(&run_dir.join("fields/final.field"), &grid).unwrap();
    assert!((state.t - 0.001).abs() < 1.0e-12);
}

#[test]
fn baseline_solver_needs_no_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let run_dir = dir.path().join("fd");
    run_ok(bin()
        .args(["run", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .args(["--solver", "fd", "--t-end", "0.0005", "--out"])
        .arg(&run_dir));
    assert!(run_dir.join("kinetics.csv").exists());

    // And the superposition solver without a matrix is an error.
    let out = bin()
        .args(["run", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .args(["--solver", "fdirw", "--t-end", "0.0005", "--out"])
        .arg(dir.path().join("no-matrix"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--matrix"));
}

#[test]
fn compare_writes_four_modes_and_error_plot() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let mat = dir.path().join("m.mat");
    run_ok(bin()
        .args(["precondition", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&mat));
    let cmp = dir.path().join("cmp");
    run_ok(bin()
        .args(["compare", "--geometry"])
        .arg(&geom)
        .arg("--matrix")
        .arg(&mat)
        .arg("--config")
        .arg(&cfg)
        .args(["--t-end", "0.001", "--out"])
        .arg(&cmp));
    for mode in ["full", "fp32", "mixed", "fp16"] {
        assert!(cmp.join(mode).join("kinetics.csv").exists(), "missing {mode} subdirectory");
    }
    assert!(cmp.join("re.csv").exists());
    assert!(cmp.join("plots/re.svg").exists());
    assert!(cmp.join("summary.txt").exists());
    let re = std::fs::read_to_string(cmp.join("re.csv")).unwrap();
    assert!(re.lines().next().unwrap().contains("RE_fp16"));
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("mystery = 1.0\n");
    std::fs::write(&cfg, text).unwrap();
    let out = bin()
        .args(["precondition", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("m.mat"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));
}

#[test]
fn plot_renders_kinetics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (geom, cfg) = setup(dir.path());
    let run_dir = dir.path().join("fd");
    run_ok(bin()
        .args(["run", "--geometry"])
        .arg(&geom)
        .arg("--config")
        .arg(&cfg)
        .args(["--solver", "fd", "--t-end", "0.0005", "--out"])
        .arg(&run_dir));
    let svg = dir.path().join("k.svg");
    run_ok(bin()
        .args(["plot", "--csv"])
        .arg(run_dir.join("kinetics.csv"))
        .args(["--y-cols", "Q_S,Q_L_near", "--out"])
        .arg(&svg));
    let content = std::fs::read_to_string(&svg).unwrap();
    assert!(content.starts_with("<svg"));
    assert!(content.contains("Q_S"));
}

#[test]
fn version_names_the_file_formats() {
    let out = run_ok(bin().arg("--version"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FDIRW-GEOM v1"), "stdout: {stdout}");
    assert!(stdout.contains("FDIRW-MAT v1"));
}
