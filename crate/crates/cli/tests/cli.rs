use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small.toml")
}

fn spinrad(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spinrad"));
    cmd.arg("--config").arg(fixture()).arg("--out").arg(out).args(args);
    cmd.output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn hash_of(dir: &Path) -> String {
    let m = read(dir, "manifest.toml");
    let line = m.lines().find(|l| l.starts_with("config_sha256")).unwrap();
    line.split('"').nth(1).unwrap().to_string()
}

#[test]
fn verify_algebra_passes_and_stamps_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinrad(dir.path(), &["verify-algebra"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let hash = hash_of(dir.path());
    assert_eq!(hash.len(), 64);
    for name in ["algebra.csv", "checks.csv", "reports.csv", "config.toml"] {
        assert!(read(dir.path(), name).contains(&hash), "{name} lacks the config hash");
    }
    let table = read(dir.path(), "algebra.csv");
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(rows.len() > 20);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn zero_data_gives_zero_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinrad(dir.path(), &["--set", "data.0.amplitude=0.0", "--set", "evolve.t_final=1.0", "evolve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = read(dir.path(), "evolve.csv");
    for row in table.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<f64> = row.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols, vec![0.0, 0.0]);
    }
    let meta = read(dir.path(), "snapshot_0000.meta");
    assert!(meta.contains(&hash_of(dir.path())));
    let bin = std::fs::read(dir.path().join("snapshot_0001.bin")).unwrap();
    assert_eq!(bin.len(), 64 * 64 * 64 * 64);
    assert!(bin.iter().all(|b| *b == 0));
}

#[test]
fn zero_data_diagnostics_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinrad(dir.path(), &[
            "--set",
            "data.0.amplitude=0.0",
            "--set",
            "evolve.t_final=1.0",
            "--set",
            "evolve.ks_times=[0.0, 1.0]",
            "diagnostics",
        ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = read(dir.path(), "diagnostics.csv");
    for row in table.lines().filter(|l| !l.starts_with('#')).skip(1) {
        assert!(row.split(',').skip(1).all(|c| c.parse::<f64>().unwrap() == 0.0), "{row}");
    }
}

#[test]
fn identical_config_gives_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--set", "evolve.t_final=2.0", "--set", "evolve.ks_times=[0.0, 2.0]", "diagnostics"];
    assert_eq!(spinrad(a.path(), &args).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_spinrad"))
        .arg("--config")
        .arg(fixture())
        .arg("--out")
        .arg(b.path())
        .args(["--jobs", "2"])
        .args(args)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for name in ["diagnostics.csv", "ks.csv", "checks.csv", "manifest.toml"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn radiation_dump_round_trips_through_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinrad(dir.path(), &["--set", "tolerances.isometry=1.0", "radiation"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read(dir.path(), "manifest.toml");
    for name in ["radiation.meta", "radiation.bin", "radiation.nodes.csv", "radiation.csv"] {
        assert!(manifest.contains(name), "{name} missing from the manifest");
        assert!(dir.path().join(name).exists());
    }
    // 9 retarded times (Δs = h = 0.5 on [−2, 2]) × 12·24 nodes × 4 components.
    let bin = std::fs::read(dir.path().join("radiation.bin")).unwrap();
    assert_eq!(bin.len(), 9 * 288 * 4 * 16);
}

#[test]
fn failed_check_exits_one_and_names_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinrad(dir.path(), &["--set", "tolerances.isometry=1e-9", "scatter-forward"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("isometry defect"));
    assert!(read(dir.path(), "manifest.toml").contains("passed = false"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--set", "grid.size=3", "evolve"][..],
        &["--set", "grid.n=66", "evolve"][..],
        &["--set", "null_grid.s_max=40.0", "radiation"][..],
        &["--set", "convergence.ladders=[\"bogus\"]", "convergence"][..],
        &["no-such-command"][..],
    ] {
        let o = spinrad(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_spinrad")).args(["--config", "/nonexistent.toml", "evolve"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn splitting_ladder_is_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinrad(dir.path(), &["--set", "convergence.splitting_t_final=2.0", "convergence"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let fits = read(dir.path(), "fits.csv");
    let row = fits.lines().find(|l| l.starts_with("splitting,order,")).unwrap();
    let order: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(order >= 1.9, "{order}");
    let ladder = read(dir.path(), "ladders.csv");
    assert_eq!(ladder.lines().filter(|l| l.starts_with("splitting,dt,")).count(), 3);
}

#[test]
fn seed_changes_only_the_randomized_checks() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(spinrad(a.path(), &["--seed", "1", "verify-algebra"]).status.code(), Some(0));
    assert_eq!(spinrad(b.path(), &["--seed", "2", "verify-algebra"]).status.code(), Some(0));
    assert_ne!(hash_of(a.path()), hash_of(b.path()));
}
