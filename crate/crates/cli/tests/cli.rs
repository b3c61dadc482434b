use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn silhuetta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silhuetta")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn volume_of_the_golden_cube() {
    let cube = root().join("crates/core/tests/golden/cube10mm.obj");
    let o = silhuetta(&["volume", path(&cube)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1.000000 cm3\n");
}

#[test]
fn report_on_table1_prints_the_published_averages() {
    let o = silhuetta(&["report", path(&root().join("data/table1.csv"))]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("experiment,method,exp_volume_cm3,real_volume_cm3,RE_pct,precision_pct\n"));
    assert!(out.contains("1,proposed,258.9,240,-7.30,3.04\n"));
    assert!(out.lines().any(|l| l.starts_with("AVERAGE,Hirano2009,,,") && l.ends_with(",4.98")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("AVERAGE,proposed,,,") && l.ends_with(",1.39")), "{out}");
}

#[test]
fn synth_writes_one_image_and_mask_per_camera() {
    let dir = tempfile::tempdir().unwrap();
    let scene = root().join("scenes/exp1_sphere_shadow.json");
    let o = silhuetta(&["synth", path(&scene), "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let count = |ext: &str| std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext)).count();
    assert_eq!((count("ppm"), count("pgm")), (4, 4));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert!((meta["ground_truth_volume_cm3"].as_f64().unwrap() - 523.598775598).abs() < 1e-6);

    // segment one of the rendered views
    let mask = dir.path().join("mask.pgm");
    let view = dir.path().join("view_top.ppm");
    let o = silhuetta(&["silhouette", "--in", path(&view), "--out", path(&mask), "--invert"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(mask.exists());
}

#[test]
fn reconstruct_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let scene = root().join("scenes/exp1_sphere_shadow.json");
    let o = Command::new(env!("CARGO_BIN_EXE_silhuetta"))
        .args(["reconstruct", "--scene", path(&scene), "--invert", "--grid", "32x32x32", "--stl", "--out", path(dir.path())])
        .env("SILHUETTA_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("volume: "));
    for f in ["mask_lateral0.pgm", "mask_top.pgm", "grid.vox", "mesh.obj", "mesh.stl", "report.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let v = silhuetta(&["volume", path(&dir.path().join("mesh.obj"))]);
    assert!(v.status.success());
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!silhuetta(&[]).status.success());
    assert!(!silhuetta(&["volume"]).status.success());
    assert!(!silhuetta(&["reconstruct", "--scene", "x.json", "--grid", "4x4x4"]).status.success());
    assert!(!silhuetta(&["reconstruct", "--scene", "x.json", "--bv", "1,2,3"]).status.success());
    assert!(!silhuetta(&["volume", "/nonexistent.obj"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_silhuetta")).args(["report", "x.csv"]).env("SILHUETTA_THREADS", "0").output().unwrap();
    assert!(!o.status.success());
}
