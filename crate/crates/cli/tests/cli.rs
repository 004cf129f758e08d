use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn pgnlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgnlm"))
        .args(args)
        .env_remove("PGNLM_THREADS")
        .output()
        .expect("spawn pgnlm")
}

fn ok(args: &[&str]) -> String {
    let out = pgnlm(args);
    assert!(
        out.status.success(),
        "pgnlm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_category(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value =
        serde_json::from_str(line.lines().last().unwrap()).expect("JSON error on stderr");
    v["error"]["category"].as_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Files {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Files {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn simulate(&self, scene: &str, size: usize, seed: u64) {
        let (slc, guide, labels, meta) = (
            self.path("slc.bin"),
            self.path("guide.bin"),
            self.path("labels.bin"),
            self.path("meta.txt"),
        );
        ok(&[
            "simulate",
            "--scene",
            scene,
            "--size",
            &size.to_string(),
            "--seed",
            &seed.to_string(),
            "--out-slc",
            s(&slc),
            "--out-guide",
            s(&guide),
            "--out-labels",
            s(&labels),
            "--out-meta",
            s(&meta),
        ]);
    }

    fn calibrate(&self, search: usize) {
        ok(&[
            "calibrate",
            "--slc",
            s(&self.path("slc.bin")),
            "--guide",
            s(&self.path("guide.bin")),
            "--search",
            &search.to_string(),
            "--out",
            s(&self.path("calib.txt")),
        ]);
    }
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn pipeline_smoke() {
    let f = Files::new();
    f.simulate("homogeneous", 64, 7);
    f.calibrate(19);
    let cov = f.path("cov.bin");
    let stdout = ok(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--guide",
        s(&f.path("guide.bin")),
        "--calib",
        s(&f.path("calib.txt")),
        "--diagnostics",
        s(&f.path("diag")),
        "--out",
        s(&cov),
    ]);
    assert!(stdout.contains("estimated 64x64"), "{stdout}");
    // 17-byte header + 64*64 pixels * 9 floats * 4 bytes
    assert_eq!(fs::metadata(&cov).unwrap().len(), 17 + 64 * 64 * 36);
    assert_eq!(
        fs::metadata(f.path("diag_predictors.bin")).unwrap().len(),
        17 + 64 * 64 * 4
    );
    assert!(f.path("diag_weights.bin").exists());

    ok(&["features", "--cov", s(&cov), "--out", s(&f.path("feat.bin"))]);
    assert_eq!(
        fs::metadata(f.path("feat.bin")).unwrap().len(),
        17 + 64 * 64 * 5 * 4
    );

    let metrics = ok(&[
        "metrics",
        "--cov",
        s(&cov),
        "--truth",
        s(&f.path("meta.txt")),
        "--labels",
        s(&f.path("labels.bin")),
        "--enl-region",
        "8,8,48,48",
    ]);
    let m: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(m["height"], 64);
    assert!(m["enl"]["c11"].as_f64().unwrap() > 10.0, "{metrics}");
    assert!(m["matrix_error"]["overall"].as_f64().unwrap() < 0.5);
}

#[test]
fn estimate_echoes_published_defaults() {
    let f = Files::new();
    f.simulate("edge2", 48, 1);
    f.calibrate(19);
    let stdout = ok(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--guide",
        s(&f.path("guide.bin")),
        "--calib",
        s(&f.path("calib.txt")),
        "--out",
        s(&f.path("cov.bin")),
    ]);
    assert!(
        stdout.contains(
            "config: search=39x39 patch=5x5 gamma=0.85 lambda=2 p_pol=50 p_opt=50 s_max=64 guided=true"
        ),
        "{stdout}"
    );
}

#[test]
fn unweighted_accept_all_matches_boxcar_via_compare() {
    let f = Files::new();
    f.simulate("checkerboard", 64, 3);
    f.calibrate(19);
    let (est, bx) = (f.path("est.bin"), f.path("box.bin"));
    ok(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--guide",
        s(&f.path("guide.bin")),
        "--calib",
        s(&f.path("calib.txt")),
        "--lambda",
        "0",
        "--p-pol",
        "100",
        "--smax",
        "1521",
        "--out",
        s(&est),
    ]);
    ok(&[
        "boxcar",
        "--slc",
        s(&f.path("slc.bin")),
        "--half",
        "19",
        "--out",
        s(&bx),
    ]);
    let report = ok(&["compare", s(&est), s(&bx), "--tol", "1e-10"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["within_tolerance"], true);

    // and a genuinely different estimate is reported as a mismatch
    ok(&[
        "boxcar",
        "--slc",
        s(&f.path("slc.bin")),
        "--half",
        "2",
        "--out",
        s(&bx),
    ]);
    let out = pgnlm(&["compare", s(&est), s(&bx), "--tol", "1e-10"]);
    assert_eq!(out.status.code(), Some(9));
    assert_eq!(error_category(&out), "mismatch");
}

#[test]
fn classify_writes_json_and_csv() {
    let f = Files::new();
    let (slc, guide, labels, groups) = (
        f.path("slc.bin"),
        f.path("guide.bin"),
        f.path("labels.bin"),
        f.path("groups.bin"),
    );
    ok(&[
        "simulate",
        "--scene",
        "canopy_mosaic",
        "--size",
        "64",
        "--seed",
        "5",
        "--out-slc",
        s(&slc),
        "--out-guide",
        s(&guide),
        "--out-labels",
        s(&labels),
        "--out-groups",
        s(&groups),
    ]);
    ok(&[
        "boxcar",
        "--slc",
        s(&slc),
        "--half",
        "2",
        "--out",
        s(&f.path("cov.bin")),
    ]);
    ok(&[
        "features",
        "--cov",
        s(&f.path("cov.bin")),
        "--out",
        s(&f.path("feat.bin")),
    ]);
    let (json, csv) = (f.path("report.json"), f.path("folds.csv"));
    ok(&[
        "classify",
        "--features",
        s(&f.path("feat.bin")),
        "--labels",
        s(&labels),
        "--groups",
        s(&groups),
        "--k",
        "4",
        "--seed",
        "1",
        "--out",
        s(&json),
        "--csv",
        s(&csv),
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["grouped"], true);
    assert_eq!(v["folds"].as_array().unwrap().len(), 4);
    assert_eq!(v["classifier"]["kind"], "nearest_centroid");
    let mean = v["mean"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&mean), "{mean}");
    let csv = fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("fold,accuracy\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let f = Files::new();
    f.simulate("canopy_mosaic", 48, 9);
    f.calibrate(10);
    let mut hashes = Vec::new();
    for threads in ["1", "3"] {
        let out = f.path(&format!("cov{threads}.bin"));
        ok(&[
            "--threads",
            threads,
            "estimate",
            "--slc",
            s(&f.path("slc.bin")),
            "--guide",
            s(&f.path("guide.bin")),
            "--calib",
            s(&f.path("calib.txt")),
            "--out",
            s(&out),
        ]);
        hashes.push(sha(&out));
    }
    assert_eq!(hashes[0], hashes[1]);

    // simulate twice with the same seed: identical files
    let first = sha(&f.path("slc.bin"));
    f.simulate("canopy_mosaic", 48, 9);
    assert_eq!(first, sha(&f.path("slc.bin")));
}

#[test]
fn errors_carry_machine_readable_categories() {
    let f = Files::new();
    // unknown flag
    let out = pgnlm(&["boxcar", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_category(&out), "usage");

    // missing input file
    let out = pgnlm(&[
        "boxcar",
        "--slc",
        "/nonexistent.bin",
        "--out",
        s(&f.path("x.bin")),
    ]);
    assert_eq!(error_category(&out), "io");

    // bad magic
    fs::write(f.path("junk.bin"), b"PGNLM0\x01\x00\x00\x00\x00").unwrap();
    let out = pgnlm(&[
        "boxcar",
        "--slc",
        s(&f.path("junk.bin")),
        "--out",
        s(&f.path("x.bin")),
    ]);
    assert_eq!(error_category(&out), "format");
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));

    // missing calibration file
    f.simulate("homogeneous", 48, 2);
    let out = pgnlm(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--guide",
        s(&f.path("guide.bin")),
        "--calib",
        s(&f.path("nope.txt")),
        "--out",
        s(&f.path("cov.bin")),
    ]);
    assert_eq!(error_category(&out), "io");
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    // incompatible geometry: guide from a different-size scene
    f.calibrate(10);
    let other = Files::new();
    other.simulate("homogeneous", 32, 2);
    let out = pgnlm(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--guide",
        s(&other.path("guide.bin")),
        "--calib",
        s(&f.path("calib.txt")),
        "--out",
        s(&f.path("cov.bin")),
    ]);
    assert_eq!(error_category(&out), "geometry");

    // guided estimation without a guide
    let out = pgnlm(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--calib",
        s(&f.path("calib.txt")),
        "--out",
        s(&f.path("cov.bin")),
    ]);
    assert_eq!(error_category(&out), "usage");

    // unknown scene
    let out = pgnlm(&[
        "simulate",
        "--scene",
        "forest",
        "--out-slc",
        s(&f.path("a")),
        "--out-guide",
        s(&f.path("b")),
        "--out-labels",
        s(&f.path("c")),
    ]);
    assert_eq!(error_category(&out), "config");
}

#[test]
fn unguided_estimate_needs_no_guide() {
    let f = Files::new();
    f.simulate("edge2", 40, 4);
    f.calibrate(8);
    let stdout = ok(&[
        "estimate",
        "--slc",
        s(&f.path("slc.bin")),
        "--calib",
        s(&f.path("calib.txt")),
        "--unguided",
        "--p-pol",
        "40",
        "--out",
        s(&f.path("cov.bin")),
    ]);
    assert!(
        stdout.contains("guided=false") && stdout.contains("p_pol=40"),
        "{stdout}"
    );
}
