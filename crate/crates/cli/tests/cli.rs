use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cws_cli::pipeline::Manifest;
use cws_core::io;

fn cws(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cws"));
    c.args(args).env_remove("CWS_WORKERS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

const SMALL: &[&str] = &["--set", "lattice.axis_len=12", "--set", "totals=200000", "--set", "recon.repeats=2"];

fn with_small<'a>(head: &[&'a str], dir: &'a str) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(SMALL);
    v.extend_from_slice(&["--out", dir]);
    v
}

fn manifest(dir: &Path, name: &str) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join(name)).unwrap()).unwrap()
}

fn hashes(m: &Manifest) -> Vec<(String, String)> {
    m.artifacts.iter().map(|a| (a.name.clone(), a.sha256.clone())).collect()
}

#[test]
fn pipeline_is_reproducible_and_hashes_match_files() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for d in [&a, &b] {
        let out = cws(&with_small(&["pipeline"], d.to_str().unwrap()), &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ma, mb) = (manifest(&a, "manifest.json"), manifest(&b, "manifest.json"));
    assert_eq!(hashes(&ma), hashes(&mb));
    for art in &ma.artifacts {
        let bytes = fs::read(a.join(&art.path)).unwrap();
        assert_eq!(cws_cli::pipeline::sha256_hex(&bytes), art.sha256);
        assert_eq!(bytes.len() as u64, art.bytes);
    }
    assert_eq!(ma.ft_paths, vec![true, false]);
    for name in ["state.cwsf", "camera_state.cwsf", "hist_kx.cwsh", "hist_ky.cwsh", "gradient.cwsg", "phase.cwsp"] {
        assert!(ma.artifact(name).is_some(), "{name} missing");
    }
    assert!(ma.artifacts.iter().any(|a| a.name.ends_with(".ppm")));
}

#[test]
fn binary_artifacts_round_trip_bitwise() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let out = cws(&with_small(&["pipeline"], d.to_str().unwrap()), &[]);
    assert!(out.status.success());
    for f in ["state.cwsf", "camera_state.cwsf", "amplitude.cwsf", "reconstructed.cwsf", "reconstructed_camera.cwsf"] {
        let p = d.join(f);
        assert_eq!(io::encode_field(&io::read_field(&p).unwrap()), fs::read(&p).unwrap(), "{f}");
    }
    for f in ["hist_kx.cwsh", "hist_ky.cwsh"] {
        let p = d.join(f);
        assert_eq!(io::encode_histogram(&io::read_histogram(&p).unwrap()), fs::read(&p).unwrap());
    }
    let p = d.join("gradient.cwsg");
    assert_eq!(io::encode_gradient(&io::read_gradient(&p).unwrap()), fs::read(&p).unwrap());
    let p = d.join("phase.cwsp");
    assert_eq!(io::encode_phase(&io::read_phase(&p).unwrap()), fs::read(&p).unwrap());
}

#[test]
fn stagewise_run_matches_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let (full, staged) = (t.path().join("full"), t.path().join("staged"));
    let s = staged.to_str().unwrap();
    assert!(cws(&with_small(&["pipeline"], full.to_str().unwrap()), &[]).status.success());
    for cmd in ["simulate", "estimate", "reconstruct"] {
        let out = cws(&with_small(&[cmd], s), &[]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let m = manifest(&full, "manifest.json");
    let mut staged_hashes = Vec::new();
    for name in ["manifest.simulate.json", "manifest.estimate.json", "manifest.reconstruct.json"] {
        staged_hashes.extend(hashes(&manifest(&staged, name)));
    }
    for (name, h) in staged_hashes {
        let full_hash = &m.artifact(&name).unwrap_or_else(|| panic!("{name} not in pipeline")).sha256;
        assert_eq!(&h, full_hash, "{name}");
    }
}

#[test]
fn zero_preset_exits_with_stage_error_and_leaves_nothing() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("out");
    let args = with_small(&["pipeline", "--set", r#"state={"preset":"zero"}"#], d.to_str().unwrap());
    let out = cws(&args, &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage states"), "{err}");
    assert!(!d.exists() || fs::read_dir(&d).unwrap().next().is_none());
}

#[test]
fn config_errors_exit_with_two() {
    let out = cws(&["pipeline", "--set", "totals=0"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = cws(&["pipeline", "--set", "optics.no_such_key=1"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = cws(&["pipeline", "--config", "/nonexistent/config.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = cws(&["validate"], &[("CWS_WORKERS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_write_removes_partial_artifacts() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("out");
    fs::create_dir_all(d.join("reconstructed.cwsf")).unwrap();
    let out = cws(&with_small(&["pipeline"], d.to_str().unwrap()), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage serialization"));
    let left: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("reconstructed.cwsf")]);
}

#[test]
fn config_file_and_worker_env() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("out");
    let cfg = t.path().join("c.json");
    let doc = serde_json::json!({
        "lattice": {"axis_len": 10},
        "totals": 50000,
        "recon": {"repeats": 2},
        "output_dir": d,
        "slices": ["x,y,x,y"],
    });
    fs::write(&cfg, doc.to_string()).unwrap();
    let out = cws(&["pipeline", "--config", cfg.to_str().unwrap()], &[("CWS_WORKERS", "3")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&d, "manifest.json");
    assert_eq!(m.config.recon.workers, 3);
    assert_eq!(m.config.lattice.axis_len, 10);
    assert!(m.artifact("slice_x_y_x_y.ppm").is_some());
    assert!(m.artifact("slice_x_0_y_0.ppm").is_none());
}

#[test]
fn render_subcommand_writes_ppm() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert!(cws(&with_small(&["simulate"], d.to_str().unwrap()), &[]).status.success());
    let img = d.join("s.ppm");
    let out = cws(
        &[
            "render",
            "--field",
            d.join("state.cwsf").to_str().unwrap(),
            "--slice",
            "x,0,y,0",
            "--output",
            img.to_str().unwrap(),
            "--scale",
            "2",
            "--hue-offset",
            "-1.5",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(img).unwrap();
    assert!(bytes.starts_with(b"P6\n24 24\n255\n"));
}

#[test]
fn validate_reports_checks() {
    let out = cws(&["validate", "--set", "lattice.axis_len=12"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");

    let out = cws(
        &["validate", "--json", "--set", "lattice.axis_len=12", "--set", "optics.displacement=75e-6", "--set", "optics.ft=FOUR_F"],
        &[],
    );
    assert!(out.status.success());
    let r: cws_cli::validate::Report = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.get("weak_measurement_p0").unwrap().status, cws_cli::validate::CheckStatus::Warn);
}
