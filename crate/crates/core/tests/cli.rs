use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use krflow::io::TRACE_COLUMNS;

fn krflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krflow"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KRFLOW_OUT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_json(path: &Path, value: serde_json::Value) {
    fs::write(path, value.to_string()).unwrap();
}

#[test]
fn stationary_run_writes_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = krflow(
        &[
            "run",
            "--grid",
            "32",
            "--background",
            "round",
            "--phi0",
            "zero",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], TRACE_COLUMNS.join(","));
    assert_eq!(
        lines[0],
        "t,nu,F,E1,c,c_norm,b,ubar,f_gap,eps,sup_u,sup_grad_u_sq,sup_lap_u,dt"
    );
    assert_eq!(lines.len(), 2);
    assert!(dir.path().join("o/snapshots/0000.json").exists());
    let snap: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("o/snapshots/0000.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(snap["sigma"].as_array().unwrap().len(), 32);
    assert_eq!(snap["phi"].as_array().unwrap().len(), 32);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["grid"], 32);
    assert_eq!(manifest["background"]["kind"], "round");
}

#[test]
fn bump_run_converges_and_huge_bump_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let ok = krflow(
        &[
            "run", "--grid", "48", "--phi0", "bump:0.3", "--t-max", "30", "--out", "a",
        ],
        dir.path(),
    );
    assert_eq!(code(&ok), 0);
    let csv = fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert!(last[11] < 1e-8);

    let bad = krflow(
        &["run", "--grid", "48", "--phi0", "bump:50", "--out", "b"],
        dir.path(),
    );
    assert_eq!(code(&bad), 3);
    let csv = fs::read_to_string(dir.path().join("b/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);

    let short = krflow(
        &[
            "run", "--grid", "48", "--phi0", "bump:0.3", "--t-max", "0.1", "--out", "c",
        ],
        dir.path(),
    );
    assert_eq!(code(&short), 2);
}

#[test]
fn usage_and_unreadable_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&krflow(&["run", "--grid", "many"], dir.path())), 64);
    assert_eq!(code(&krflow(&["run", "--phi0", "wobble"], dir.path())), 64);
    assert_eq!(code(&krflow(&["run", "--dt", "0"], dir.path())), 64);
    assert_eq!(
        code(&krflow(
            &["run", "--background", "cubic:5", "--grid", "32"],
            dir.path()
        )),
        64
    );
    assert_eq!(
        code(&krflow(&["run", "--phi0", "absent.json"], dir.path())),
        66
    );
    assert_eq!(
        code(&krflow(&["run", "--background", "absent.json"], dir.path())),
        66
    );
    fs::write(dir.path().join("junk.json"), "{not json").unwrap();
    assert_eq!(
        code(&krflow(&["run", "--phi0", "junk.json"], dir.path())),
        66
    );
    write_json(
        &dir.path().join("short.json"),
        serde_json::json!({"sigma": [-0.5, 0.5], "values": [0.0, 0.0]}),
    );
    assert_eq!(
        code(&krflow(&["run", "--phi0", "short.json"], dir.path())),
        66
    );
    assert_eq!(
        code(&krflow(
            &["replay", "--manifest", "absent.json"],
            dir.path()
        )),
        66
    );
    assert_eq!(code(&krflow(&["--help"], dir.path())), 0);
}

#[test]
fn file_inputs_and_env_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let sigma: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 / 20.0).collect();
    let psi: Vec<f64> = sigma
        .iter()
        .map(|s| 0.1 * (s * s + 0.5 * s * s * s))
        .collect();
    let phi: Vec<f64> = sigma.iter().map(|s| 0.2 * (1.0 - s * s)).collect();
    write_json(
        &dir.path().join("bg.json"),
        serde_json::json!({"sigma": sigma, "values": psi}),
    );
    write_json(
        &dir.path().join("phi.json"),
        serde_json::json!({"sigma": sigma, "values": phi}),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_krflow"))
        .args([
            "run",
            "--grid",
            "48",
            "--background",
            "bg.json",
            "--phi0",
            "phi.json",
            "--t-max",
            "0.2",
        ])
        .current_dir(dir.path())
        .env("KRFLOW_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("from-env/trace.csv").exists());
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("from-env/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["background"]["kind"], "sampled");
    assert_eq!(manifest["initial"]["kind"], "sampled");
    assert_eq!(manifest["background_source"], "bg.json");
}

#[test]
fn replay_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&krflow(
            &[
                "run",
                "--grid",
                "40",
                "--phi0",
                "bump:-0.2",
                "--t-max",
                "1",
                "--out",
                "a"
            ],
            dir.path()
        )),
        2
    );
    assert_eq!(
        code(&krflow(
            &["replay", "--manifest", "a/manifest.json", "--out", "b"],
            dir.path()
        )),
        2
    );
    let a = fs::read(dir.path().join("a/trace.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn plot_script_and_rejections() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&krflow(
            &["run", "--grid", "32", "--phi0", "bump:0.2", "--t-max", "0.3", "--out", "o"],
            dir.path()
        )),
        2
    );
    let out = krflow(&["plot", "--trace", "o/trace.csv"], dir.path());
    assert_eq!(code(&out), 0);
    let script = String::from_utf8(out.stdout).unwrap();
    assert_eq!(script.matches("with lines").count(), 5);
    for name in ["nu", "F", "f_gap", "b", "ubar"] {
        assert!(script.contains(&format!("title '{name}'")));
    }

    let csv = fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_owned).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(str::to_owned).collect();
    cells[2] = "NaN".into();
    lines[1] = cells.join(",");
    fs::write(dir.path().join("nan.csv"), lines.join("\n")).unwrap();
    assert_eq!(
        code(&krflow(&["plot", "--trace", "nan.csv"], dir.path())),
        65
    );
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    assert_eq!(
        code(&krflow(&["plot", "--trace", "empty.csv"], dir.path())),
        65
    );
    fs::write(dir.path().join("header.csv"), format!("{}\n", lines[0])).unwrap();
    assert_eq!(
        code(&krflow(&["plot", "--trace", "header.csv"], dir.path())),
        65
    );
    fs::write(dir.path().join("cols.csv"), "t,nu\n0,0\n").unwrap();
    assert_eq!(
        code(&krflow(&["plot", "--trace", "cols.csv"], dir.path())),
        65
    );
    assert_eq!(
        code(&krflow(&["plot", "--trace", "absent.csv"], dir.path())),
        66
    );
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = krflow(&["certify", "--grid", "48", "--out", "ok"], dir.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ok/certificate.json")).unwrap())
            .unwrap();
    assert!(report["residual"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
    let csv = fs::read_to_string(dir.path().join("ok/certificate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);

    let short = krflow(
        &[
            "certify", "--grid", "32", "--t-max", "0.1", "--out", "short",
        ],
        dir.path(),
    );
    assert_eq!(code(&short), 1);
    assert!(String::from_utf8_lossy(&short.stderr).contains("no converged rows"));

    let sigma: Vec<f64> = (0..=20).map(|i| -1.0 + i as f64 / 10.0).collect();
    let good: Vec<f64> = sigma.iter().map(|s| 0.1 * (1.0 - s * s)).collect();
    let bad: Vec<f64> = sigma.iter().map(|s| 50.0 * (1.0 - s * s)).collect();
    write_json(
        &dir.path().join("family.json"),
        serde_json::json!([
            {"label": "good", "sigma": sigma, "values": good},
            {"label": "bad", "sigma": sigma, "values": bad},
        ]),
    );
    let fam = krflow(
        &[
            "certify",
            "--grid",
            "32",
            "--family",
            "family.json",
            "--out",
            "fam",
        ],
        dir.path(),
    );
    assert_eq!(code(&fam), 1);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fam/certificate.json")).unwrap())
            .unwrap();
    assert_eq!(report["rows"][0]["valid"], true);
    assert_eq!(report["rows"][1]["valid"], false);
}
