use std::path::Path;
use std::process::{Command, Output};

fn natlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_natlift"))
        .args(args)
        .output()
        .expect("run natlift")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("report is JSON")
}

fn check<'a>(r: &'a serde_json::Value, name: &str) -> &'a serde_json::Value {
    r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn sasaki_euclidean_passes_with_tiny_residuals() {
    let o = natlift(&["verify", "--preset", "sasaki", "--base", "euclidean:2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    assert_eq!(r["passed"], true);
    for c in r["checks"].as_array().unwrap() {
        assert!(c["measured"].as_f64().unwrap() < 1e-8, "{c}");
    }
}

#[test]
fn theorem4_example_exits_zero() {
    let o = natlift(&[
        "verify",
        "--preset",
        "theorem4",
        "--alpha",
        "poly:1,1",
        "--beta",
        "const:0.5",
        "--c",
        "1",
        "--base",
        "euclidean:2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sasaki_sphere_is_not_constant_curvature() {
    let o = natlift(&[
        "verify",
        "--preset",
        "sasaki",
        "--base",
        "sphere:2:1",
        "--expect-constant-curvature",
    ]);
    assert_eq!(code(&o), 1);
    let r = report(&o);
    let spread = check(&r, "sectional_spread");
    assert!(spread["measured"].as_f64().unwrap() > 0.1);
    assert_eq!(spread["status"], "fail");
    assert!(spread["worst"]["entry"].is_string());
    // Without the flag the same numbers are reported but do not fail the run.
    let o = natlift(&["verify", "--preset", "sasaki", "--base", "sphere:2:1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(check(&report(&o), "sectional_spread")["enforced"], false);
}

#[test]
fn failed_checks_name_a_point_and_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"base":"sphere:2:1","lift":{"preset":"cheeger-gromoll"},
            "tolerances":{"fd":1e-12},"timings":false}"#,
    )
    .unwrap();
    let o = natlift(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let r = report(&o);
    for c in r["checks"].as_array().unwrap() {
        if c["status"] == "fail" {
            assert!(c["worst"]["point_id"].is_u64(), "{c}");
            assert!(c["worst"]["entry"].is_string(), "{c}");
        }
    }
    assert!(r.get("timings").is_none());
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("report.json");
    std::fs::write(
        &cfg,
        r#"{"base":{"kind":"euclidean","dim":3},
            "lift":{"explicit":{"c1":{"const":2},"c2":{"ratio":{"num":[1],"den":[1,2]}},"d2":{"const":0.1}}},
            "sample":{"points":4,"planes":6,"seed":3}}"#,
    )
    .unwrap();
    let o = natlift(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["config"]["sample"]["seed"], 11);
    assert_eq!(r["config"]["sample"]["points"], 4);
    assert_eq!(r["sectional"].as_array().unwrap().len(), 6);
    assert_eq!(r["dim"], 3);
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["verify", "--config", bad.to_str().unwrap()],
        vec!["verify", "--config", "/definitely/not/here.json"],
        vec!["verify", "--base", "euclidean:2"],
        vec!["verify", "--preset", "sasaki"],
        vec!["verify", "--preset", "sasaki", "--base", "torus:2"],
        vec![
            "verify",
            "--preset",
            "theorem4",
            "--alpha",
            "poly:1,1",
            "--base",
            "euclidean:2",
        ],
        vec!["verify", "--preset", "sasaki", "--base", "euclidean:2", "--points", "0"],
        vec![
            "verify",
            "--preset",
            "sasaki",
            "--base",
            "euclidean:2",
            "--alpha",
            "poly:1",
        ],
        vec!["decompose", "--preset", "sasaki", "--base", "euclidean:2"],
        vec![
            "decompose",
            "--preset",
            "sasaki",
            "--base",
            "euclidean:3",
            "--family",
            "XYZW",
        ],
        vec!["verify", "--seed", "-1"],
        vec!["nonsense"],
    ];
    for args in cases {
        assert_eq!(code(&natlift(&args)), 2, "{args:?}");
    }
}

#[test]
fn degenerate_theorem4_member_is_a_config_error() {
    let o = natlift(&[
        "verify",
        "--preset",
        "theorem4",
        "--alpha",
        "const:1",
        "--beta",
        "const:1",
        "--c",
        "1",
        "--base",
        "euclidean:2",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("c1 c2 - c3^2 > 0"));
}

#[test]
fn scan_csv_is_deterministic_and_has_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let o = natlift(&[
            "scan",
            "--preset",
            "cheeger-gromoll",
            "--base",
            "sphere:2:1",
            "--seed",
            seed,
            "--planes",
            "30",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read(p).unwrap()
    };
    let a = run("a.csv", "5");
    assert_eq!(a, run("b.csv", "5"));
    assert_ne!(a, run("c.csv", "6"));
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sample_id,point_id,x0,x1,y0,y1,X0,X1,X2,X3,Y0,Y1,Y2,Y3,k_value"
    );
    assert_eq!(lines.count(), 30);
}

#[test]
fn scan_spread_on_sasaki_sphere() {
    let o = natlift(&["scan", "--preset", "sasaki", "--base", "sphere:2:1", "--planes", "200"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let ks: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let (lo, hi) = ks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), k| (a.min(*k), b.max(*k)));
    assert_eq!(ks.len(), 200);
    assert!(hi - lo > 0.1);
}

#[test]
fn scan_to_unwritable_path_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("out.csv");
    assert!(!Path::new(target.parent().unwrap()).exists());
    let o = natlift(&[
        "scan",
        "--preset",
        "sasaki",
        "--base",
        "euclidean:2",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn decompose_reports_ten_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"base":"euclidean:3",
            "lift":{"explicit":{"c1":{"const":2},"c2":{"const":2},"c3":{"const":1},"d1":{"const":1}}},
            "sample":{"points":3,"fiber_range":[-0.2,0.2]}}"#,
    )
    .unwrap();
    let o = natlift(&[
        "decompose",
        "--config",
        cfg.to_str().unwrap(),
        "--family",
        "yxxy",
        "--k",
        "0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    let d = &r["decomposition"];
    assert_eq!(d["family"], "YXXY");
    assert_eq!(d["basis"].as_array().unwrap().len(), 10);
    for row in d["rows"].as_array().unwrap() {
        let alpha: Vec<f64> = row["alpha"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(alpha.len(), 10);
        // −c₁d₁ / (2(c₁c₂ − c₃²)) = −1/3
        assert!((alpha[2] + 1.0 / 3.0).abs() < 1e-9, "{alpha:?}");
    }
}

#[test]
fn decompose_self_difference_vanishes_on_flat_sasaki() {
    let o = natlift(&[
        "decompose",
        "--preset",
        "sasaki",
        "--base",
        "euclidean:3",
        "--family",
        "XXXX",
    ]);
    assert_eq!(code(&o), 0);
    let r = report(&o);
    for row in r["decomposition"]["rows"].as_array().unwrap() {
        for a in row["alpha"].as_array().unwrap() {
            assert!(a.as_f64().unwrap().abs() < 1e-12);
        }
    }
}

#[test]
fn report_without_timings_is_reproducible_from_its_config_echo() {
    let args = [
        "verify",
        "--preset",
        "cheeger-gromoll",
        "--base",
        "sphere:2:1",
        "--seed",
        "3",
        "--points",
        "4",
        "--no-timings",
    ];
    let first = natlift(&args);
    assert_eq!(first.stdout, natlift(&args).stdout);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("echo.json");
    std::fs::write(&cfg, report(&first)["config"].to_string()).unwrap();
    let again = natlift(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(first.stdout, again.stdout);
}
