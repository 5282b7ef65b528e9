use std::path::Path;
use std::process::{Command, Output};

fn qlm(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qlm"));
    cmd.args(args).env_remove("QLM_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("QLM_OUTPUT_ROOT", r);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_record(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).expect("json error on stderr")
}

#[test]
fn enumerate_basis_counts() {
    let o = qlm(&["enumerate-basis", "--L", "7"], None);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "33");
    let o = qlm(&["enumerate-basis", "--L", "8", "--formulation", "matterful", "--list"], None);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("61"));
    assert_eq!(lines.count(), 61);
}

#[test]
fn gatecount_csv() {
    let o = qlm(&["gatecount", "--L", "7..12", "--both"], None);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut rows = out.lines();
    assert_eq!(rows.next(), Some("L,formulation,ms,cx,one_body,two_body,two_body_ratio"));
    let rows: Vec<Vec<&str>> = rows.map(|r| r.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    let l7 = rows.iter().find(|r| r[0] == "7" && r[1] == "matterful").unwrap();
    let ratio: f64 = l7[6].parse().unwrap();
    assert!(ratio > 1.0);
    assert!(rows.iter().any(|r| r[0] == "12" && r[1] == "matterful"));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut args = vec!["simulate", "--preset", "meson_meson_g3", "--n-steps", "2", "--seed", "3", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(qlm(&args, None).status.success());
        out
    };
    let a = run("a", &["--engine", "noiseless"]);
    let b = run("b", &["--engine", "noiseless"]);
    let name = "meson_meson_g3__noiseless__seed3";
    for ext in ["charge.csv", "flux.csv", "meta.ndjson"] {
        let x = std::fs::read(a.join(format!("{name}.{ext}"))).unwrap();
        let y = std::fs::read(b.join(format!("{name}.{ext}"))).unwrap();
        assert_eq!(x, y, "{ext} differs");
    }
}

#[test]
fn trajectories_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = vec![];
    for jobs in ["1", "3"] {
        let out = dir.path().join(jobs);
        let o = qlm(
            &[
                "--jobs", jobs, "simulate", "--preset", "l7_g3", "--n-steps", "6", "--engine", "noisy", "--alpha", "0", "--shots", "40",
                "--seed", "9", "--out", out.to_str().unwrap(),
            ],
            None,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(out.join("l7_g3__trajectories__seed9.charge.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = qlm(&["exact", "--preset", "l7_g3", "--n-steps", "2"], Some(dir.path()));
    assert!(o.status.success());
    assert!(dir.path().join("l7_g3__exact__seed0.charge.csv").exists());
}

#[test]
fn config_file_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("run.toml");
    std::fs::write(
        &good,
        format!(
            "schema_version = 1\noutput = \"{}\"\n[protocol]\npreset = \"l7_g3\"\nn_steps = 2\n[engine]\nkind = \"exact\"\n",
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    assert!(qlm(&["simulate", "--config", good.to_str().unwrap()], None).status.success());
    assert!(dir.path().join("out/l7_g3__exact__seed0.meta.ndjson").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\n[protocol]\npreset = \"l7_g3\"\ncolour = \"red\"\n").unwrap();
    let o = qlm(&["simulate", "--config", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "config");
}

#[test]
fn budget_exit_code() {
    let o = qlm(&["compile", "--preset", "meson_meson_g3", "--formulation", "matterful"], None);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["exit_code"], 3);
}

#[test]
fn all_discarded_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = qlm(
        &[
            "simulate", "--preset", "l7_g3", "--n-steps", "8", "--formulation", "matterful", "--engine", "noisy", "--alpha", "0", "--shots",
            "2", "--seed", "0", "--out", dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_record(&o)["error"], "all_trajectories_discarded");
}

#[test]
fn analyze_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = qlm(&["exact", "--preset", "l7_g3", "--n-steps", "4", "--family", "--out", d.to_str().unwrap()], None);
    assert!(o.status.success());
    let meta = |n: &str| d.join(format!("{n}__exact__seed0.meta.ndjson")).to_str().unwrap().to_string();
    let o = qlm(
        &[
            "analyze", "--scat", &meta("l7_g3"), "--left", &meta("l7_g3_free_left"), "--right", &meta("l7_g3_free_right"), "--vacuum",
            &meta("l7_g3_vacuum"),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let derived = std::fs::read_to_string(d.join("l7_g3-free__exact__seed0.charge.csv")).unwrap();
    // Nothing has moved at t = 0, so the subtraction vanishes there.
    let first: Vec<f64> = derived.lines().nth(1).unwrap().split(',').skip(2).map(|x| x.parse().unwrap()).collect();
    assert!(first.iter().all(|x| x.abs() < 1e-12));

    let o = qlm(&["snapshot", "--record", &meta("l7_g3"), "--times", "0,0.5"], None);
    assert!(o.status.success());
    let snap = std::fs::read_to_string(d.join("l7_g3__exact__seed0.snapshots.csv")).unwrap();
    assert_eq!(snap.lines().count(), 3);
    assert!(snap.lines().nth(1).unwrap().starts_with("0,1,0,0,0,0,-1"));

    let o = qlm(&["snapshot", "--record", &meta("l7_g3"), "--times", "0.3"], None);
    assert_eq!(o.status.code(), Some(2));

    // A sidecar from another schema version is refused.
    let path = meta("l7_g3_vacuum");
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"schema_version\":1", "\"schema_version\":2", 1);
    std::fs::write(&path, text).unwrap();
    let o = qlm(&["analyze", "--scat", &meta("l7_g3"), "--vacuum", &path], None);
    assert_eq!(o.status.code(), Some(2));
}
