use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_movingwall"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
seed = 3
[model]
wall = { kind = "linear", l0 = 100.0, q = 0.5 }
[initial]
kind = "coefficients"
basis = "moving"
re = [0.8, 0.0, 0.2]
im = [0.0, 0.6, 0.1]
[time]
values = [0.0, 1.0, 2.5]
[space]
start = 10.0
stop = 90.0
count = 9
[deltaj]
eps = [1e-3, 1e-4]
[bohm]
samples = 4
"#;

fn error_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

#[test]
fn malformed_scenario_exits_with_two_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.toml", "[model]\nwall = { kind = \"linear\", l0 = 100.0 \n");
    let out = dir.path().join("out");
    let o = run(&["observables", "--scenario", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let err = error_json(&o);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("line"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_keys_and_bad_grids_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for (name, text) in [
        ("extra.toml", SMALL.replace("seed = 3", "seed = 3\ncolour = 1")),
        ("grid.toml", SMALL.replace("[0.0, 1.0, 2.5]", "[0.0, 2.5, 1.0]")),
        ("norm.toml", SMALL.replace("re = [0.8, 0.0, 0.2]", "re = [0.0, 0.0, 0.0]").replace("im = [0.0, 0.6, 0.1]", "")),
        (
            "backend.toml",
            SMALL.replace("kind = \"linear\", l0 = 100.0, q = 0.5", "kind = \"static\", l0 = 100.0"),
        ),
    ] {
        let p = write(dir.path(), name, &text);
        let o = run(&["observables", "--scenario", p.to_str().unwrap()], &out);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
}

#[test]
fn numerical_alarm_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let text = SMALL
        .replace("re = [0.8, 0.0, 0.2]", "re = [0.0, 1.0]")
        .replace("im = [0.0, 0.6, 0.1]", "")
        .replace("samples = 4", "starts = [50.0]");
    let p = write(dir.path(), "node.toml", &text);
    let out = dir.path().join("out");
    let o = run(&["bohm", "--scenario", p.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    let kind = error_json(&o)["error"].as_str().unwrap().to_string();
    assert!(kind == "NodeApproach" || kind == "NodeGuard", "{kind}");
    assert!(!out.exists());
}

#[test]
fn csv_header_contract() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("out");
    let o = run(&["observables", "--scenario", p.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["density", "current", "weak_re", "weak_im", "quantum_potential"] {
        let text = fs::read_to_string(out.join(format!("{f}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# units: au");
        assert!(lines[1].starts_with("# t: time, x: length, value: "));
        assert_eq!(lines[2], "t,x,value,light_cone_tag");
        assert_eq!(lines.len(), 3 + 27);
        for row in &lines[3..] {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 4);
            let v: f64 = cols[2].parse().unwrap();
            assert_eq!(format!("{v:.16e}"), cols[2]);
            assert!(cols[3] == "inside" || cols[3] == "outside");
        }
    }
}

#[test]
fn every_command_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "s.toml", SMALL);
    for cmd in ["evolve", "observables", "deltaj", "bohm"] {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        for out in [&a, &b] {
            let o = run(&[cmd, "--scenario", p.to_str().unwrap(), "--seed", "9"], out);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        assert_same_dirs(&a, &b);
    }
}

#[test]
fn spectral_backend_agrees_with_analytic() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "s.toml", SMALL);
    let read = |backend: &str| {
        let out = dir.path().join(backend);
        let o = run(&["observables", "--scenario", p.to_str().unwrap(), "--backend", backend], &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(out.join("density.csv")).unwrap();
        text.lines()
            .skip(3)
            .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
            .collect::<Vec<_>>()
    };
    let (a, s) = (read("analytic"), read("spectral"));
    for (x, y) in a.iter().zip(&s) {
        assert!((x - y).abs() < 1e-7, "{x} vs {y}");
    }
}

#[test]
fn fig2_series() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("fig2");
    let o = run(&["fig2"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = |name: &str| -> Vec<(f64, f64)> {
        fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .skip(3)
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                (c[0].parse().unwrap(), c[2].parse().unwrap())
            })
            .collect()
    };
    let moving = series("fig2_moving.csv");
    assert_eq!(moving.len(), 141);
    for (t, v) in &moving {
        assert!((v - 0.5 * 2.27 / (100.0 + 0.5 * t)).abs() < 1e-10);
    }
    let fixed = series("fig2_static.csv");
    assert_eq!(fixed.len(), 141);
    let gap = moving.iter().zip(&fixed).map(|(m, f)| (m.1 - f.1).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-9, "{gap}");
    let spread = fixed.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
        - fixed.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    assert!(spread > 1e-4, "{spread}");
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("out");
    let o = run(&["protocol", "--scenario", p.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["tail", "--scenario", p.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn protocol_report_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(scenario("protocol.toml"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("calibration"))
        .collect::<Vec<_>>()
        .join("\n")
        .replace("modes = 40000", "modes = 4000")
        .replace("ensemble = 200000", "ensemble = 20000");
    let p = write(dir.path(), "p.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["protocol", "--scenario", p.to_str().unwrap(), "--threads", "2"], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_same_dirs(&a, &b);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("protocol.json")).unwrap()).unwrap();
    assert_eq!(report["run"]["before_light_cone"], true);
    assert!(report["run"]["t_f"].as_f64().unwrap() < report["setup"]["t_s"].as_f64().unwrap());
}

fn assert_same_dirs(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}
