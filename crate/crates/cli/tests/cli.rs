use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bgmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgmac")).args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const THERMAL_SWEEP: &str = r#"{
  "channel": {"interference": {"eta": [0.9, 0.1], "bgc": {"class": "thermal-loss", "w2": 0.1, "nb": 0.1}}},
  "sweep": {"from": 1e-5, "to": 1, "points": 6, "split": [0.9, 0.1]}
}"#;

const REGION: &str = r#"{
  "channel": {"interference": {"eta": [0.3333333333333333, 0.6666666666666666],
                               "bgc": {"class": "thermal-loss", "w2": 0.1, "nb": 0.1}}},
  "ns": [1, 2]
}"#;

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn ea_total_sweep_writes_expected_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ea.json", THERMAL_SWEEP);
    let out = dir.path().join("ea.csv");
    let res = bgmac(&["ea-total", "--config", s(&cfg), "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = parse_csv(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(&header[..4], ["N_S", "ea_rate", "coherent_rate", "ratio"]);
    assert_eq!(rows.len(), 6);
    let mut last_ratio = f64::INFINITY;
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|c| c.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[4]);
        // advantage grows as the input gets dimmer
        assert!(v[3] < last_ratio);
        last_ratio = v[3];
    }
    // 12 significant digits
    assert_eq!(rows[0][0], "1.00000000000e-5");
}

#[test]
fn gaussian_region_is_reproducible_and_writes_hull() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "region.json", REGION);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = bgmac(&["gaussian-region", "--config", s(&cfg), "--out", s(out), "--rays", "6", "--seed", "7"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ha = std::fs::read(dir.path().join("a.hull.json")).unwrap();
    assert_eq!(ha, std::fs::read(dir.path().join("b.hull.json")).unwrap());

    let hull: serde_json::Value = serde_json::from_slice(&ha).unwrap();
    assert_eq!(hull["rays"].as_array().unwrap().len(), 6);
    assert_eq!(hull["hull"][0], serde_json::json!([0.0, 0.0]));

    let (header, rows) = parse_csv(&std::fs::read_to_string(&a).unwrap());
    assert_eq!(header, ["phi", "R1", "R2", "r1", "r2", "theta2", "iterations", "converged"]);
    assert_eq!(rows.len(), 6);
}

#[test]
fn json_format_is_structured() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ea.json", THERMAL_SWEEP);
    let res = bgmac(&["outer-bounds", "--config", s(&cfg), "--format", "json"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["columns"][3], "condition");
    assert!(!v["rows"].as_array().unwrap().is_empty());
}

#[test]
fn empty_budget_gives_zero_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "zero.json",
        r#"{"channel": {"interference": {"eta": [0.5, 0.5], "bgc": {"class": "thermal-loss", "w2": 0.1, "nb": 0.1}}}, "ns": [0, 0]}"#,
    );
    for cmd in ["ea-total", "coherent-region", "outer-bounds", "gaussian-region"] {
        let res = bgmac(&[cmd, "--config", s(&cfg), "--rays", "2"]);
        assert_eq!(res.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
        let (header, rows) = parse_csv(&String::from_utf8(res.stdout).unwrap());
        for row in rows {
            for (h, c) in header.iter().zip(row) {
                let is_rate = ["ea", "coh", "unassisted", "R"].iter().any(|p| h.starts_with(p));
                if is_rate {
                    assert_eq!(c.parse::<f64>().unwrap(), 0.0, "{cmd} column {h}");
                }
            }
        }
    }
}

#[test]
fn missing_or_malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let res = bgmac(&["ea-total", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(res.status.code(), Some(2));
    let cfg = write_config(&dir, "bad.json", r#"{"channel": {"s": 1}}"#);
    assert_eq!(bgmac(&["ea-total", "--config", s(&cfg)]).status.code(), Some(2));
    let cfg = write_config(
        &dir,
        "mismatch.json",
        r#"{"channel": {"s": 1, "w": [[0.5, 0]], "delta": [0], "nb": 0.1}, "ns": [1, 2]}"#,
    );
    assert_eq!(bgmac(&["ea-total", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(bgmac(&["ea-total"]).status.code(), Some(2));
}

#[test]
fn unphysical_channel_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{"channel": {"s": 1, "w": [[1.2, 0]], "delta": [1], "nb": 0.1}, "ns": [1]}"#,
    );
    let res = bgmac(&["ea-total", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unphysical"));
}

#[test]
fn non_convergence_exits_4_with_partial_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "nc.json",
        r#"{"channel": {"interference": {"eta": [0.3333333333333333, 0.6666666666666666],
                                         "bgc": {"class": "amplifier", "w2": 1.1, "nb": 0.2}}},
            "ns": [1, 2], "optimizer": {"max_iter": 2}}"#,
    );
    let out = dir.path().join("nc.csv");
    let res = bgmac(&["gaussian-region", "--config", s(&cfg), "--out", s(&out), "--rays", "3"]);
    assert_eq!(res.status.code(), Some(4));
    let (_, rows) = parse_csv(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 3);
}

#[test]
fn oracle_flag_adds_agreeing_fock_column() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "pt.json",
        r#"{"channel": {"s": 1, "w": [[0.7745966692414834, 0]], "delta": [0], "nb": 0.2}, "ns": [0.5]}"#,
    );
    let res = bgmac(&["point-capacity", "--config", s(&cfg), "--oracle"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = parse_csv(&String::from_utf8(res.stdout).unwrap());
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let gauss: f64 = rows[0][col("ea_rate_cm")].parse().unwrap();
    let fock: f64 = rows[0][col("fock_rate")].parse().unwrap();
    assert!((gauss - fock).abs() < 1e-3);

    assert!(bgmac(&["oracle-check", "--config", s(&cfg)]).status.success());
}

#[test]
fn memory_command_reports_ea_advantage() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "mem.json",
        r#"{"epsilon": 0.5, "gamma": 0.5, "n": 2, "nb": 0.1, "eta": [0.9, 0.1], "ns": [0.009, 0.001]}"#,
    );
    let res = bgmac(&["memory", "--config", s(&cfg)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (_, rows) = parse_csv(&String::from_utf8(res.stdout).unwrap());
    let ratio: f64 = rows[0][3].parse().unwrap();
    assert!(ratio > 1.0);
}
