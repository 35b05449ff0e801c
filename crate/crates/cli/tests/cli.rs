use std::process::Command;

use aoi_starve::analytic::DEFAULT_X_GRID;
use aoi_starve::{cmd_analytic, cmd_safety, cmd_simulate, cmd_sweep, config_hash, OutDir, RunSettings, SweepAxis, SweepSpec};
use aoi_starve_core::metrics::TdrKind;
use aoi_starve_core::safety::{builtin_services, default_hazard_windows};
use aoi_starve_core::{AttackMode, Config};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aoi-starve"));
    c.env_remove("AOI_STARVE_OUT");
    c
}

fn short(duration_ms: u64) -> Config {
    Config { sim_duration_ms: duration_ms, ..Config::default() }
}

#[test]
fn analytic_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = bin().args(["analytic", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = std::fs::read_to_string(tmp.path().join("analytic.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("201.500000000"));

    let bad = bin().args(["analytic", "--x", "1", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("degenerate starvation"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "gamma=100\nbogus=1\n").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = bin().args(["simulate", "--set", "p_keep=2", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("occupied");
    std::fs::write(&file, "x").unwrap();
    let out = bin().args(["analytic", "--out"]).arg(&file).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let missing = bin().args(["analytic", "--config", "/nonexistent/aoi.cfg"]).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn env_overrides_out() {
    let tmp = tempfile::tempdir().unwrap();
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    let out = bin().env("AOI_STARVE_OUT", &env).args(["analytic", "--out"]).arg(&flag).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env.join("analytic.csv").exists());
    assert!(!flag.exists());
}

#[test]
fn validate_passes_and_fault_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = bin().args(["validate", "--out"]).arg(tmp.path().join("ok")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = bin().args(["validate", "--fault", "gamma", "--duration-ms", "50000", "--out"]).arg(tmp.path().join("bad")).output().unwrap();
    assert_eq!(bad.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("FAIL sim_vs_analytic_x0 "));
    assert!(stdout.contains("FAIL dtmc_c0_gamma100_p1 "));
    let csv = std::fs::read_to_string(tmp.path().join("bad/validation.csv")).unwrap();
    assert!(csv.contains(",false"));
}

#[test]
fn simulate_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--duration-ms", "5000", "--x", "0.5", "--events", "--seed", "3", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for f in ["config.echo", "summary.json", "metrics.csv", "tdr.csv", "reset_hist.csv", "gap_hist.csv", "events.csv"] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
    let echo = std::fs::read_to_string(tmp.path().join("config.echo")).unwrap();
    assert!(echo.contains("attack_mode=probabilistic\n") && echo.contains("seed=3\n"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["wall_time_s"].is_number());
    let metrics = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert!(!metrics.contains("wall"));
}

#[test]
fn same_seed_same_record() {
    let cfg = short(20_000);
    let s = RunSettings::default();
    let mut a = cmd_simulate(&cfg, &s, None).unwrap();
    let mut b = cmd_simulate(&cfg, &s, None).unwrap();
    a.wall_time_s = 0.0;
    b.wall_time_s = 0.0;
    assert_eq!(a, b);
}

#[test]
fn config_hash_tracks_semantics() {
    let s = RunSettings::default();
    let a = Config::parse("p_keep=0.4\n").unwrap();
    let b = Config::parse("p_keep = 0.40 # same value\n").unwrap();
    assert_eq!(config_hash(&a, &s), config_hash(&b, &s));
    let c = Config::parse("p_keep=0.41\n").unwrap();
    assert_ne!(config_hash(&a, &s), config_hash(&c, &s));
    let mut other = s.clone();
    other.sim.phy.model = aoi_starve_core::sim::PhyModel::Collision;
    assert_ne!(config_hash(&a, &s), config_hash(&a, &other));
    assert_eq!(config_hash(&a, &s).len(), 64);
}

#[test]
fn analytic_grid_convex() {
    let rows = cmd_analytic(&Config::default(), &DEFAULT_X_GRID).unwrap();
    let a: Vec<f64> = rows.iter().map(|r| r.prediction.average_aoi_ms).collect();
    assert_eq!(a[0], 201.5);
    let slopes: Vec<f64> = (1..4).map(|i| (a[i] - a[i - 1]) / (DEFAULT_X_GRID[i] - DEFAULT_X_GRID[i - 1])).collect();
    assert!(slopes.windows(2).all(|w| w[1] > w[0]));
    assert!(rows.iter().all(|r| (r.dtmc_c0_ms.unwrap() - r.prediction.c0_ms).abs() < 1e-9));
}

#[test]
fn sweep_concurrency_does_not_change_results() {
    let spec = SweepSpec { axis: SweepAxis::PKeep, values: vec![0.2, 0.6], replicas_per_point: 3, root_seed: 9 };
    let s = RunSettings::default();
    let strip = |mut t: aoi_starve::SweepTable| {
        t.runs.iter_mut().for_each(|(_, _, r)| r.wall_time_s = 0.0);
        t
    };
    let seq = strip(cmd_sweep(&spec, &short(10_000), &s, 1, None).unwrap());
    let par = strip(cmd_sweep(&spec, &short(10_000), &s, 3, None).unwrap());
    assert_eq!(seq, par);
    assert_eq!(seq.points.len(), 2);
    assert!(seq.points.iter().all(|p| p.replicas == 3 && p.std_aoi_ms > 0.0));
}

#[test]
fn sweep_failure_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = short(5_000);
    cfg.attack.mode = AttackMode::ActiveEve;
    cfg.attack.eve_rri_ms = 2;
    let spec = SweepSpec { axis: SweepAxis::X, values: vec![0.2, 0.8], replicas_per_point: 2, root_seed: 1 };
    let out = OutDir::create(tmp.path()).unwrap();
    let err = cmd_sweep(&spec, &cfg, &RunSettings::default(), 2, Some(&out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("unachievable"));
    let rows = std::fs::read_to_string(tmp.path().join("replicas.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().skip(1).all(|l| l.starts_with("x,0.2,")));
}

#[test]
fn sweep_rejects_bad_values() {
    let spec = SweepSpec { axis: SweepAxis::Phi, values: vec![0.5, 1.5], replicas_per_point: 1, root_seed: 1 };
    assert!(cmd_sweep(&spec, &short(1000), &RunSettings::default(), 1, None).is_err());
    let spec = SweepSpec { axis: SweepAxis::NVehicles, values: vec![10.5], replicas_per_point: 1, root_seed: 1 };
    assert!(cmd_sweep(&spec, &short(1000), &RunSettings::default(), 1, None).is_err());
    let spec = SweepSpec { axis: SweepAxis::X, values: vec![0.1], replicas_per_point: 0, root_seed: 1 };
    assert!(cmd_sweep(&spec, &short(1000), &RunSettings::default(), 1, None).is_err());
}

#[test]
fn safety_needs_every_point() {
    let rec = cmd_simulate(&short(5_000), &RunSettings::default(), None).unwrap();
    let err = cmd_safety(&[rec], &[0.0, 0.5, 0.9], &builtin_services(), &default_hazard_windows(), TdrKind::UpdateGap)
        .unwrap_err();
    assert!(err.to_string().contains("0.5, 0.9"), "{err}");
}

#[test]
fn perfect_delivery_is_safe() {
    let mut cfg = short(20_000);
    cfg.sps.p_keep = 1.0;
    let rec = cmd_simulate(&cfg, &RunSettings::default(), None).unwrap();
    let v = cmd_safety(&[rec], &[0.0], &builtin_services(), &default_hazard_windows(), TdrKind::UpdateGap).unwrap();
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|v| v.slr_gap <= 0.0 && !v.unsafe_), "{v:?}");
}

#[test]
fn safety_from_saved_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, x) in [("b", "0"), ("a", "0.9")] {
        let st = bin()
            .args(["simulate", "--duration-ms", "20000", "--attack-mode", "active-eve", "--phy", "collision", "--x", x, "--out"])
            .arg(tmp.path().join(name))
            .output()
            .unwrap();
        assert_eq!(st.status.code(), Some(0));
    }
    let out_dir = tmp.path().join("safety");
    let out = bin()
        .args(["safety", "--x", "0,0.9", "--from"])
        .arg(tmp.path().join("b"))
        .arg("--from")
        .arg(tmp.path().join("a"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("safety.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 30);
    assert!(csv.starts_with("service,x,measured_tdr,gap,h_s,violation_prob\n"));

    let missing = bin().args(["safety", "--x", "0.5", "--from"]).arg(tmp.path().join("a")).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
