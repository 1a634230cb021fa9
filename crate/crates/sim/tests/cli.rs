use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim"))
        .args(args)
        .env_remove("QKDSIM_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn field(report: &str, name: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(name).map(|rest| rest.trim().to_owned()))
        .unwrap_or_else(|| panic!("{name} missing from\n{report}"))
}

const IDEAL: &[&str] = &["--photons", "1", "--distance-km", "0", "--efficiency", "1", "--dark", "0"];

#[test]
fn run_is_deterministic() {
    let args = ["run", "--distance-km", "15", "--mu", "0.1", "--seed", "7"];
    let a = qkdsim(&args);
    let b = qkdsim(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn intercept_resend_exits_two() {
    let mut args = vec!["run", "--eve", "intercept:1.0", "--n-pulses", "100000", "--flip", "0", "--seed", "3"];
    args.extend_from_slice(IDEAL);
    let o = qkdsim(&args);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    let qber: f64 = field(&out, "qber").parse().unwrap();
    assert!((qber - 0.25).abs() < 0.03, "{qber}");
    assert_eq!(field(&out, "outcome"), "abort_qber");
}

#[test]
fn ideal_link_has_no_errors() {
    let o = qkdsim(&[
        "run", "--distance-km", "0", "--mu", "0.1", "--efficiency", "1", "--dark", "0", "--flip", "0", "--n-pulses",
        "200000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(field(&out, "qber"), "0");
    assert!(field(&out, "final_len").parse::<usize>().unwrap() > 0);
}

#[test]
fn failed_reconciliation_exits_three() {
    let mut args = vec!["run", "--flip", "0.08", "--n-pulses", "20000", "--cascade-passes", "1", "--seed", "1"];
    args.extend_from_slice(IDEAL);
    let o = qkdsim(&args);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(field(&stdout(&o), "outcome"), "abort_reconciliation");
}

#[test]
fn too_few_bits_exits_five() {
    let o = qkdsim(&["run", "--n-pulses", "100", "--distance-km", "50"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(qkdsim(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(qkdsim(&["run", "--flip", "0.7"]).status.code(), Some(1));
    assert_eq!(qkdsim(&["run", "--eve", "mitm"]).status.code(), Some(1));
    assert_eq!(qkdsim(&[]).status.code(), Some(1));
    assert_eq!(qkdsim(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nmu = 0.1\nefficency = 0.5\n").unwrap();
    let o = qkdsim(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("efficency"), "{err}");

    std::fs::write(&bad, "seed = 1\n\ndark = 2\n").unwrap();
    let o = qkdsim(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml:3: dark"), "{}", stderr(&o));
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 1\nn_pulses = 50000\ndistance_km = 40\n").unwrap();
    let o = qkdsim(&["run", "--config", cfg.to_str().unwrap(), "--distance-km", "5", "--format", "csv"]);
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert_eq!(row[1], "5");
    assert_eq!(row[4], "50000");
}

#[test]
fn config_dir_env_is_searched() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), "seed = 9\nn_pulses = 30000\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qkdsim"))
        .args(["run", "--config", "tiny.toml", "--format", "csv"])
        .env("QKDSIM_CONFIG_DIR", dir.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("9,"));
}

#[test]
fn sweep_matches_golden_file() {
    let cfg = manifest("tests/golden/sweep_small.toml");
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden = std::fs::read_to_string(manifest("tests/golden/sweep_small.csv")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn sweep_is_stable_across_thread_counts() {
    let cfg = manifest("tests/golden/sweep_small.toml");
    let one = qkdsim(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    let many = qkdsim(&["sweep", "--config", cfg.to_str().unwrap(), "--jobs", "8"]);
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn sweep_guards() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "n_pulses = 10000\n[sweep]\ndistance_km = []\n").unwrap();
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("axis"));
    assert_eq!(qkdsim(&["sweep"]).status.code(), Some(1));

    std::fs::write(&cfg, "n_pulses = 10000\n[sweep]\nmu = [0.1, 0.2]\n").unwrap();
    let out = dir.path().join("out.csv");
    std::fs::write(&out, "keep me").unwrap();
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "keep me");
    let o = qkdsim(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--force"]);
    assert_eq!(o.status.code(), Some(0));
    let written = std::fs::read_to_string(&out).unwrap();
    assert_eq!(written.lines().count(), 3);
    assert!(written.starts_with("seed,distance_km,mu,eve,"));
}

#[test]
fn network_line_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("relays.csv");
    let o = qkdsim(&["network", manifest("configs/line.toml").to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("relay: knows relayed keys #0"), "{out}");
    assert!(out.contains("alice: knows relayed keys none"));
    assert!(out.contains("end keys match"));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        rows,
        "relay,path,key_len,hops,exposed,keys_match\n0,alice>relay>bob,256,2,relay,true\n"
    );
}

#[test]
fn network_underfunded_hop_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(manifest("configs/line.toml"))
        .unwrap()
        .replace("seed = 12, bits = 1024", "seed = 12, bits = 128");
    let path = dir.path().join("short.toml");
    std::fs::write(&path, text).unwrap();
    let o = qkdsim(&["network", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("hop relay -> bob"), "{}", stderr(&o));
}

#[test]
fn network_full_pipeline_uses_weakest_link() {
    let o = qkdsim(&["network", manifest("configs/metro.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let deposits: Vec<usize> = out
        .lines()
        .filter(|l| l.contains("bits deposited"))
        .map(|l| l.split(": ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(deposits.len(), 2);
    let relayed: usize = out
        .lines()
        .find(|l| l.contains("#0 alice"))
        .and_then(|l| l.split(": ").nth(1))
        .and_then(|r| r.split(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(relayed, *deposits.iter().min().unwrap());
}

#[test]
fn selftest_passes() {
    let o = qkdsim(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn shipped_configs_parse() {
    for name in ["desk.toml", "distance_sweep.toml", "eve_sweep.toml"] {
        let text = std::fs::read_to_string(manifest(&format!("configs/{name}"))).unwrap();
        let loaded = qkd_sim::config::LoadedConfig::from_text(&text, name).unwrap();
        loaded.session_config().unwrap();
    }
    for name in ["line.toml", "metro.toml"] {
        let text = std::fs::read_to_string(manifest(&format!("configs/{name}"))).unwrap();
        qkd_sim::scenario::Scenario::parse(&text, name).unwrap();
    }
}
