use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn d3s(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d3s"))
        .args(args)
        .env("D3S_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("d3s-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn casestudy_short_writes_three_drone_front_and_rates() {
    let out = scratch("short");
    let o = d3s(&["run", "--mode", "casestudy-short", "--seed", "7", "--slots", "12", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.join("casestudy-short_seed7");
    let front = rows(&dir.join("front.csv"));
    assert_eq!(front[0].join(","), "k,f_T_seconds,violation,plan_id");
    assert!(front[1..].iter().any(|r| r[0] == "3" && r[2] == "0.000"));
    let rates = rows(&dir.join("rates.csv"));
    assert_eq!(rates[0].join(","), "slot,time_s,device,rate_bps,min_rate_bps,below_min");
    assert_eq!(rates.len(), 1 + 12 * 10);
    for f in ["energy.csv", "routing.csv", "timeline.csv", "trajectories.csv", "summary.txt", "scenario.toml"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn oracle_mode_has_empty_count_diff() {
    let out = scratch("oracle");
    let o = d3s(&["run", "--mode", "oracle", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("f_U only in oracle: []"), "{text}");
    assert!(text.contains("f_U only in heuristic: []"), "{text}");
    let exact = rows(&out.join("oracle_seed3").join("oracle_front.csv"));
    assert_eq!(exact[0].join(","), "k,f_T_seconds,violation,plan_id");
    assert!(exact.len() > 1);
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn missing_scenario_exits_2_naming_the_path() {
    let out = scratch("missing");
    let o = d3s(&["run", "--scenario", "/no/such/scenario.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("/no/such/scenario.toml"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn invalid_scenario_and_flags_exit_2() {
    let out = scratch("invalid");
    fs::create_dir_all(&out).unwrap();
    let bad = out.join("bad.toml");
    fs::write(&bad, "seed = 1\n[request]\n").unwrap();
    let o = d3s(&["run", "--scenario", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = d3s(&["run", "--mode", "dimension-only", "--power-sweep", "1,-2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn power_sweep_levels_off_and_helikite_is_lowest() {
    let out = scratch("sweep");
    let o = d3s(&[
        "run", "--mode", "dimension-only", "--seed", "7", "--power-sweep", "0.25,0.5,1,2", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = rows(&out.join("dimension_seed7").join("rate_vs_power.csv"));
    assert_eq!(t[0].join(","), "platform,power_W,uav_count,min_rate_bps,plan_id");
    let drone: Vec<f64> = t[1..].iter().filter(|r| r[0] == "drone").map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(drone.len(), 4);
    assert!(drone.windows(2).all(|w| w[1] >= w[0]));
    assert!((drone[3] - drone[2]) / drone[2] < 0.1);
    let kite: f64 = t.iter().find(|r| r[0] == "helikite").unwrap()[3].parse().unwrap();
    assert!(kite < drone[0]);
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn generated_scenario_reruns_identically() {
    let out = scratch("rerun");
    let o = out.to_str().unwrap();
    assert!(d3s(&["run", "--mode", "casestudy-short", "--seed", "2", "--slots", "6", "--out", o]).status.success());
    let first = out.join("casestudy-short_seed2");
    let file = first.join("scenario.toml");
    let again = out.join("again");
    let args = ["run", "--scenario", file.to_str().unwrap(), "--mode", "casestudy-short", "--slots", "6", "--out"];
    let mut a = args.to_vec();
    a.push(again.to_str().unwrap());
    assert!(d3s(&a).status.success());
    let second = again.join("casestudy-short_seed2");
    for f in ["front.csv", "rates.csv", "energy.csv", "routing.csv", "timeline.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    fs::remove_dir_all(&out).unwrap();
}
