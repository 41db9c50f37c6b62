use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rdfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdfl")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rdfl-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write(name: &str, text: &str) -> String {
    let p = temp(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
seed = 3
T = 100
K = 10
[trainer]
kind = "least_squares"
dim = 4
samples = 300
[[nodes]]
id = "a"
address = "10.0.0.1"
[[nodes]]
id = "b"
address = "10.0.0.2"
[[nodes]]
id = "c"
address = "10.0.0.3"
trusted = false
"#;

#[test]
fn topology_six_provider_layout() {
    let out = rdfl(&["topology", "--config", &scenario("paper_fig1.cfg")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("DP_2 -> DP_4\n"));
    assert!(text.contains("DP_3 -> DP_4\n"));
    assert!(text.contains("DP_5 -> DP_6\n"));
}

#[test]
fn run_writes_rows_and_summary() {
    let cfg = write("small.cfg", SMALL);
    let out_path = temp("small.csv");
    let out = rdfl(&["run", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("round,t,participants,excluded,checksum"));
    assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 1 + 10);
    assert!(lines[1].starts_with("1,10,a;b,c,"));
    let summary: serde_json::Value = serde_json::from_str(lines.last().unwrap().strip_prefix("# summary ").unwrap()).unwrap();
    assert_eq!(summary["rounds"], 10);
    assert_eq!(summary["seed"], 3);

    let stdout = rdfl(&["run", "--config", &cfg, "--seed", "4"]);
    assert!(stdout.status.success());
    assert_ne!(String::from_utf8(stdout.stdout).unwrap(), text);
}

#[test]
fn jobs_fan_out_matches_serial() {
    let a = write("job_a.cfg", SMALL);
    let b = write("job_b.cfg", &SMALL.replace("seed = 3", "seed = 8"));
    let dir = temp("jobs");
    let out = rdfl(&["run", "--config", &a, "--config", &b, "--jobs", "2", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (cfg, name) in [(&a, "job_a.csv"), (&b, "job_b.csv")] {
        let serial = rdfl(&["run", "--config", cfg]);
        assert_eq!(std::fs::read(dir.join(name)).unwrap(), serial.stdout);
    }
}

#[test]
fn config_errors_exit_2() {
    let bad_k = write("bad_k.cfg", &format!("K = 0\n{}", SMALL.replace("K = 10\n", "")));
    let out = rdfl(&["topology", "--config", &bad_k]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('K'));

    let unknown = write("unknown.cfg", &SMALL.replace("dim = 4", "dim = 4\ndepth = 2"));
    let out = rdfl(&["run", "--config", &unknown]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trainer.depth"));

    assert_eq!(rdfl(&["bench-comm", "--n-min", "1"]).status.code(), Some(2));
    assert_eq!(rdfl(&["bench-comm", "--n-max", "65"]).status.code(), Some(2));
    assert_eq!(rdfl(&["run", "--config", "/nonexistent.cfg"]).status.code(), Some(2));
}

#[test]
fn bench_comm_rows() {
    let out = rdfl(&["bench-comm", "--n-min", "2", "--n-max", "6", "--model-bytes", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("kind,N,M_bytes,times,pressure_bytes,total_bytes,max_node_egress,"));
    assert!(text.contains("\nRDFL,5,1,4,1,20,"));
    assert!(text.contains("\nRDFL,2,1,1,1,2,"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 15);
    assert!(text.contains("physical_total=20"));
}

#[test]
fn verify_passes_and_fault_fails() {
    let out = rdfl(&["verify"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("FAIL"));
    assert!(text.contains("PASS model::fedavg_order_invariant"));

    let out = rdfl(&["verify", "--inject-fault", "fedavg-order"]);
    assert_eq!(out.status.code(), Some(5));
    let text = String::from_utf8(out.stdout).unwrap();
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].contains("fedavg_order_invariant"));
}

#[test]
fn gan_scenario_summary_within_tolerance() {
    let out = rdfl(&["run", "--config", &scenario("ksweep_k200.cfg")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(text.lines().last().unwrap().strip_prefix("# summary ").unwrap()).unwrap();
    let mean = summary["generator"]["mean"].as_f64().unwrap();
    assert!((mean - 3.0).abs() <= 0.5, "{mean}");
}
