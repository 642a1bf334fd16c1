use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ktune-bench"))
}

#[test]
fn flags_produce_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let trace = dir.path().join("trace.csv");
    let out = bench()
        .args(["--kernel", "distance", "--mode", "both", "--dim", "32", "--points", "256"])
        .args(["--budget-pct", "2", "--invest-pct", "10", "--wake-ms", "5", "--backend", "synthetic", "--seed", "4"])
        .arg("--report")
        .arg(&report)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let run = &json["runs"][0];
    for key in [
        "explorable_versions",
        "exploration_limit",
        "explored",
        "overhead_generation_ns",
        "overhead_evaluation_ns",
        "overhead_total_ns",
        "overhead_pct",
        "run_time_ns",
        "kernel_calls",
        "tuning_window_ns",
        "duration_to_kernel_life",
        "swaps",
        "final_point",
        "best_point",
    ] {
        assert!(!run[key].is_null() || key == "final_point", "missing {key}");
    }
    assert_eq!(run["kernel_calls"], 256 * 64 * 100);
    let rows = std::fs::read_to_string(&trace).unwrap().lines().count() - 1;
    assert_eq!(run["explored"], rows);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "kernel = \"lintra\"\nbackend = \"synthetic\"\nwidth = 64\nrows = 8\nbands = 2\n\n[surface]\nseed = 3\n",
    )
    .unwrap();
    let report = dir.path().join("r.json");
    let out = bench().arg("--config").arg(&cfg).args(["--rows", "12", "--disable-tuner"]).arg("--report").arg(&report).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["runs"][0]["kernel_calls"], 12);
    assert_eq!(json["runs"][0]["tuner_enabled"], false);
}

#[test]
fn preprofile_then_defaults_from() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = dir.path().join("defaults.toml");
    let out = bench().args(["--dim", "16"]).arg("--preprofile").arg(&defaults).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&defaults).unwrap().contains("[defaults]"));
    let out = bench()
        .args(["--dim", "16", "--points", "128", "--backend", "synthetic"])
        .arg("--defaults-from")
        .arg(&defaults)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = bench().args(["--kernel", "matmul"]).output().unwrap();
    assert!(!out.status.success());
    let out = bench().args(["--budget-pct", "250"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}
