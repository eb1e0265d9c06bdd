use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rhm-lab"))
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = bin().args(["denoise-eps", "--s", "2", "--m", "8", "--L", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--v"));
}

#[test]
fn decreasing_grid_is_a_usage_error() {
    let out = bin()
        .args(["denoise-eps", "--v", "32", "--s", "2", "--m", "8", "--L", "10", "--eps-grid", "1:0:0.1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not increasing"));
}

#[test]
fn infeasible_model_is_a_usage_error() {
    // m v > v^s
    let out = bin().args(["oracle-check", "--v", "2", "--s", "2", "--m", "3", "--L", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for kind in [
        "denoise-eps",
        "denoise-time",
        "meanfield-profile",
        "phase-diagram",
        "iteration-map",
        "eps-map",
        "gaussian-flip",
        "oracle-check",
    ] {
        assert!(text.contains(kind), "{kind}");
    }
}

#[test]
fn output_files_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["denoise-eps", "--v", "8", "--s", "2", "--m", "3", "--L", "5", "--eps-grid", "0:1:0.1", "--trials", "6"],
        &["denoise-time", "--v", "8", "--s", "2", "--m", "3", "--L", "4", "--t-grid", "geometric", "0.01:5:6", "--trials", "5"],
        &["gaussian-flip", "--d", "32", "--T", "50", "--beta-end", "0.2", "--t-fracs", "0:1:0.5", "--trials", "40"],
    ];
    for (k, args) in runs.iter().enumerate() {
        for format in ["csv", "json"] {
            let mut files = Vec::new();
            for workers in ["1", "8"] {
                let path = dir.path().join(format!("{k}-{workers}.{format}"));
                let status = bin()
                    .args(*args)
                    .args(["--seed", "3", "--workers", workers, "--format", format, "--out"])
                    .arg(&path)
                    .status()
                    .unwrap();
                assert!(status.success());
                files.push(std::fs::read(&path).unwrap());
            }
            assert_eq!(files[0], files[1], "{args:?} {format}");
        }
    }
}

#[test]
fn workers_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.csv");
    let out = bin()
        .env("RHM_LAB_WORKERS", "3")
        .args(["oracle-check", "--v", "3", "--s", "2", "--m", "2", "--L", "2", "--trials", "5", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 workers"));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("trial,eps,max_abs_deviation,seed\n"));
}

#[test]
fn stdout_when_no_out_flag() {
    let out = bin().args(["iteration-map", "--v", "32", "--s", "2", "--m", "8", "--L", "10", "--points", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("p,F(p)"));
    assert!(text.ends_with("1.0000000000000000e0,1.0000000000000000e0\n"));
}
