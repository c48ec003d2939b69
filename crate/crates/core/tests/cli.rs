use std::path::Path;
use std::process::{Command, Output};

fn risloc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_risloc"));
    cmd.args(args).env_remove("RIS_SIM_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    std::fs::write(
        &path,
        r#"{"signal": {"num_subcarriers": 32, "num_symbols": 8},
            "ris": {"legit_dims": [4, 4], "unauth_dims": [4, 4]},
            "experiment": {"trials": 2, "powers_dbm": [20],
                           "ris_grid": {"x_range": [-5, 5], "y_range": [-3, 7], "z": 0, "nx": 3, "ny": 2}}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bounds_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = risloc(&["--config", &cfg, "--codebook-unauth", "rpdc", "bounds"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("schema_version,kind,sweep_index,power_dbm,strategy"));
    assert!(lines[1].starts_with("1,bounds,0,2.000000000000e1,rpdc,"));
}

#[test]
fn heatmap_ris_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let csv = dir.path().join("h.csv");
    let out = risloc(
        &["--config", &cfg, "--scenario", "2", "--out", csv.to_str().unwrap(), "heatmap-ris"],
        &[("RIS_SIM_THREADS", "1")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(&csv).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|x| &x[1] == "heatmap_ris" && &x[5] == "2"));
}

#[test]
fn sweep_reports_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = risloc(&["--config", &cfg, "--trials", "3", "sweep-power"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    let trials = headers.iter().position(|h| h == "trials").unwrap();
    assert_eq!(&row[trials], "3");
    let fine = headers.iter().position(|h| h == "fine_rmse_tau_rl").unwrap();
    assert!(row[fine].parse::<f64>().unwrap().is_finite());
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = risloc(&["--config", &cfg, "selftest"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("selftest passed"));
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"signal": {"bogus": 1}}"#).unwrap();
    assert_eq!(risloc(&["--config", bad.to_str().unwrap(), "bounds"], &[]).status.code(), Some(1));
    assert_eq!(risloc(&["--config", "/no/such/file.json", "bounds"], &[]).status.code(), Some(1));
    assert_eq!(risloc(&["bounds"], &[("RIS_SIM_THREADS", "many")]).status.code(), Some(1));
    assert_eq!(risloc(&["cdf", "--samples", "3"], &[]).status.code(), Some(1));
    assert_eq!(risloc(&[], &[]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = risloc(&["--config", &cfg, "--out", "/no/such/dir/x.csv", "bounds"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
