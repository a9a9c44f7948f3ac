use std::fs;
use std::path::Path;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_passage-ldp"))
}

fn data_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

fn column(path: &Path, name: &str) -> usize {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    reader.headers().unwrap().iter().position(|h| h == name).unwrap()
}

#[test]
fn profile_mode_writes_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("profile.csv");
    let status = cli()
        .args(["profile", "--model", "gaussian mean=-1 var=1", "--rho", "0.5", "--u", "3,5"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# schema=1\n"));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 2);
    let get = |name: &str| rows[0][column(&out, name)].parse::<f64>().unwrap();
    assert_eq!(get("alpha"), 1.5);
    assert_eq!(get("alpha_bar"), 2.25);
    assert_eq!(get("alpha_zero"), 2.0);
    assert_eq!(get("k_u"), 6.0);
}

#[test]
fn zero_samples_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = cli()
        .args(["compare", "--model", "gaussian mean=-1 var=1", "--rho", "0.5", "--u", "3", "--samples", "0"])
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("config error"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn bad_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let output = cli()
        .args(["profile", "--model", "gaussian mean=1 var=1", "--rho", "0.5", "--u", "3"])
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    let out = dir.path().join("asym.csv");
    fs::write(
        &config,
        format!(
            "mode = asymptotic\nmodel = gaussian mean=-1 var=1\nrho = 0.5\nu = 3\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let status = cli()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .args(["--u", "3,5,10"])
        .status()
        .unwrap();
    assert!(status.success());
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 3);
    let idx = column(&out, "asymptotic_log");
    let logs: Vec<f64> = rows.iter().map(|r| r[idx].parse().unwrap()).collect();
    assert!(logs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn constant_mode_rows_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("constant.csv");
    let status = cli()
        .args(["constant", "--model", "gaussian mean=-1 var=1", "--rho", "0.5", "--L", "25,50,100"])
        .args(["--samples", "20000", "--seed", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 3);
    let flag = column(&out, "stabilized");
    assert!(rows.iter().all(|r| &r[flag] == "true" || &r[flag] == "false"));

    let report = cli().arg("report").arg(&out).output().unwrap();
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let curve = dir.path().join("constant_curve.csv");
    let mut reader = csv::Reader::from_path(&curve).unwrap();
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(records.len() > 100);
    for r in &records {
        assert_eq!(&r[4], &r[5], "x_intercept must equal alpha_bar");
    }
    assert_eq!(records[0][5].parse::<f64>().unwrap(), 2.25);
    assert!(dir.path().join("constant_ratios.csv").exists());
}

#[test]
fn compare_mode_has_oracle_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("compare.csv");
    let status = cli()
        .args(["compare", "--model", "gaussian mean=-1 var=1", "--rho", "0.5", "--u", "3,20"])
        .args(["--samples", "20000", "--L", "50", "--h", "0.02"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = data_rows(&out);
    let oracle = column(&out, "oracle_value");
    let ratio = column(&out, "ratio");
    assert!(!rows[0][oracle].is_empty());
    assert!(rows[1][oracle].is_empty());
    let r: f64 = rows[0][ratio].parse().unwrap();
    assert!(r > 0.5 && r < 2.0);
}
