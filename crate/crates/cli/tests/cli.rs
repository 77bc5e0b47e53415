use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phasetrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasetrack"))
        .args(args)
        .env("RUST_LOG", "error")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

/// Data rows of a CSV file as (header, rows), skipping `#` comments.
fn csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

fn cell<'a>(header: &[String], row: &'a [String], col: &str) -> &'a str {
    &row[header
        .iter()
        .position(|h| h == col)
        .unwrap_or_else(|| panic!("no column {col}"))]
}

#[test]
fn analytic_unit_params() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(dir.path(), &["analytic"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# program: phasetrack"));
    let (h, rows) = csv(&text);
    assert_eq!(
        h,
        [
            "scheme",
            "covariance",
            "gain",
            "riccati_root",
            "lambda0_limit"
        ]
    );
    let kalman = rows.iter().find(|r| r[0] == "kalman").unwrap();
    assert_eq!(kalman[1], "0.309016994375");
    let sql = rows.iter().find(|r| r[0] == "sql").unwrap();
    assert_eq!(cell(&h, sql, "lambda0_limit"), "0.707106781187");
}

#[test]
fn analytic_wiener_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(dir.path(), &["analytic", "--lambda", "0"]);
    let (_, rows) = csv(&String::from_utf8(out.stdout).unwrap());
    let value = |name: &str| num(&rows.iter().find(|r| r[0] == name).unwrap()[1]);
    assert!((value("sql") - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-11);
    assert_eq!(value("rts"), 0.25);
}

#[test]
fn invalid_parameters_exit_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(dir.path(), &["analytic", "--kappa", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
    for args in [
        &["compare", "--grid", ""][..],
        &["ensemble", "--schemes", "rts,nope"],
        &["ensemble", "--trials", "1"],
        &["robust", "--axis", "lambda"],
        &["analytic", "--format", "xml"],
        &["analytic", "--config", "missing.conf"],
    ] {
        assert_eq!(
            phasetrack(dir.path(), args).status.code(),
            Some(2),
            "{args:?}"
        );
    }
}

#[test]
fn stability_guard_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(
        dir.path(),
        &[
            "ensemble",
            "--dt",
            "0.3",
            "--horizon",
            "30",
            "--trials",
            "2",
            "--schemes",
            "kalman",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial"));
}

#[test]
fn tripwire_exits_4_after_writing() {
    // With no burn-in the start-up transient dominates the Kalman MSE.
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(
        dir.path(),
        &[
            "ensemble",
            "--burn-in",
            "0",
            "--horizon",
            "10",
            "--trials",
            "200",
            "--schemes",
            "kalman",
            "--out",
            "e.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    let (h, rows) = csv(&fs::read_to_string(dir.path().join("e.csv")).unwrap());
    assert!(num(cell(&h, &rows[0], "z")) > 5.0);
}

#[test]
fn ensemble_rts_and_two_filter_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(
        dir.path(),
        &[
            "ensemble",
            "--schemes",
            "rts,two-filter",
            "--horizon",
            "30",
            "--seed",
            "12",
        ],
    );
    assert!(out.status.success());
    let (h, rows) = csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(
        h,
        ["scheme", "analytic", "empirical", "se", "z", "n_trials"]
    );
    assert_eq!(rows.len(), 2);
    assert_eq!(cell(&h, &rows[0], "n_trials"), "200");
    let emp = |r: &[String]| num(cell(&h, r, "empirical"));
    let se = num(cell(&h, &rows[0], "se"));
    assert!((emp(&rows[0]) - emp(&rows[1])).abs() < 2.0 * se);
}

#[test]
fn compare_default_grid_orderings() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(dir.path(), &["compare"]);
    assert!(out.status.success());
    let (h, rows) = csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(
        &h[..6],
        ["lambda", "sql", "tw_filter", "tw_smoother", "kalman", "rts"]
    );
    assert_eq!(rows.len(), 50);
    for r in &rows {
        let v = |c| num(cell(&h, r, c));
        assert!(v("rts") <= v("kalman") && v("kalman") < v("sql"));
        assert!(v("kalman") <= v("tw_filter") && v("rts") <= v("tw_smoother"));
        // The SQL is the optimal dual-homodyne estimator, so it beats the
        // dual-homodyne reference filter too.
        assert!(v("sql") <= v("tw_filter_dual") && v("kalman") <= v("tw_filter_dual"));
        assert_eq!(cell(&h, r, "status"), "ok");
    }
}

#[test]
fn compare_with_trials_adds_empirical_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(
        dir.path(),
        &[
            "compare",
            "--grid",
            "1,3",
            "--trials",
            "40",
            "--horizon",
            "40",
        ],
    );
    assert!(out.status.success());
    let (h, rows) = csv(&String::from_utf8(out.stdout).unwrap());
    for r in &rows {
        for s in ["tw_filter", "tw_smoother", "kalman", "rts"] {
            let (a, e, se) = (
                num(cell(&h, r, s)),
                num(cell(&h, r, &format!("{s}_emp"))),
                num(cell(&h, r, &format!("{s}_se"))),
            );
            assert!((a - e).abs() < 4.0 * se, "{s}: {a} vs {e} ± {se}");
        }
    }
}

#[test]
fn robust_writes_one_file_per_mu() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(
        dir.path(),
        &["robust", "--grid", "-1:0.99:12", "--out", "robust.csv"],
    );
    assert!(out.status.success());
    for mu in ["0.5", "0.8", "0.9"] {
        let text = fs::read_to_string(dir.path().join(format!("robust_mu{mu}.csv"))).unwrap();
        assert!(text.contains(&format!("# mu: {mu}\n")));
        let (h, rows) = csv(&text);
        assert_eq!(h, ["delta", "rts_mse", "robust_mse", "status"]);
        assert_eq!(rows.len(), 12);
        if mu == "0.9" {
            let last = rows.last().unwrap();
            assert!(num(&last[2]) < num(&last[1]));
        }
    }
}

#[test]
fn robust_reductions() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasetrack(
        dir.path(),
        &["robust", "--mu", "0", "--grid", "-1:1:9", "--out", "r.csv"],
    );
    assert!(out.status.success());
    let (_, rows) = csv(&fs::read_to_string(dir.path().join("r.csv")).unwrap());
    for r in &rows {
        let (a, b) = (num(&r[1]), num(&r[2]));
        assert!((a - b).abs() <= 1e-8 * a, "{r:?}");
    }
    let out = phasetrack(
        dir.path(),
        &["robust", "--mu", "0.9", "--grid", "0", "--out", "z.csv"],
    );
    assert!(out.status.success());
    let (_, rows) = csv(&fs::read_to_string(dir.path().join("z.csv")).unwrap());
    assert_eq!(rows[0][1], "0.22360679775");
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.conf"),
        "# shared settings\nlambda = 0\nkappa = 4\nformat = json\n",
    )
    .unwrap();
    let out = phasetrack(
        dir.path(),
        &[
            "analytic",
            "--config",
            "run.conf",
            "--kappa",
            "1",
            "--schemes",
            "rts",
        ],
    );
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["meta"]["lambda"], "0");
    assert_eq!(v["meta"]["kappa"], "1");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["scheme"], "rts");
    assert_eq!(rows[1]["covariance"], 0.25);
    fs::write(dir.path().join("bad.conf"), "sigma = 1\n").unwrap();
    assert_eq!(
        phasetrack(dir.path(), &["analytic", "--config", "bad.conf"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn header_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "ensemble",
        "--trials",
        "4",
        "--horizon",
        "15",
        "--seed",
        "5",
        "--schemes",
        "kalman",
    ];
    let first = phasetrack(dir.path(), &args).stdout;
    let text = String::from_utf8(first.clone()).unwrap();
    // Rebuild a config file from the header and rerun from it alone.
    let conf: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .filter(|(k, _)| !["program", "command", "chi"].contains(k))
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    fs::write(dir.path().join("replay.conf"), conf).unwrap();
    let second = phasetrack(dir.path(), &["ensemble", "--config", "replay.conf"]).stdout;
    assert_eq!(first, second);
}
