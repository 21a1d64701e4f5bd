use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discourage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data lines of a CSV emission (metadata dropped).
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn meta(text: &str, key: &str) -> Option<String> {
    let prefix = format!("# {key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}

#[test]
fn transient_at_zero_is_initial_state() {
    let o = run(&["transient", "--lambda", "1", "--mu", "1", "--tau", "0", "--kmax", "3", "--eps", "1e-10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 4);
    let p: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn t_and_tau_give_identical_rows() {
    let by_t = run(&["transient", "--lambda", "2", "--mu", "1", "--t", "1/2", "--kmax", "5", "--eps", "1e-10"]);
    let by_tau = run(&["transient", "--lambda", "2", "--mu", "1", "--tau", "1", "--kmax", "5", "--eps", "1e-10"]);
    assert_eq!(by_t.status.code(), Some(0));
    assert_eq!(csv_rows(&stdout(&by_t)), csv_rows(&stdout(&by_tau)));
}

#[test]
fn transient_small_tau_matches_expansion() {
    let o = run(&["transient", "--lambda", "1", "--mu", "1", "--tau", "1/10", "--kmax", "2", "--eps", "1e-12"]);
    let rows = csv_rows(&stdout(&o));
    let p0: f64 = rows[0][1].parse().unwrap();
    let tau: f64 = 0.1;
    let series = 1.0 - tau + 2.0 * tau * tau / 2.0 - 4.5 * tau.powi(3) / 6.0 + 11.25 * tau.powi(4) / 24.0;
    assert!((p0 - series).abs() < 1e-5, "{p0} vs {series}");
}

#[test]
fn usage_errors_exit_two() {
    let missing_time = run(&["transient", "--lambda", "1", "--mu", "1", "--kmax", "3", "--eps", "1e-10"]);
    assert_eq!(missing_time.status.code(), Some(2));
    let both = run(&["transient", "--lambda", "1", "--mu", "1", "--t", "1", "--tau", "1", "--kmax", "3", "--eps", "1e-10"]);
    assert_eq!(both.status.code(), Some(2));
    let bad_rate = run(&["transient", "--lambda", "-1", "--mu", "1", "--tau", "1", "--kmax", "3", "--eps", "1e-10"]);
    assert_eq!(bad_rate.status.code(), Some(2));
    let bad_eps = run(&["transient", "--lambda", "1", "--mu", "1", "--tau", "1", "--kmax", "3", "--eps", "0"]);
    assert_eq!(bad_eps.status.code(), Some(2));
}

#[test]
fn insufficient_settings_exit_three_with_recommendation() {
    let o = run(&["transient", "--lambda", "1", "--mu", "1", "--tau", "10", "--kmax", "10", "--eps", "1e-8", "--depth", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("recommended: --depth"), "{}", stderr(&o));
}

#[test]
fn auto_settings_resolve_deep_cases() {
    let o = run(&[
        "transient", "--lambda", "1", "--mu", "1", "--tau", "10", "--kmax", "3", "--eps", "1e-6",
        "--depth", "auto", "--precision-bits", "auto",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(meta(&text, "depth_setting").as_deref(), Some("auto"));
    let depth: usize = meta(&text, "depth_used").unwrap().parse().unwrap();
    assert!(depth > 120);
}

#[test]
fn embedded_hand_values_and_methods() {
    let o = run(&["embedded", "--lambda", "1", "--mu", "1", "--n", "3", "--method", "both"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(meta(&text, "verdict").as_deref(), Some("equal"));
    let rows = csv_rows(&text);
    let find = |n: &str, k: &str| {
        rows.iter()
            .find(|r| r[0] == n && r[1] == k)
            .map(|r| format!("{}/{}", r[2], r[3]))
    };
    assert_eq!(find("2", "0").as_deref(), Some("2/3"));
    assert_eq!(find("3", "1").as_deref(), Some("20/21"));
    assert_eq!(find("3", "3").as_deref(), Some("1/21"));
}

#[test]
fn embedded_rates_file() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/irregular_rates.json");
    let o = run(&["embedded", "--rates", path, "--n", "20", "--method", "both"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(meta(&text, "verdict").as_deref(), Some("equal"));
    assert_eq!(meta(&text, "normalized").as_deref(), Some("true"));
    assert!(meta(&text, "rates_file").is_some());
}

#[test]
fn bessel_columns() {
    let col = |depth: &str| -> Vec<String> {
        let o = run(&["bessel", "--depth", depth]);
        assert_eq!(o.status.code(), Some(0));
        csv_rows(&stdout(&o)).into_iter().map(|r| r[1].clone()).collect()
    };
    assert_eq!(col("0"), vec!["1"]);
    assert_eq!(col("4"), vec!["1", "1", "2", "5", "14"]);
    let deep = col("60");
    assert_eq!(deep.len(), 61);
    assert!(deep.iter().all(|v| v.chars().all(|c| c.is_ascii_digit())));
    let tri = run(&["bessel", "--depth", "3", "--triangle"]);
    assert_eq!(csv_rows(&stdout(&tri)).len(), 10);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--lambda", "1", "--mu", "1", "--t", "1", "--paths", "2000", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert_eq!(run(&seq).stdout, a.stdout);
    let other = run(&["simulate", "--lambda", "1", "--mu", "1", "--t", "1", "--paths", "2000", "--seed", "8"]);
    assert_ne!(other.stdout, a.stdout);
}

#[test]
fn csv_and_json_carry_same_values() {
    let base = ["embedded", "--lambda", "2", "--mu", "1", "--n", "4"];
    let csv = stdout(&run(&base));
    let mut json_args = base.to_vec();
    json_args.extend(["--format", "json"]);
    let doc: Value = serde_json::from_str(&stdout(&run(&json_args))).unwrap();
    let rows = csv_rows(&csv);
    let jrows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), jrows.len());
    for (r, j) in rows.iter().zip(jrows) {
        assert_eq!(r[0], j["n"].to_string());
        assert_eq!(r[2], j["p_num"].as_str().map(str::to_string).unwrap_or_else(|| j["p_num"].to_string()));
        let f: f64 = r[4].parse().unwrap();
        assert_eq!(f, j["p_float"].as_f64().unwrap());
    }
    assert_eq!(meta(&csv, "alpha_sq").as_deref(), doc["meta"]["alpha_sq"].as_str());
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let o = run(&["--format", "json", "--output", path.to_str().unwrap(), "bessel", "--depth", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn validate_recommends_then_passes() {
    let base = ["validate", "--lambda", "1", "--mu", "1", "--tau", "10", "--kmax", "10", "--tol", "1e-6"];
    let first = run(&base);
    assert_eq!(first.status.code(), Some(3));
    let err = stderr(&first);
    let rec = err.split("recommended: ").nth(1).expect("recommendation");
    let words: Vec<&str> = rec.split_whitespace().collect();
    assert_eq!(words[0], "--depth");
    assert_eq!(words[2], "--precision-bits");
    let mut args = base.to_vec();
    args.extend(&words[..4]);
    let second = run(&args);
    assert_eq!(second.status.code(), Some(0), "{}", stderr(&second));
    assert!(csv_rows(&stdout(&second)).iter().all(|r| r.last().unwrap() == "pass"));
}

#[test]
fn validate_small_case_passes() {
    let o = run(&["validate", "--lambda", "1", "--mu", "1", "--tau", "1", "--kmax", "5", "--tol", "1e-8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(csv_rows(&stdout(&o)).len(), 6);
}
