use std::fs;
use std::process::{Command, Output};

use clap::Parser;
use reinvest_cli::report::{ConfigEcho, Report, Row};
use reinvest_cli::{execute, Cli};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reinvest"))
        .args(args)
        .env_remove("REINVEST_ENERGY_COUNTER")
        .output()
        .expect("binary runs")
}

fn run(args: &[&str]) -> reinvest_cli::Outcome {
    let mut argv = vec!["reinvest"];
    argv.extend_from_slice(args);
    execute(&Cli::try_parse_from(argv).unwrap()).unwrap()
}

fn json_report(args: &[&str]) -> (Report, i32) {
    let mut argv = args.to_vec();
    argv.extend_from_slice(&["--output", "-"]);
    let out = bin(&argv);
    let text = String::from_utf8(out.stdout).unwrap();
    (Report::from_json(&text).unwrap(), out.status.code().unwrap())
}

#[test]
fn rosenbrock_from_its_root_takes_no_steps() {
    let (report, code) = json_report(&["solve", "--problem", "rosenbrock", "--n", "4", "--x0", "ones", "--eps", "1e-3"]);
    assert_eq!(code, 0);
    let row = report.run_rows().next().unwrap();
    assert_eq!(row.double.unwrap().outer, 0);
    assert_eq!(row.status, "ToleranceMet");
}

#[test]
fn negative_tolerance_is_a_usage_error() {
    let out = bin(&["solve", "--eps", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(bin(&["solve", "--bogus"]).status.code(), Some(2));
}

#[test]
fn laplace_solve_meets_tolerance() {
    let outcome = run(&["solve", "--n", "1000", "--eps", "1e-8"]);
    assert!(outcome.success);
    let row = outcome.report.run_rows().next().unwrap();
    assert_eq!(row.status, "ToleranceMet");
    assert!(row.final_residual.unwrap() <= 1e-8);
    assert!(row.joules.unwrap() > 0.0);
}

#[test]
fn bound_at_thirty_percent_ratio() {
    let outcome = run(&["bound", "--s1", "0", "--s2", "0", "--ratio", "0.3", "--eps", "1e-5"]);
    let Row::Bound(b) = outcome.report.rows[0] else { panic!("expected a bound row") };
    assert!((b.improvement_factor / 5.5e6 - 1.0).abs() < 0.02, "{}", b.improvement_factor);

    let outcome = run(&["bound", "--s1", "0", "--s2", "0", "--ratio", "1"]);
    let Row::Bound(b) = outcome.report.rows[0] else { panic!("expected a bound row") };
    assert_eq!(b.improvement_factor, 1.0);
}

#[test]
fn bound_grid_has_one_row_per_point() {
    let outcome = run(&["bound", "--grid", "-6:-2:2"]);
    assert_eq!(outcome.report.rows.len(), 9);
}

#[test]
fn curve_with_equal_levels_is_the_baseline() {
    let outcome = run(&["curve", "--p1", "32", "--p2", "32", "--grid", "-4:-1:1"]);
    for row in &outcome.report.rows {
        let Row::Curve(c) = row else { panic!("expected curve rows") };
        assert_eq!(c.energy, c.baseline_energy);
        assert!(c.energy.is_some());
    }
}

#[test]
fn report_json_round_trips() {
    let outcome = run(&["reinvest", "--n", "2000", "--eps", "1e-6", "--factor", "100"]);
    let text = outcome.report.to_json();
    let back = Report::from_json(&text).unwrap();
    assert_eq!(back, outcome.report);
    assert_eq!(back.schema_version, reinvest_cli::report::SCHEMA_VERSION);
}

#[test]
fn modeled_output_is_bit_identical_across_runs() {
    let args = ["reinvest", "--n", "5000", "--eps", "1e-6", "--factor", "1e3", "--output", "-"];
    let a = bin(&args);
    let b = bin(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_csv_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let out = bin(&[
        "sweep",
        "--n",
        "2000",
        "--eps",
        "1e-6",
        "--factors",
        "1e1,1e2,1e3",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("factor_exponent,joules,std,outer,inner,status"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "problem = \"rosenbrock\"\nn = 10\nx0 = \"ones\"\neps = 1e-4\nprec = \"b32\"\n").unwrap();
    let p = path.to_str().unwrap();

    let outcome = run(&["solve", "--config", p]);
    let ConfigEcho::Experiment(cfg) = &outcome.report.config else { panic!("experiment echo") };
    assert_eq!(cfg.n, 10);
    assert_eq!(cfg.eps, 1e-4);
    assert!(outcome.report.run_rows().next().unwrap().single.is_some());

    let outcome = run(&["solve", "--config", p, "--n", "20", "--prec", "b64"]);
    let ConfigEcho::Experiment(cfg) = &outcome.report.config else { panic!("experiment echo") };
    assert_eq!(cfg.n, 20);
    assert_eq!(cfg.problem.to_string(), "rosenbrock");
    assert!(outcome.report.run_rows().next().unwrap().double.is_some());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "tolerance = 1e-3\n").unwrap();
    assert_eq!(bin(&["solve", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn rapl_without_counter_falls_back_to_modeled() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("energy_uj");
    let rapl = run(&["solve", "--n", "500", "--meter", "rapl", "--counter-path", missing.to_str().unwrap()]);
    let modeled = run(&["solve", "--n", "500"]);
    let a = rapl.report.run_rows().next().unwrap();
    let b = modeled.report.run_rows().next().unwrap();
    assert_eq!(a.joules, b.joules);
}

#[test]
fn stub_meter_replays_counter_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("readings");
    // Three trials, 2 uJ, 4 uJ and 6 uJ.
    fs::write(&path, "0\n2\n10\n14\n100\n106\n").unwrap();
    let outcome = run(&["solve", "--n", "50", "--meter", "stub", "--trials", "3", "--counter-path", path.to_str().unwrap()]);
    let row = outcome.report.run_rows().next().unwrap();
    assert!((row.joules.unwrap() - 4e-6).abs() < 1e-15);
    assert!(row.std_dev.unwrap() > 0.0);
}

#[test]
fn stub_meter_without_path_is_a_usage_error() {
    assert_eq!(bin(&["solve", "--n", "50", "--meter", "stub"]).status.code(), Some(2));
}

#[test]
fn excessive_factor_exits_with_failure() {
    let out = bin(&["reinvest", "--eps", "1e-6", "--factor", "1e6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("BudgetExceeded"));
}

#[test]
fn rosenbrock_reinvestment_rows() {
    let outcome = run(&["reinvest", "--problem", "rosenbrock", "--x0", "-1", "--eps", "1e-2", "--factor", "1e11"]);
    let rows: Vec<_> = outcome.report.run_rows().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].class, "Reinvest");
    assert_eq!(rows[1].class, "Ceiling (double)");
    assert_eq!(rows[2].class, "Base (single)");
    let single = rows[2].single.unwrap();
    assert!((25..=33).contains(&single.outer), "{single}");
    assert!((60..=76).contains(&single.inner), "{single}");
    assert_eq!(rows[0].single, rows[2].single);
}
