use std::path::Path;
use std::process::{Command, Output};

fn photostat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photostat"))
        .args(args)
        .env_remove("PHOTOSTAT_SEED")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data rows of a CSV, keyed by the header line.
fn table(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

fn min_row(rows: &[Vec<f64>], i: usize) -> &Vec<f64> {
    rows.iter().min_by(|a, b| a[i].total_cmp(&b[i])).unwrap()
}

#[test]
fn ideal_curve_bottoms_out_at_half_for_equal_rates() {
    let out = photostat(&[
        "fano-curve",
        "--eta",
        "1",
        "--deadtime",
        "0",
        "--ratio-min",
        "1e-3",
        "--ratio-max",
        "1e3",
        "--points",
        "121",
    ]);
    assert!(out.status.success());
    let (header, rows) = table(&stdout(&out));
    assert_eq!(header, ["ratio", "eta", "deadtime_over_tau", "fano_analytic"]);
    assert_eq!(rows.len(), 121);
    assert_eq!(min_row(&rows, 3)[..], [1.0, 1.0, 0.0, 0.5]);
}

#[test]
fn low_efficiency_lifts_the_minimum() {
    let out = photostat(&["fano-curve", "--eta", "0.1", "--deadtime", "0"]);
    let (_, rows) = table(&stdout(&out));
    assert!((min_row(&rows, 3)[3] - 0.95).abs() < 1e-12);
}

#[test]
fn long_dead_time_removes_the_interior_minimum() {
    let out = photostat(&[
        "fano-curve",
        "--eta",
        "0.5",
        "--deadtime",
        "1.0",
        "--ratio-min",
        "1e-4",
        "--ratio-max",
        "1e4",
        "--points",
        "161",
    ]);
    let (_, rows) = table(&stdout(&out));
    let fano = column(&rows, 3);
    let left = fano[0];
    let dips = (1..fano.len() - 1).any(|i| fano[i] < fano[i - 1] && fano[i] <= fano[i + 1] && fano[i] < left);
    assert!(!dips);
}

#[test]
fn monte_carlo_columns_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = photostat(&[
            "fano-curve",
            "--points",
            "3",
            "--ratio-min",
            "0.1",
            "--ratio-max",
            "10",
            "--mc",
            "--windows",
            "500",
            "--seed",
            "9",
            "-o",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let (header, rows) = table(&text);
    assert_eq!(header.last().unwrap(), "fano_mc_stderr");
    assert!(rows.iter().all(|r| r[5] > 0.0));
}

#[test]
fn seed_comes_from_environment_by_default() {
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_photostat"));
        cmd.args(["simulate", "--window", "50", "--windows", "50"])
            .env_remove("PHOTOSTAT_SEED");
        if let Some(s) = seed {
            cmd.env("PHOTOSTAT_SEED", s);
        }
        stdout(&cmd.output().unwrap())
    };
    let explicit = stdout(&photostat(&[
        "simulate",
        "--window",
        "50",
        "--windows",
        "50",
        "--seed",
        "77",
    ]));
    assert_eq!(run(Some("77")), explicit);
    assert_ne!(run(None), explicit);
}

#[test]
fn counting_distribution_output() {
    let out = photostat(&["counting-dist", "--mu1", "1", "--mu2", "1", "--window", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let (header, rows) = table(&text);
    assert_eq!(header, ["n", "probability"]);
    assert!((rows[0][1] - 2.0 * (-1.0f64).exp()).abs() < 1e-7);
    let total: f64 = column(&rows, 1).iter().sum();
    assert!((total - 1.0).abs() < 1e-6);
    assert!(text.contains("# tail_mass="));
    assert!(text.contains("# mean_residual="));

    let short = stdout(&photostat(&["counting-dist", "--window", "1e-3"]));
    assert!(table(&short).1[0][1] > 0.999);
}

#[test]
fn saturation_curve() {
    let out = photostat(&["saturation", "--alpha", "1", "--tau", "2", "--powers", "0.25,0.5,1,4"]);
    let text = stdout(&out);
    assert!(text.contains("# rate_saturation=0.5 power_saturation=0.5"));
    let (_, rows) = table(&text);
    assert_eq!(rows[1], [0.5, 0.25]);
    assert!((rows[2][1] - 1.0 / 3.0).abs() < 1e-15);
    let grid = table(&stdout(&photostat(&["saturation", "--alpha", "1", "--tau", "2"]))).1;
    assert!(grid.windows(2).all(|w| w[1][1] > w[0][1]));
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "points = 21\n\n[fano-curve]\neta = 0.1\n\n[saturation]\npowers = [1.0, 2.0]\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let (_, rows) = table(&stdout(&photostat(&["--config", c, "fano-curve"])));
    assert_eq!(rows.len(), 21);
    assert!((min_row(&rows, 3)[3] - 0.95).abs() < 1e-12);
    let (_, rows) = table(&stdout(&photostat(&["fano-curve", "--config", c, "--eta", "0.5"])));
    assert!((min_row(&rows, 3)[3] - 0.75).abs() < 1e-12);
    let out = photostat(&[
        "saturation",
        "--config",
        c,
        "--alpha",
        "1",
        "--tau",
        "1",
        "--powers",
        "3",
    ]);
    let (_, rows) = table(&stdout(&out));
    assert_eq!(column(&rows, 0), [3.0]);
}

#[test]
fn invalid_arguments_exit_two_without_leaving_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = photostat(&["fano-curve", "--eta", "1.5", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    assert_eq!(photostat(&["fano-curve", "--points", "many"]).status.code(), Some(2));
    assert_eq!(photostat(&["counting-dist"]).status.code(), Some(2));
}

#[test]
fn inversion_failure_exits_three_and_names_n() {
    let out = photostat(&[
        "counting-dist",
        "--window",
        "60",
        "--nodes",
        "16",
        "--precision",
        "1e-12",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n = "));
}

#[test]
fn validation_passes_and_catches_injected_fault() {
    let ok = photostat(&["validate", "--quick"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let bad = photostat(&["validate", "--quick", "--inject-fault", "eta-miswired"]);
    assert_eq!(bad.status.code(), Some(4));
    let text = stdout(&bad);
    assert!(text
        .lines()
        .any(|l| l.starts_with("FAIL") && l.contains("loss rescaling law")));
}

#[test]
fn simulate_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    let out = photostat(&[
        "simulate",
        "--mu1",
        "2",
        "--eta",
        "0.5",
        "--deadtime",
        "0.3",
        "--window",
        "40",
        "--windows",
        "20",
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (_, rows) = table(&stdout(&out));
    let times: Vec<f64> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(times.len() as f64, rows[0][7]);
    assert!(times.windows(2).all(|w| w[1] - w[0] >= 0.3 - 1e-9));
}

#[test]
fn deadtime_report_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let out = photostat(&[
        "deadtime-report",
        "--ratios",
        "1,10",
        "--windows",
        "2000",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(Path::new(&path).exists());
    let (header, rows) = table(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(header[0], "deadtime_over_tau");
    assert_eq!(header.len(), 9);
    assert_eq!(rows.len(), 6);
    assert_eq!(column(&rows, 0), [0.1, 0.1, 0.5, 0.5, 1.0, 1.0]);
}
