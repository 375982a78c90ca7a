use std::io::Write;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_dsm-spectra");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn depth_prints_six_decimals() {
    let o = run(&["depth", "--sigma2", "0.5", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "6.643856");
    assert_eq!(stdout(&run(&["depth", "--sigma2", "1", "--eps", "0.01"])).trim(), "inf");
}

#[test]
fn invalid_arguments_exit_with_four() {
    assert_eq!(run(&["depth", "--sigma2", "0.5", "--eps", "0"]).status.code(), Some(4));
    assert_eq!(run(&["sweep-temp", "--bogus"]).status.code(), Some(4));
    assert_eq!(run(&["sweep-temp", "--set", "nope=1"]).status.code(), Some(4));
    assert_eq!(run(&["collapse", "--reps", "0"]).status.code(), Some(4));
}

#[test]
fn missing_input_exits_with_three() {
    assert_eq!(run(&["spectrum", "/nonexistent/matrix.csv"]).status.code(), Some(3));
}

#[test]
fn violated_bounds_exit_with_two() {
    let o = run(&["verify-bounds", "--trials", "1000", "--bound-scale", "0.5", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("# experiment=verify_bounds\n"));
}

#[test]
fn generated_matrix_pipes_into_spectrum() {
    let g = run(&["generate", "--n", "4", "--temp", "1e9", "--iters", "200"]);
    assert_eq!(g.status.code(), Some(0));
    let mut child = Command::new(BIN)
        .args(["spectrum", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&g.stdout).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    let s2: f64 = values[header.iter().position(|h| *h == "sigma2").unwrap()].parse().unwrap();
    assert!(s2 < 1e-6, "sigma2 {s2}");
}

#[test]
fn generate_writes_the_output_file() {
    let path = std::env::temp_dir().join(format!("dsm_cli_gen_{}.csv", std::process::id()));
    let o = run(&["generate", "--n", "5", "--temp", "0.5", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("5"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|l| l.split(',').count() == 5));
}

#[test]
fn experiments_without_timestamp_are_byte_identical() {
    let args = ["sweep-temp", "--n", "8", "--seeds", "0-1", "--reps", "3", "--temperatures", "0.5,2", "--no-timestamp"];
    let a = run(&args);
    let b = run(&args);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert!(!stdout(&a).contains("generated_unix"));
    let stamped = run(&args[..args.len() - 1]);
    assert!(stdout(&stamped).contains("# generated_unix="));
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["sweep-temp", "--n", "8", "--seeds", "0", "--reps", "4", "--temperatures", "1", "--no-timestamp"];
    let one = Command::new(BIN).args(args).env("DSM_SPECTRA_THREADS", "1").output().unwrap();
    let two = Command::new(BIN).args(args).env("DSM_SPECTRA_THREADS", "2").output().unwrap();
    assert_eq!(one.stdout, two.stdout);
    let bad = Command::new(BIN).args(args).env("DSM_SPECTRA_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn help_and_version() {
    let h = run(&["--help"]);
    assert_eq!(h.status.code(), Some(0));
    for sub in ["generate", "spectrum", "sweep-temp", "collapse", "ablation", "verify-bounds", "residual", "depth"] {
        assert!(stdout(&h).contains(sub), "{sub}");
    }
    let v = run(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).starts_with("dsm-spectra "));
}
