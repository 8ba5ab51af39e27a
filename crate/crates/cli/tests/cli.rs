use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pgdmatch::io::{format_matrix, parse_cost_matrix, strip_timing, ResultDocument, TIMING_KEYS};
use pgdmatch::matcher::{solve, SolverConfig};
use pgdmatch::rng::SplitMix64;

fn pgdmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgdmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn solve_one_by_one() {
    let dir = tempfile::tempdir().unwrap();
    let cost = write(dir.path(), "c.txt", "5\n");
    let out = dir.path().join("r.txt");
    let o = pgdmatch(&["solve", &cost, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let doc = ResultDocument::parse(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc.assignment[[0, 0]], 1.0);
    assert_eq!(doc.objective, 5.0);
}

#[test]
fn malformed_file_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.txt");
    for (i, text) in ["1 2\n3\n", "1 nope\n", "", "# only a comment\n", "1 inf\n"].iter().enumerate() {
        let cost = write(dir.path(), &format!("bad{i}.txt"), text);
        let o = pgdmatch(&["solve", &cost, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "input {text:?}");
        assert!(!o.stderr.is_empty());
        assert!(!out.exists());
    }
}

#[test]
fn missing_file_exits_one() {
    let o = pgdmatch(&["solve", "/nonexistent/cost.txt"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tall_matrix_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cost = write(dir.path(), "c.txt", "1 2\n3 4\n5 6\n");
    let out = dir.path().join("r.txt");
    let o = pgdmatch(&["solve", &cost, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_flags_exit_one() {
    assert_eq!(pgdmatch(&["bench", "--preset", "nope"]).status.code(), Some(1));
    assert_eq!(pgdmatch(&["bench", "--trials", "0"]).status.code(), Some(1));
    assert_eq!(pgdmatch(&["gradcheck", "--h", "0"]).status.code(), Some(1));
    assert_eq!(pgdmatch(&["cost", "--lambda", "0"]).status.code(), Some(1));
    assert_eq!(pgdmatch(&["bench", "--rows", "4", "--cols", "3"]).status.code(), Some(2));
}

#[test]
fn anti_diagonal_converged() {
    let dir = tempfile::tempdir().unwrap();
    let cost = write(dir.path(), "c.txt", "0 1\n1 0\n");
    let o = pgdmatch(&["solve", &cost, "--preset", "paper-converged"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = ResultDocument::parse(&stdout(&o)).unwrap();
    // Early iterates drag the average away from the vertex.
    assert!((doc.assignment[[0, 0]] - 0.938125).abs() < 1e-9);
    assert_eq!(doc.masked_assignment[[0, 0]], doc.assignment[[0, 0]]);
    assert_eq!(doc.masked_assignment[[0, 1]], 0.0);
}

#[test]
fn solve_matches_library_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = format_matrix(&SplitMix64::new(11).uniform_matrix(4, 9));
    let cost_path = write(dir.path(), "c.txt", &text);
    let o = pgdmatch(&["solve", &cost_path, "--lr", "0.05", "--init", "random", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = ResultDocument::parse(&stdout(&o)).unwrap();

    let cost = parse_cost_matrix(&text).unwrap();
    let config = SolverConfig::paper_fast()
        .with_learning_rate(0.05)
        .with_init(pgdmatch::matcher::InitMode::RandomFeasible)
        .with_seed(3);
    let report = solve(&cost, &config, None).unwrap();
    assert_eq!(doc.assignment, report.assignment);
    assert_eq!(doc.masked_assignment, report.masked_assignment);
    assert_eq!(doc.objective_trace, report.objective_trace);
    assert_eq!(doc.config, config);
}

#[test]
fn solve_is_deterministic_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    let text = format_matrix(&SplitMix64::new(5).uniform_matrix(3, 7));
    let cost = write(dir.path(), "c.txt", &text);
    let a = stdout(&pgdmatch(&["solve", &cost, "--average", "include-init"]));
    let b = stdout(&pgdmatch(&["solve", &cost, "--average", "include-init"]));
    assert_eq!(strip_timing(&a), strip_timing(&b));
    for key in TIMING_KEYS {
        assert!(!strip_timing(&a).contains(key));
    }
}

#[test]
fn bench_defaults_emit_nine_records() {
    let o = pgdmatch(&["bench"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], pgdmatch::bench::BENCH_CSV_HEADER);
    assert_eq!(lines.len(), 1 + 9);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    let err = String::from_utf8(o.stderr).unwrap();
    for m in ["pgd", "hungarian", "greedy"] {
        assert!(err.contains(m));
    }
}

#[test]
fn bench_bytes_stable_apart_from_timing() {
    let strip = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_owned()).unwrap_or_default())
            .collect()
    };
    let args = ["bench", "--rows", "3", "--cols", "10", "--trials", "4", "--seed", "9"];
    let a = strip(stdout(&pgdmatch(&args)));
    let b = strip(stdout(&pgdmatch(&args)));
    assert_eq!(a, b);
}

#[test]
fn bench_kv_format() {
    let o = pgdmatch(&["bench", "--rows", "2", "--cols", "4", "--trials", "1", "--format", "kv"]);
    let text = stdout(&o);
    assert!(text.contains("method = hungarian"));
    assert!(!text.contains(','));
}

#[test]
fn converge_row_count() {
    let o = pgdmatch(&["converge", "--rows", "3", "--cols", "8", "--n-grad", "7", "--n-proj", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some(pgdmatch::bench::CONVERGE_CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 7 + 7 * 4);
}

#[test]
fn converge_sweep_and_inits() {
    let o = pgdmatch(&[
        "converge", "--rows", "2", "--cols", "5", "--n-grad", "3", "--n-proj", "2", "--lr", "0.01,0.005",
        "--inits", "2",
    ]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 2 * 2 * (3 + 3 * 2));
    assert!(text.contains("lr0.005"));
    let again = stdout(&pgdmatch(&[
        "converge", "--rows", "2", "--cols", "5", "--n-grad", "3", "--n-proj", "2", "--lr", "0.01,0.005",
        "--inits", "2",
    ]));
    assert_eq!(text, again);
}

#[test]
fn converge_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let o = pgdmatch(&["converge", "--n-grad", "2", "--n-proj", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 1 + 2 + 4);
}

#[test]
fn gradcheck_exit_codes() {
    let o = pgdmatch(&["gradcheck", "--rows", "1", "--cols", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("max_rel_error = 0\n"));

    let o = pgdmatch(&["gradcheck", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let o = pgdmatch(&["gradcheck", "--h", "1e-12"]);
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    assert!(err.contains("cancellation"));
    assert!(stdout(&o).contains("max_rel_error = "));
    assert!(matches!(o.status.code(), Some(0) | Some(3)));
}

#[test]
fn cost_file_feeds_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let o = pgdmatch(&["cost", "--rows", "3", "--cols", "5", "--lambda", "0.7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let cost = parse_cost_matrix(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(cost.shape(), (3, 5));
    assert!(cost.values().iter().all(|&v| (-1.0..=0.0).contains(&v)));
    let o = pgdmatch(&["solve", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}
