use std::process::{Command, Output};

use gridforge::gol::Pattern;
use gridforge_oracle::life_step;

fn gridforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridforge")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gol_prints_one_line_per_step_and_the_board() {
    let out = gridforge(&["gol", "--steps", "12", "--ranks", "3", "--partition", "random:4", "--show"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12 + 10);
    for (i, line) in lines[..12].iter().enumerate() {
        assert!(line.starts_with(&format!("step={} cells=100 mass=", i + 1)), "{line}");
        assert!(line.ends_with(" dt=1"), "{line}");
    }
    let mut board = Pattern::GliderAndBlinker.board(10, 10);
    for _ in 0..12 {
        board = life_step(10, 10, &board);
    }
    let shown: Vec<u8> = lines[12..].iter().flat_map(|l| l.chars().map(|c| u8::from(c == '#'))).collect();
    assert_eq!(shown, board);
}

#[test]
fn advect_writes_dumps_and_reports_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridforge(&[
        "advect",
        "--base",
        "4",
        "--levels",
        "1",
        "--steps",
        "6",
        "--ranks",
        "2",
        "--rebalance-fc",
        "1.5",
        "--dump-every",
        "3",
        "--dump-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("step=")).count(), 6);
    assert!(text.lines().last().unwrap().starts_with("mass_drift="));
    for step in [0, 3, 6] {
        let dump = std::fs::read_to_string(dir.path().join(format!("step-{step}.dump"))).unwrap();
        assert!(dump.starts_with("dccrg-dump 1 4 4 4 1\n"), "{dump}");
        let vtk = std::fs::read_to_string(dir.path().join(format!("step-{step}.vtk"))).unwrap();
        assert!(vtk.contains("SCALARS rho"), "{vtk}");
    }
}

#[test]
fn benchmarks_report_their_numbers() {
    let out = gridforge(&["bench", "amr-speed", "--base", "2", "--target", "8", "--ranks", "2"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("created=576 final_cells=512 "));
    let out = gridforge(&["bench", "exchange", "--cells", "512", "--bytes", "8", "--ranks", "2", "--batching", "per-cell"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("cells=512 messages_per_round="));
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    for args in [
        &["advect", "--cfl", "1.2", "--steps", "1"][..],
        &["bench", "amr-speed", "--base", "8", "--target", "100"][..],
        &["gol", "--ranks", "0"][..],
    ] {
        let out = gridforge(args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
    let out = gridforge(&["gol", "--partition", "spiral"]);
    assert!(!out.status.success());
}
