use std::path::Path;
use std::process::{Command, Output};

use scatter_core::format::read_sct1;
use scatter_core::io::{read_image, write_image};
use scatter_core::synth::texture_dataset;
use scatter_core::{ColorSpace, ImageGrid};
use tempfile::TempDir;

fn scatter(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatter"))
        .current_dir(dir)
        .env_remove("SCATTER_SEED")
        .env("SCATTER_WORKERS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        stderr(&o)
    );
    stdout(&o)
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    let mut it = line.split_whitespace();
    while let Some(w) = it.next() {
        if w == key {
            return it.next().expect("value follows key");
        }
    }
    panic!("no `{key}` in `{line}`")
}

fn gradient_image(n: usize) -> ImageGrid {
    ImageGrid::from_fn(n, n, ColorSpace::Rgb, |c, y, x| {
        ((y * 7 + x * 3 + c * 11) % 17) as f64 / 16.0
    })
}

#[test]
fn forward_reports_paper_channel_counts() {
    let dir = TempDir::new().unwrap();
    write_image(&gradient_image(32), &dir.path().join("a.png")).unwrap();
    let out = ok(scatter(
        dir.path(),
        &[
            "forward", "a.png", "--J", "2", "--L", "8", "--out", "a.sct1",
        ],
    ));
    assert!(out.contains("channels 243 spatial 8x8"), "{out}");
    let (c, params) = read_sct1(&dir.path().join("a.sct1")).unwrap();
    assert_eq!(c.channel_count(), 243);
    assert_eq!(c.spatial(), 8);
    assert!(params.is_some());

    write_image(&gradient_image(224), &dir.path().join("big.png")).unwrap();
    let out = ok(scatter(
        dir.path(),
        &[
            "forward", "big.png", "--J", "4", "--L", "8", "--out", "big.sct1",
        ],
    ));
    assert!(out.contains("channels 1251 spatial 14x14"), "{out}");
}

#[test]
fn forward_writes_one_file_per_input_into_a_directory() {
    let dir = TempDir::new().unwrap();
    for name in ["a.png", "b.png"] {
        write_image(&gradient_image(16), &dir.path().join(name)).unwrap();
    }
    ok(scatter(
        dir.path(),
        &["forward", "a.png", "b.png", "--L", "4", "--out", "coeffs"],
    ));
    assert!(dir.path().join("coeffs/a.sct1").exists());
    assert!(dir.path().join("coeffs/b.sct1").exists());
}

#[test]
fn missing_input_is_a_usage_error_without_output() {
    let dir = TempDir::new().unwrap();
    let o = scatter(dir.path(), &["forward", "missing.png", "--out", "x.sct1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.png"));
    assert!(!dir.path().join("x.sct1").exists());
}

#[test]
fn bad_flags_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let o = scatter(
        dir.path(),
        &["forward", "a.png", "--boundary", "wrap", "--out", "x"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = scatter(dir.path(), &["bench", "--batch", "0", "--out", "b.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = scatter(dir.path(), &["nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reconstruction_is_reproducible() {
    let dir = TempDir::new().unwrap();
    write_image(&gradient_image(32), &dir.path().join("t.png")).unwrap();
    let args = |out: &'static str| {
        vec![
            "reconstruct",
            "t.png",
            "--iters",
            "15",
            "--seed",
            "7",
            "--boundary",
            "periodic",
            "--out",
            out,
            "--history",
            "h.csv",
        ]
    };
    let a = ok(scatter(dir.path(), &args("r1.png")));
    let b = ok(scatter(dir.path(), &args("r2.png")));
    assert_eq!(
        std::fs::read(dir.path().join("r1.png")).unwrap(),
        std::fs::read(dir.path().join("r2.png")).unwrap()
    );
    assert_eq!(field(&a, "err_s"), field(&b, "err_s"));
    let hist = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert!(hist.starts_with("iteration,loss,err_s\n"));
    assert_eq!(hist.lines().count(), 1 + 16);

    let c = ok(scatter(
        dir.path(),
        &[
            "reconstruct",
            "t.png",
            "--iters",
            "15",
            "--seed",
            "8",
            "--boundary",
            "periodic",
            "--out",
            "r3.png",
        ],
    ));
    assert_ne!(field(&a, "err_x"), field(&c, "err_x"));
}

fn trained(dir: &Path) {
    ok(scatter(
        dir,
        &[
            "dataset",
            "--out",
            "train",
            "--per-class",
            "6",
            "--size",
            "16",
            "--seed",
            "1",
        ],
    ));
    ok(scatter(
        dir,
        &[
            "train", "train", "--J", "2", "--L", "8", "--epochs", "10", "--seed", "3", "--out",
            "m.slm1",
        ],
    ));
}

#[test]
fn analyze_csv_has_one_row_per_frequency_and_parseval_sums() {
    let dir = TempDir::new().unwrap();
    trained(dir.path());
    let out = ok(scatter(
        dir.path(),
        &[
            "analyze",
            "m.slm1",
            "--out",
            "omega.csv",
            "--sparsify",
            "0.2",
            "--sparse-out",
            "s.slm1",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("omega.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("order,omega1,omega2,energy"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().filter(|r| r[0] == "1").count(), 8);
    assert_eq!(rows.iter().filter(|r| r[0] == "2").count(), 64);
    let sum = |o: &str| {
        rows.iter()
            .filter(|r| r[0] == o)
            .map(|r| r[3].parse::<f64>().unwrap())
            .sum::<f64>()
    };
    let first = out.lines().next().unwrap();
    let e1: f64 = field(first, "block1_energy").parse().unwrap();
    let e2: f64 = field(first, "block2_energy").parse().unwrap();
    assert!((sum("1") - e1).abs() <= 1e-6 * e1);
    assert!((sum("2") - e2).abs() <= 1e-6 * e2);
    assert!(out.contains("zero_fraction 0.8"), "{out}");
    assert!(dir.path().join("s.slm1").exists());
}

#[test]
fn attack_reports_success_and_failure_with_status() {
    let dir = TempDir::new().unwrap();
    trained(dir.path());
    let img = "train/class02/00002.png";
    let out = ok(scatter(
        dir.path(),
        &["attack", "m.slm1", img, "--target", "7", "--out", "adv.png"],
    ));
    let line = out.trim();
    assert_eq!(field(line, "status"), "success", "{line}");
    assert_eq!(field(line, "predicted"), "7");
    assert!(dir.path().join("adv.png").exists());

    let out = ok(scatter(
        dir.path(),
        &["attack", "m.slm1", img, "--target", "7", "--eps", "0.00001"],
    ));
    assert!(
        out.contains("status failure") && out.contains("no epsilon in grid"),
        "{out}"
    );

    let o = scatter(dir.path(), &["attack", "m.slm1", img, "--eps", "0.02,0.01"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pixel_models_cannot_be_analyzed() {
    let dir = TempDir::new().unwrap();
    ok(scatter(
        dir.path(),
        &["dataset", "--out", "d", "--per-class", "2", "--size", "8"],
    ));
    let out = ok(scatter(
        dir.path(),
        &["train", "d", "--pixels", "--epochs", "2", "--out", "p.slm1"],
    ));
    assert!(out.contains("classes 10 samples 20"), "{out}");
    let o = scatter(dir.path(), &["analyze", "p.slm1", "--out", "o.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dataset_matches_the_library_generator() {
    let dir = TempDir::new().unwrap();
    ok(scatter(
        dir.path(),
        &[
            "dataset",
            "--out",
            "d",
            "--per-class",
            "2",
            "--size",
            "16",
            "--seed",
            "5",
        ],
    ));
    let expect = texture_dataset(2, 16, 5);
    let i = expect.iter().rposition(|s| s.1 == 3).unwrap();
    let got = read_image(&dir.path().join(format!("d/class03/{i:05}.png"))).unwrap();
    for (a, b) in got.data().iter().zip(expect[i].0.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
    }
}

#[test]
fn selftest_passes_and_names_an_injected_fault() {
    let dir = TempDir::new().unwrap();
    ok(scatter(dir.path(), &["selftest", "--report", "r.json"]));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    for c in checks {
        assert!(c["measured"].is_number() && c["limit"].is_number(), "{c}");
    }

    let o = scatter(
        dir.path(),
        &["selftest", "--corrupt-filter", "--report", "bad.json"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("wavelet_zero_mean"));
}

#[test]
fn bench_emits_records_within_the_memory_budget() {
    let dir = TempDir::new().unwrap();
    ok(scatter(
        dir.path(),
        &[
            "bench",
            "--sizes",
            "16,32",
            "--batch",
            "4",
            "--oracle-size",
            "32",
            "--memory-size",
            "64",
            "--out",
            "b.csv",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("op,shape,J,L,workers,wall_ms,peak_slots,images_per_s,checksum")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let forward: Vec<_> = rows.iter().filter(|r| r[0] == "forward").collect();
    assert_eq!(forward.len(), 5);
    // the two worker counts at each size agree
    assert_eq!(forward[0][8], forward[1][8]);
    assert_eq!(forward[2][8], forward[3][8]);
    assert_eq!(
        rows.iter().filter(|r| r[0].starts_with("memory")).count(),
        6
    );
    for r in &rows {
        assert!(r[5].parse::<f64>().unwrap() > 0.0);
        assert!(r[6].parse::<usize>().unwrap() > 0);
    }
}
