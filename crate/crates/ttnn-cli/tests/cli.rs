//! End-to-end tests that drive the compiled `ttnn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;
use ttnn::data::{write_idx_images, write_idx_labels};
use ttnn::{load_checkpoint, DMatrix};
use ttnn_cli::matfile;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ttnn")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawning the ttnn binary")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn assert_fails(out: &Output) -> String {
    assert!(!out.status.success(), "command unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert!(
        !stderr.contains("panicked"),
        "command panicked instead of failing cleanly: {stderr}"
    );
    stderr
}

/// Four-class 28x28 dataset: class c lights up row band 7c..7c+7, with a
/// per-sample wiggle so samples are distinct. Linearly separable, so a
/// few epochs reach zero training error.
fn write_dataset(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let image = |class: usize, sample: usize| -> Vec<u8> {
        let mut img = vec![0u8; 28 * 28];
        for r in 7 * class..7 * class + 7 {
            for c in 0..28 {
                img[r + 28 * c] = 180 + ((sample * 13 + c) % 60) as u8;
            }
        }
        img
    };
    let make = |count_per_class: usize, offset: usize| -> (Vec<Vec<u8>>, Vec<u8>) {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for class in 0..4 {
            for sample in 0..count_per_class {
                images.push(image(class, offset + sample));
                labels.push(class as u8);
            }
        }
        (images, labels)
    };
    let (train_images, train_labels) = make(4, 0);
    let (test_images, test_labels) = make(2, 100);
    write_idx_images(&dir.join("train-images-idx3-ubyte"), 28, 28, &train_images).unwrap();
    write_idx_labels(&dir.join("train-labels-idx1-ubyte"), &train_labels).unwrap();
    write_idx_images(&dir.join("t10k-images-idx3-ubyte"), 28, 28, &test_images).unwrap();
    write_idx_labels(&dir.join("t10k-labels-idx1-ubyte"), &test_labels).unwrap();
}

fn write_train_config(path: &Path) {
    fs::write(
        path,
        "layer.0.kind = tt\n\
         layer.0.row_modes = 4,4,4,4,4\n\
         layer.0.col_modes = 4,4,4,4,4\n\
         layer.0.ranks = 2\n\
         layer.1.kind = relu\n\
         layer.2.kind = dense\n\
         layer.2.rows = 4\n\
         layer.2.cols = 1024\n\
         opt.lr = 0.05\n\
         opt.momentum = 0.9\n\
         opt.weight_decay = 0.0005\n\
         train.epochs = 2\n\
         train.batch_size = 4\n",
    )
    .unwrap();
}

struct TrainRun {
    _dir: tempfile::TempDir,
    out_dir: PathBuf,
    data_dir: PathBuf,
    stdout: String,
}

fn train_fixture(seed: &str, extra: &[&str]) -> TrainRun {
    let dir = tempdir().unwrap();
    let data_dir = dir.path().join("data");
    write_dataset(&data_dir);
    let config = dir.path().join("run.cfg");
    write_train_config(&config);
    let out_dir = dir.path().join("out");
    let mut args: Vec<&str> = vec![
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data-dir",
        data_dir.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--seed",
        seed,
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    let stdout = assert_ok(&out);
    TrainRun {
        _dir: dir,
        out_dir,
        data_dir,
        stdout,
    }
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn train_writes_schema_valid_metrics_checkpoint_and_echo() {
    let run = train_fixture("7", &[]);

    let rows = read_csv(&run.out_dir.join("metrics.csv"));
    assert_eq!(
        rows[0],
        vec!["epoch", "step", "train_loss", "train_err", "test_err", "lr", "wall_s"]
    );
    assert_eq!(rows.len(), 3, "header plus one row per epoch");
    for (i, row) in rows[1..].iter().enumerate() {
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], i.to_string());
        let step: usize = row[1].parse().unwrap();
        assert_eq!(step, (i + 1) * 4, "16 samples / batch 4 = 4 steps per epoch");
        for field in &row[2..] {
            let value: f64 = field.parse().unwrap();
            assert!(value.is_finite(), "metrics must never contain NaN/Inf");
        }
    }

    let checkpoint = fs::read(run.out_dir.join("checkpoint.ttnet")).unwrap();
    assert_eq!(&checkpoint[..8], b"TTNETCK1");

    let resolved = fs::read_to_string(run.out_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 7"));
    assert!(resolved.contains("layer.0.kind = tt"));
    assert!(resolved.contains("train.epochs = 2"));

    assert!(run.stdout.contains("compression"), "startup report: {}", run.stdout);
    assert!(run.stdout.contains("total: "), "startup report: {}", run.stdout);
}

#[test]
fn train_is_deterministic_given_a_seed() {
    let a = train_fixture("11", &[]);
    let b = train_fixture("11", &[]);

    let strip_wall = |rows: Vec<Vec<String>>| -> Vec<Vec<String>> {
        rows.into_iter()
            .map(|mut row| {
                row.pop();
                row
            })
            .collect()
    };
    let csv_a = strip_wall(read_csv(&a.out_dir.join("metrics.csv")));
    let csv_b = strip_wall(read_csv(&b.out_dir.join("metrics.csv")));
    assert_eq!(csv_a, csv_b, "identical seeds must give identical metrics");

    let net_a = load_checkpoint(&a.out_dir.join("checkpoint.ttnet"))
        .unwrap()
        .to_network()
        .unwrap();
    let net_b = load_checkpoint(&b.out_dir.join("checkpoint.ttnet"))
        .unwrap()
        .to_network()
        .unwrap();
    assert_eq!(net_a.param_slices(), net_b.param_slices());
}

#[test]
fn eval_reproduces_the_last_metrics_row_exactly() {
    let run = train_fixture("3", &["--epochs", "12"]);
    let rows = read_csv(&run.out_dir.join("metrics.csv"));
    let last_test_err = rows.last().unwrap()[4].clone();

    let out = run_eval(&run, "test", &[]);
    let line = out
        .lines()
        .find(|l| l.starts_with("error rate: "))
        .expect("eval prints an error rate");
    assert_eq!(line.trim_start_matches("error rate: "), last_test_err);

    // The band dataset is separable; after 12 epochs the train split is
    // classified perfectly.
    let out = run_eval(&run, "train", &[]);
    assert!(out.contains("error rate: 0\n"), "expected zero: {out}");
}

fn run_eval(train: &TrainRun, split: &str, extra: &[&str]) -> String {
    let ckpt = train.out_dir.join("checkpoint.ttnet");
    let mut args: Vec<&str> = vec![
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-dir",
        train.data_dir.to_str().unwrap(),
        "--split",
        split,
    ];
    args.extend_from_slice(extra);
    assert_ok(&run(&args))
}

#[test]
fn flags_override_config_file_values() {
    // run.cfg says epochs = 2; the flag forces 1.
    let run = train_fixture("5", &["--epochs", "1"]);
    let rows = read_csv(&run.out_dir.join("metrics.csv"));
    assert_eq!(rows.len(), 2);
    let resolved = fs::read_to_string(run.out_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("train.epochs = 1"));
}

#[test]
fn train_rejects_unknown_config_keys() {
    let dir = tempdir().unwrap();
    let data_dir = dir.path().join("data");
    write_dataset(&data_dir);
    let config = dir.path().join("bad.cfg");
    fs::write(
        &config,
        "layer.0.kind = dense\n\
         layer.0.rows = 4\n\
         layer.0.cols = 1024\n\
         opt.lrr = 0.1\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data-dir",
        data_dir.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    let stderr = assert_fails(&out);
    assert!(stderr.contains("unrecognized config keys"), "{stderr}");
    assert!(stderr.contains("opt.lrr"), "{stderr}");
}

#[test]
fn train_missing_data_path_fails_cleanly() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    write_train_config(&config);
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data-dir",
        "/definitely/not/here",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    let stderr = assert_fails(&out);
    assert!(stderr.contains("/definitely/not/here"), "{stderr}");
}

#[test]
fn train_aborts_on_divergence_without_writing_garbage() {
    let dir = tempdir().unwrap();
    let data_dir = dir.path().join("data");
    write_dataset(&data_dir);
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        "layer.0.kind = dense\n\
         layer.0.rows = 4\n\
         layer.0.cols = 1024\n\
         opt.lr = 1e200\n\
         train.epochs = 3\n\
         train.batch_size = 4\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data-dir",
        data_dir.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let stderr = assert_fails(&out);
    assert!(stderr.contains("finite"), "{stderr}");
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(!metrics.contains("NaN") && !metrics.contains("inf"), "{metrics}");
}

#[test]
fn compress_reports_the_reference_budget() {
    let out = run(&[
        "compress",
        "--row-modes",
        "4,4,4,4,4,4",
        "--col-modes",
        "2,7,8,8,7,4",
        "--rank",
        "2",
    ]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("tt params: 528"), "{stdout}");
    assert!(stdout.contains("compression: 194622x"), "{stdout}");
}

#[test]
fn compress_factorizes_a_small_matrix_exactly_at_full_rank() {
    let dir = tempdir().unwrap();
    let matrix_path = dir.path().join("w.mat");
    let w = DMatrix::from_fn(36, 36, |i, j| ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.4);
    matfile::write_matrix(&matrix_path, &w).unwrap();
    let ckpt_path = dir.path().join("w.ttnet");

    let out = run(&[
        "compress",
        "--row-modes",
        "6,6",
        "--col-modes",
        "6,6",
        "--rank",
        "36",
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--out",
        ckpt_path.to_str().unwrap(),
    ]);
    let stdout = assert_ok(&out);
    let error_line = stdout
        .lines()
        .find(|l| l.starts_with("relative reconstruction error: "))
        .expect("compress prints the reconstruction error");
    let error: f64 = error_line
        .trim_start_matches("relative reconstruction error: ")
        .parse()
        .unwrap();
    assert!(error <= 1e-10, "full-rank factorization must be exact: {error}");

    let checkpoint = load_checkpoint(&ckpt_path).unwrap();
    assert_eq!(checkpoint.layers.len(), 1);
    let net = checkpoint.to_network().unwrap();
    assert_eq!(net.input_dim(), Some(36));
}

#[test]
fn compress_with_eps_budget_stays_within_it() {
    let dir = tempdir().unwrap();
    let matrix_path = dir.path().join("w.mat");
    // Separable in every fused index split (exp factors over each digit),
    // so the train has unit internal ranks.
    let w = DMatrix::from_fn(36, 36, |i, j| {
        0.25 * (0.02 * i as f64).exp() * (-0.03 * j as f64).exp()
    });
    matfile::write_matrix(&matrix_path, &w).unwrap();
    let out = run(&[
        "compress",
        "--row-modes",
        "6,6",
        "--col-modes",
        "6,6",
        "--eps",
        "1e-8",
        "--matrix",
        matrix_path.to_str().unwrap(),
    ]);
    let stdout = assert_ok(&out);
    let error: f64 = stdout
        .lines()
        .find(|l| l.starts_with("relative reconstruction error: "))
        .unwrap()
        .trim_start_matches("relative reconstruction error: ")
        .parse()
        .unwrap();
    assert!(error <= 1e-8, "{stdout}");
    // A rank-one matrix compresses to unit internal ranks.
    assert!(stdout.contains("ranks: [1,1,1]"), "{stdout}");
}

#[test]
fn compress_rejects_a_mode_product_mismatch() {
    let dir = tempdir().unwrap();
    let matrix_path = dir.path().join("w.mat");
    let w = DMatrix::from_element(6, 6, 1.0);
    matfile::write_matrix(&matrix_path, &w).unwrap();
    let out = run(&[
        "compress",
        "--row-modes",
        "2,2",
        "--col-modes",
        "2,2",
        "--rank",
        "2",
        "--matrix",
        matrix_path.to_str().unwrap(),
    ]);
    let stderr = assert_fails(&out);
    assert!(stderr.contains("factorized shape needs 4 x 4"), "{stderr}");
}

#[test]
fn gradcheck_passes_by_default_and_fails_when_perturbed() {
    let out = run(&["gradcheck", "--seed", "9"]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("gradient check passed"), "{stdout}");
    assert!(stdout.contains("exactly zero"), "{stdout}");

    let out = run(&["gradcheck", "--seed", "9", "--perturb", "0.5"]);
    let stderr = assert_fails(&out);
    assert!(stderr.contains("exceeds tolerance"), "{stderr}");
}

#[test]
fn bench_writes_csv_and_rejects_zero_reps() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "bench",
        "--row-modes",
        "4,4,4",
        "--col-modes",
        "4,4,4",
        "--ranks",
        "2",
        "--reps",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let rows = read_csv(&dir.path().join("bench.csv"));
    assert_eq!(
        rows[0],
        vec![
            "kind",
            "ms_median",
            "ms_min",
            "ms_max",
            "reps",
            "warmup",
            "batch",
            "params",
            "weight_mib_f32",
            "aux_mib_f32"
        ]
    );
    assert_eq!(rows.len(), 3, "one tt row and one dense row");
    assert_eq!(rows[1][0], "tt");
    assert_eq!(rows[2][0], "dense");
    for row in &rows[1..] {
        for field in &row[1..] {
            let value: f64 = field.parse().unwrap();
            assert!(value.is_finite());
        }
    }

    let out = run(&[
        "bench", "--reps", "0", "--row-modes", "2,2", "--col-modes", "2,2", "--ranks", "1",
    ]);
    let stderr = assert_fails(&out);
    assert!(stderr.contains("reps"), "{stderr}");
}

#[test]
fn eval_rejects_mismatched_input_dimension() {
    let train = train_fixture("13", &["--epochs", "1"]);

    // A 36-feature single-layer checkpoint cannot score 1024-feature data.
    let dir = tempdir().unwrap();
    let matrix_path = dir.path().join("w.mat");
    matfile::write_matrix(&matrix_path, &DMatrix::from_element(36, 36, 0.5)).unwrap();
    let ckpt_path = dir.path().join("w.ttnet");
    assert_ok(&run(&[
        "compress",
        "--row-modes",
        "6,6",
        "--col-modes",
        "6,6",
        "--rank",
        "4",
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--out",
        ckpt_path.to_str().unwrap(),
    ]));

    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt_path.to_str().unwrap(),
        "--data-dir",
        train.data_dir.to_str().unwrap(),
    ]);
    let stderr = assert_fails(&out);
    assert!(
        stderr.contains("expects 36 input features, data provides 1024"),
        "{stderr}"
    );
}
