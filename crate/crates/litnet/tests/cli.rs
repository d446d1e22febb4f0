//! End-to-end tests of the `litnet` binary: flag handling, stdout/stderr
//! contracts, exit codes, and the on-disk artifacts each subcommand leaves
//! behind. Everything runs through `std::process::Command` against the
//! compiled executable.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use litnet::checkpoint::{save_checkpoint, Checkpoint};
use litnet::image_io::save_image;
use litnet::model::{LitNet, ModelConfig, TaskMode};
use litnet::synth::procedural_clean;

fn litnet_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_litnet"))
}

fn run(args: &[&str]) -> Output {
    litnet_bin().args(args).output().expect("spawn litnet")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn toy_model(task: TaskMode) -> LitNet<f32> {
    let cfg = ModelConfig { base_width: 2, fc_width: 8, task, ..ModelConfig::default() };
    LitNet::new(cfg, 5).unwrap()
}

/// Fresh toy checkpoint without training — the zero-initialized head makes
/// its output well-defined (identity / bicubic) for shape tests.
fn write_toy_checkpoint(path: &Path, task: TaskMode) {
    save_checkpoint(path, &Checkpoint::of_model(&toy_model(task))).unwrap();
}

fn write_png(path: &Path, w: usize, h: usize, seed: u64) {
    save_image(&procedural_clean(w, h, seed), path).unwrap();
}

#[test]
fn count_params_matches_the_library_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("defaults.cfg");
    fs::write(&cfg, "# defaults only\n").unwrap();

    let out = run(&["count-params", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let text = stdout_of(&out);
    let model: LitNet<f32> = LitNet::new(ModelConfig::default(), 0).unwrap();
    assert!(
        text.contains(&format!("params\t{}", model.count_params())),
        "unexpected stdout: {text}"
    );
    assert!(
        text.contains(&format!("flops_256x256\t{}", model.count_flops(256, 256).unwrap())),
        "unexpected stdout: {text}"
    );
}

#[test]
fn train_logs_tab_separated_loss_columns_and_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "[model]\nbase_width = 2\nfc_width = 8\n\n\
         [train]\nbatch_size = 2\nmax_steps = 3\nseed = 9\n\
         synth_count = 2\nsynth_width = 16\nsynth_height = 16\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");

    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    // stdout carries exactly the per-step log: `step\tl_T\tcl1\tl_p\tl_s`.
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    assert_eq!(lines.len(), 3, "one line per step: {lines:?}");
    for (i, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5, "five columns in {line:?}");
        assert_eq!(cols[0], (i + 1).to_string(), "leading step number");
        for v in &cols[1..] {
            let x: f64 = v.parse().expect("numeric loss column");
            assert!(x.is_finite());
        }
    }

    assert!(out_dir.join("final.litn").is_file(), "final checkpoint written");
}

#[test]
fn enhance_preserves_dimensions_and_writes_a_decodable_png() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.litn");
    write_toy_checkpoint(&ckpt, TaskMode::Enhance);

    // 30×22 is deliberately not a multiple of 8: the CLI pads and crops.
    let input = dir.path().join("in.png");
    write_png(&input, 30, 22, 3);
    let output = dir.path().join("nested/out.png");

    let out = run(&[
        "enhance",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let img = litnet::image_io::load_image(&output).unwrap();
    assert_eq!((img.width(), img.height()), (30, 22));
}

#[test]
fn superres_scales_dimensions_and_rejects_mismatched_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("sr3.litn");
    write_toy_checkpoint(&ckpt, TaskMode::SuperRes(3));

    let input = dir.path().join("in.png");
    write_png(&input, 16, 24, 4);
    let output = dir.path().join("out.png");

    let ok = run(&[
        "superres",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--scale",
        "3",
        "--in",
        input.to_str().unwrap(),
        "--out",
        output.to_str().unwrap(),
    ]);
    assert!(ok.status.success(), "stderr: {}", stderr_of(&ok));
    let img = litnet::image_io::load_image(&output).unwrap();
    assert_eq!((img.width(), img.height()), (48, 72));

    // Same checkpoint at the wrong scale: single-line error, exit 1.
    let bad = run(&[
        "superres",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--scale",
        "2",
        "--in",
        input.to_str().unwrap(),
        "--out",
        output.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let err = stderr_of(&bad);
    assert_eq!(err.lines().count(), 1, "single-line error: {err:?}");
    assert!(err.starts_with("error: "), "prefix: {err:?}");
    assert!(err.contains("trained for 3x super-resolution, not 2x"), "{err:?}");

    // Enhance refuses a super-resolution checkpoint outright.
    let wrong_tool = run(&[
        "enhance",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        output.to_str().unwrap(),
    ]);
    assert_eq!(wrong_tool.status.code(), Some(1));
    assert!(
        stderr_of(&wrong_tool).contains("use the superres subcommand"),
        "{}",
        stderr_of(&wrong_tool)
    );
}

#[test]
fn make_synth_is_deterministic_and_pairs_stems() {
    let dir = tempfile::tempdir().unwrap();
    let clean_a = dir.path().join("a/clean");
    let deg_a = dir.path().join("a/degraded");
    let clean_b = dir.path().join("b/clean");
    let deg_b = dir.path().join("b/degraded");

    for (clean, deg) in [(&clean_a, &deg_a), (&clean_b, &deg_b)] {
        let out = run(&[
            "make-synth",
            "--clean",
            clean.to_str().unwrap(),
            "--out",
            deg.to_str().unwrap(),
            "--seed",
            "21",
            "--gen",
            "3",
            "--width",
            "24",
            "--height",
            "16",
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }

    let names = |d: &Path| -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names(&clean_a), names(&deg_a), "same stems on both sides");
    assert_eq!(names(&clean_a).len(), 3);

    for name in names(&clean_a) {
        assert_eq!(
            fs::read(clean_a.join(&name)).unwrap(),
            fs::read(clean_b.join(&name)).unwrap(),
            "clean {name} differs between identical invocations"
        );
        assert_eq!(
            fs::read(deg_a.join(&name)).unwrap(),
            fs::read(deg_b.join(&name)).unwrap(),
            "degraded {name} differs between identical invocations"
        );
    }
}

#[test]
fn evaluate_bitdepth_rescales_mse_but_not_ssim() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred");
    let gt = dir.path().join("gt");
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    write_png(&pred.join("a.png"), 24, 24, 7);
    write_png(&gt.join("a.png"), 24, 24, 8);

    let mut reports = Vec::new();
    for depth in ["8", "float"] {
        let csv = dir.path().join(format!("report_{depth}.csv"));
        let out = run(&[
            "evaluate",
            "--pred",
            pred.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
            "--bitdepth",
            depth,
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
        assert!(stdout_of(&out).is_empty(), "evaluate stays quiet on stdout");
        reports.push(fs::read_to_string(&csv).unwrap());
    }

    let row = |csv: &str| -> Vec<f64> {
        let line = csv.lines().find(|l| l.starts_with("a,")).unwrap();
        line.split(',').skip(1).map(|v| v.parse().unwrap()).collect()
    };
    let (r8, rf) = (row(&reports[0]), row(&reports[1]));
    // mse scales by 255², psnr matches its max_val so it is unchanged, and
    // the structural metrics never depend on the bit depth.
    assert!((r8[0] / rf[0] - 255.0 * 255.0).abs() < 1e-3, "mse ratio: {} {}", r8[0], rf[0]);
    assert!((r8[1] - rf[1]).abs() < 1e-4, "psnr: {} vs {}", r8[1], rf[1]);
    assert_eq!(r8[2], rf[2], "ssim");
    assert_eq!(r8[3], rf[3], "ms_ssim");
}

#[test]
fn failures_exit_once_with_a_single_error_line() {
    let dir = tempfile::tempdir().unwrap();

    // Missing config file.
    let missing = run(&["train", "--config", "/nonexistent/x.cfg", "--out", "/tmp/x"]);
    assert_eq!(missing.status.code(), Some(1));
    let err = stderr_of(&missing);
    assert_eq!(err.lines().count(), 1, "{err:?}");
    assert!(err.starts_with("error: "), "{err:?}");

    // Config with an unknown key reports the line number.
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[model]\nbase_width = 2\nwidht = 4\n").unwrap();
    let bad_key = run(&["count-params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad_key.status.code(), Some(1));
    let err = stderr_of(&bad_key);
    assert!(err.contains("line 3") && err.contains("widht"), "{err:?}");
}

#[test]
fn thread_cap_env_is_accepted_and_bad_values_warn() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    write_png(&pred.join("a.png"), 16, 16, 2);
    let csv = dir.path().join("r.csv");

    let ok = litnet_bin()
        .env("LITNET_THREADS", "1")
        .args(["evaluate", "--pred", pred.to_str().unwrap(), "--out", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(ok.status.success(), "stderr: {}", stderr_of(&ok));

    let odd = litnet_bin()
        .env("LITNET_THREADS", "many")
        .args(["evaluate", "--pred", pred.to_str().unwrap(), "--out", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(odd.status.success(), "a bad cap only warns: {}", stderr_of(&odd));
    assert!(stderr_of(&odd).contains("LITNET_THREADS"), "{}", stderr_of(&odd));
}

#[test]
fn gradcheck_prints_one_status_line_per_item() {
    let out = run(&["gradcheck"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    let (status, summary) = lines.split_at(lines.len() - 1);
    assert!(status.len() >= 20, "expected one line per op/block: {}", status.len());
    for line in status {
        assert!(line.starts_with("PASS\t") || line.starts_with("FAIL\t"), "{line:?}");
        assert!(line.contains("max_rel_err") && line.contains("tol"), "{line:?}");
    }
    assert_eq!(summary[0], format!("all {} checks passed", status.len()));
}
