//! End-to-end runs of the `glint` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use glint::image::Image;
use glint::scene::{SceneSpace, SpaceSummary};
use glint::train::TrainLog;

fn glint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glint")).args(args).env("GLINT_THREADS", "2").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tiny_train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--scene",
        "MirrorRoom",
        "--iters",
        "12",
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
        "--spp",
        "2",
        "--hidden",
        "16",
        "--layers",
        "2",
        "--chains",
        "4",
        "--patch-size",
        "8",
        "--validation-every",
        "6",
        "--validation-frames",
        "2",
        "--validation-spp",
        "4",
        "--validation-resolution",
        "16",
    ];
    args.extend_from_slice(extra);
    glint(&args)
}

#[test]
fn help_documents_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("train", &["--scene", "--iters", "--mode", "--resolution", "--acceptance", "--seed", "--out", "--spp", "--hidden", "--layers"]),
        ("render", &["--checkpoint", "--vector", "--camera", "--res", "--out", "--gt", "--spp"]),
        ("eval", &["--run", "--validation"]),
        ("diag-mcmc", &["--run", "--dims", "--bins"]),
        ("inspect-space", &["--scene"]),
        ("serve", &["--checkpoint", "--scene", "--port"]),
    ];
    for (cmd, flags) in expected {
        let out = glint(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in *flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn inspect_space_matches_library_summary() {
    let out = glint(&["inspect-space", "--scene", "MirrorRoom", "--json"]);
    assert_eq!(code(&out), 0);
    let summary: SpaceSummary = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary, SceneSpace::resolve("MirrorRoom").unwrap().summary());
    assert_eq!(summary.dim, 2);
    let table = String::from_utf8(glint(&["inspect-space", "--scene", "MirrorRoom"]).stdout).unwrap();
    assert!(table.contains("dim: 2") && table.contains("sphere_x") && table.contains("sphere_z"));
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(code(&glint(&["inspect-space", "--scene", "NoSuchScene"])), 2);
    assert_eq!(code(&glint(&["train", "--scene", "MirrorRoom"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&tiny_train(&run, &["--patch-size", "128"])), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_glint"))
        .args(["inspect-space", "--scene", "MirrorRoom"])
        .env("GLINT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_render_eval_and_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = tiny_train(&run, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["config.json", "log.csv", "chains.csv", "checkpoints/ckpt_12.bin", "validation/frame_001_prediction.pfm"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let ckpt = run.join("checkpoints/ckpt_12.bin");
    let ckpt = ckpt.to_str().unwrap();

    let a = dir.path().join("a.pfm");
    let b = dir.path().join("b.pfm");
    for p in [&a, &b] {
        let out = glint(&["render", "--checkpoint", ckpt, "--vector", "0.25,0.75", "--res", "24", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(Image::read_pfm(&a).unwrap().width, 24);

    let bad = glint(&["render", "--checkpoint", ckpt, "--vector", "0.25", "--res", "24", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("expected 2 values"));

    let gt = dir.path().join("gt.ppm");
    let out = glint(&["render", "--scene", "MirrorRoom", "--gt", "--spp", "2", "--vector", "0.5,0.5", "--res", "16", "--out", gt.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(fs::read(&gt).unwrap().starts_with(b"P6\n16 16\n255\n"));

    let csv = dir.path().join("eval.csv");
    let out = glint(&[
        "eval",
        "--run",
        run.to_str().unwrap(),
        "--validation",
        run.join("validation").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 + 1);
    assert!(text.lines().last().unwrap().starts_with("run,mean,mcmc,12,"));

    let out = glint(&["diag-mcmc", "--run", run.to_str().unwrap(), "--dims", "0,1", "--bins", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let hist = Image::read_pfm(&run.join("histogram_0_1.pfm")).unwrap();
    assert_eq!((hist.width, hist.height, hist.channels), (4, 4, 1));
    assert!((hist.data.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    assert_eq!(code(&glint(&["diag-mcmc", "--run", run.to_str().unwrap(), "--dims", "0,9"])), 2);
}

#[test]
fn training_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for run in [&a, &b] {
        let out = tiny_train(run, &[]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let log = |p: &Path| TrainLog::read_csv(fs::File::open(p.join("log.csv")).unwrap()).unwrap().without_timing();
    assert_eq!(log(&a), log(&b));
    let ckpt = |p: &Path| fs::read(p.join("checkpoints/ckpt_12.bin")).unwrap();
    assert_eq!(ckpt(&a), ckpt(&b));
    assert_eq!(fs::read(a.join("chains.csv")).unwrap(), fs::read(b.join("chains.csv")).unwrap());
}

#[test]
fn uniform_with_greedy_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_train(&dir.path().join("run"), &["--mode", "uniform", "--acceptance", "greedy"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning: acceptance `greedy` is ignored in uniform mode"));
}

#[test]
fn serve_rejects_missing_checkpoint() {
    let out = glint(&["serve", "--checkpoint", "/nonexistent/ckpt.bin", "--scene", "MirrorRoom", "--port", "0"]);
    assert_eq!(code(&out), 2);
}
