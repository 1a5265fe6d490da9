use std::path::{Path, PathBuf};
use std::process::Command;

use temporal_consistency::cli::{
    cmd_flow, cmd_metrics, cmd_stabilize, main_with_args, FlowArgs, JobConfig,
};
use temporal_consistency::flow::FlowField;
use temporal_consistency::imgio::{load_frame, read_flo, save_frame, FrameSource};
use temporal_consistency::synthetic::{shift_wrap, static_scene, texture, TranslatingScene};
use temporal_consistency::{Error, Frame};

fn write_frames(dir: &Path, frames: &[Frame]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, f) in frames.iter().enumerate() {
        save_frame(f, dir.join(format!("frame_{:05}.png", i + 1))).unwrap();
    }
}

fn job(root: &Path) -> JobConfig {
    JobConfig {
        input: Some(root.join("input")),
        processed: Some(root.join("processed")),
        output: Some(root.join("out")),
        pattern: Some("frame_%05d.png".into()),
        iterations: Some(40),
        ..JobConfig::default()
    }
}

fn translating(root: &Path, frames: usize) {
    let clip = TranslatingScene {
        width: 48,
        height: 32,
        frames,
        ..TranslatingScene::default()
    }
    .generate()
    .unwrap();
    write_frames(&root.join("input"), &clip.inputs);
    write_frames(&root.join("processed"), &clip.processed);
}

fn s(p: PathBuf) -> String {
    p.display().to_string()
}

#[test]
fn static_pair_reproduces_processed_frames() {
    let dir = tempfile::tempdir().unwrap();
    let scene = static_scene(40, 30, 5, 2).unwrap();
    write_frames(&dir.path().join("input"), &scene.inputs);
    write_frames(&dir.path().join("processed"), &scene.processed);
    let job = JobConfig {
        iterations: None,
        ..job(dir.path())
    };
    let summary = cmd_stabilize(&job).unwrap();
    assert_eq!(summary.frames, 5);
    for (i, path) in summary.outputs.iter().enumerate() {
        assert_eq!(
            path.file_name().unwrap(),
            format!("frame_{:05}.png", i + 1).as_str()
        );
        let out = load_frame(path).unwrap();
        let reference =
            load_frame(dir.path().join("processed").join(path.file_name().unwrap())).unwrap();
        let worst = out
            .data()
            .iter()
            .zip(reference.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 1.0 / 255.0 + 1e-6, "frame {}: {worst}", i + 1);
    }
}

#[test]
fn first_output_copies_processed() {
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 3);
    let summary = cmd_stabilize(&job(dir.path())).unwrap();
    let a = std::fs::read(&summary.outputs[0]).unwrap();
    let b = std::fs::read(dir.path().join("processed/frame_00001.png")).unwrap();
    assert_eq!(load_frame_bytes(&a), load_frame_bytes(&b));
}

fn load_frame_bytes(bytes: &[u8]) -> Frame {
    temporal_consistency::imgio::decode_frame(bytes).unwrap()
}

#[test]
fn missing_processed_frame_is_named() {
    for pattern in [Some("frame_%05d.png"), None] {
        let dir = tempfile::tempdir().unwrap();
        translating(dir.path(), 5);
        std::fs::remove_file(dir.path().join("processed/frame_00003.png")).unwrap();
        let job = JobConfig {
            pattern: pattern.map(str::to_owned),
            ..job(dir.path())
        };
        let err = cmd_stabilize(&job).unwrap_err();
        assert!(
            matches!(err, Error::MissingFrame { index: 3, .. }),
            "{pattern:?}: {err}"
        );
        assert!(err.to_string().contains("missing frame 3"));
    }
}

#[test]
fn resolution_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_frames(
        &dir.path().join("input"),
        &vec![texture(20, 20, 1, 1).unwrap(); 2],
    );
    write_frames(
        &dir.path().join("processed"),
        &vec![texture(22, 20, 1, 1).unwrap(); 2],
    );
    assert!(cmd_stabilize(&job(dir.path())).is_err());
}

#[test]
fn invalid_params_fail_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 3);
    let job = JobConfig {
        k1: Some(0.6),
        k2: Some(0.5),
        ..job(dir.path())
    };
    let err = cmd_stabilize(&job).unwrap_err();
    assert!(err.to_string().contains("k1+k2 must be < 1"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 3);
    let config = dir.path().join("job.toml");
    std::fs::write(
        &config,
        format!(
            "input = {:?}\nprocessed = {:?}\noutput = {:?}\npreset = \"objective\"\nlambda = 1.5\niterations = 30\npattern = \"frame_%05d.png\"\n",
            dir.path().join("input"),
            dir.path().join("processed"),
            dir.path().join("out"),
        ),
    )
    .unwrap();
    let cli = <temporal_consistency::cli::Cli as clap::Parser>::try_parse_from([
        "tcon",
        "stabilize",
        "--config",
        &s(config.clone()),
        "--lambda",
        "0.25",
    ])
    .unwrap();
    let temporal_consistency::cli::Command::Stabilize(args) = cli.command else {
        panic!("expected stabilize");
    };
    let job = JobConfig::from_args(&args).unwrap();
    let params = job.params().unwrap();
    assert_eq!(params.lambda, 0.25);
    assert_eq!(params.alpha, 1.0e4);
    assert_eq!(params.iterations, 30);
    assert_eq!(cmd_stabilize(&job).unwrap().frames, 3);

    std::fs::write(&config, "inptu = \"x\"\n").unwrap();
    assert!(JobConfig::load(&config).is_err());
}

#[test]
fn flow_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 3);
    let cache = dir.path().join("cache");
    let job = JobConfig {
        cache_dir: Some(cache.clone()),
        ..job(dir.path())
    };
    let first = cmd_stabilize(&job).unwrap();
    let mut cached: Vec<_> = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    cached.sort();
    assert_eq!(
        cached,
        [
            "flow_00002_00001.flo",
            "flow_00002_00003.flo",
            "flow_00003_00002.flo"
        ]
    );
    let bytes: Vec<Vec<u8>> = first
        .outputs
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    let second = cmd_stabilize(&job).unwrap();
    for (p, b) in second.outputs.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(p).unwrap(), b);
    }
}

#[test]
fn flow_command_feeds_flo_dir_backend() {
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 4);
    let written = cmd_flow(&FlowArgs {
        input: dir.path().join("input"),
        output: dir.path().join("flow"),
        pattern: None,
        flow_downscale: 1,
        both_directions: true,
        visualize: true,
        cache_dir: None,
    })
    .unwrap();
    assert_eq!(written.len(), 6);
    assert!(dir.path().join("flow/flow_00001_00002.png").is_file());
    let f = read_flo(dir.path().join("flow/flow_00002_00003.flo")).unwrap();
    let (u, v) = f.get(24, 16);
    assert!(
        (u - 2.0).abs() < 0.25 && (v - 1.0).abs() < 0.25,
        "({u}, {v})"
    );

    let job = JobConfig {
        flow_backend: temporal_consistency::cli::FlowBackend::FloDir,
        flo_dir: Some(dir.path().join("flow")),
        ..job(dir.path())
    };
    assert_eq!(
        cmd_stabilize(&job).unwrap().flow_backend.split(':').next(),
        Some("flo-dir")
    );
}

#[test]
fn flow_of_identical_and_shifted_frames() {
    let dir = tempfile::tempdir().unwrap();
    let a = texture(64, 48, 1, 4).unwrap();
    write_frames(&dir.path().join("same"), &[a.clone(), a.clone()]);
    write_frames(
        &dir.path().join("shift"),
        &[a.clone(), shift_wrap(&a, 3, 2)],
    );
    let run = |name: &str| {
        cmd_flow(&FlowArgs {
            input: dir.path().join(name),
            output: dir.path().join(format!("{name}_flow")),
            pattern: None,
            flow_downscale: 1,
            both_directions: false,
            visualize: false,
            cache_dir: None,
        })
        .unwrap();
        read_flo(dir.path().join(format!("{name}_flow/flow_00001_00002.flo"))).unwrap()
    };
    let zero = run("same");
    assert!(zero.interleaved().iter().all(|v| v.abs() < 1e-3));
    let shifted = run("shift");
    let epe =
        temporal_consistency::flow::endpoint_error(&shifted, &FlowField::uniform(64, 48, 3.0, 2.0))
            .unwrap();
    assert!(epe < 0.5, "{epe}");

    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    assert!(cmd_flow(&FlowArgs {
        input: dir.path().join("empty"),
        output: dir.path().join("empty_flow"),
        pattern: None,
        flow_downscale: 1,
        both_directions: false,
        visualize: false,
        cache_dir: None,
    })
    .is_err());
}

#[test]
fn metrics_identity_and_static() {
    let dir = tempfile::tempdir().unwrap();
    let scene = static_scene(32, 24, 4, 5).unwrap();
    write_frames(&dir.path().join("video"), &scene.processed);
    let root = dir.path();
    let status = main_with_args([
        "tcon",
        "metrics",
        "--which",
        "ssim",
        "--candidate",
        &s(root.join("video")),
        "--reference",
        &s(root.join("video")),
        "--output",
        &s(root.join("report")),
    ]);
    assert_eq!(status, 0);
    let csv = std::fs::read_to_string(root.join("report/ssim.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "frame_index,value");
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r.ends_with(",1")));

    let status = main_with_args([
        "tcon",
        "metrics",
        "--which",
        "ewarp",
        "--candidate",
        &s(root.join("video")),
        "--output",
        &s(root.join("report")),
        "--preset",
        "fast",
    ]);
    assert_eq!(status, 0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("report/ewarp.json")).unwrap())
            .unwrap();
    assert_eq!(summary["mean"], 0.0);
    assert_eq!(summary["count"], 3);
    assert_eq!(summary["preset"], "fast");
    assert_eq!(summary["flow_backend"], "builtin");
}

#[test]
fn metrics_flicker_ratio_from_files() {
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 5);
    let root = dir.path();
    cmd_stabilize(&JobConfig {
        iterations: None,
        ..job(root)
    })
    .unwrap();
    let args = <temporal_consistency::cli::Cli as clap::Parser>::try_parse_from([
        "tcon",
        "metrics",
        "--which",
        "ewarp",
        "--candidate",
        &s(root.join("out")),
        "--reference",
        &s(root.join("processed")),
        "--flow-from",
        &s(root.join("input")),
        "--output",
        &s(root.join("report")),
    ])
    .unwrap();
    let temporal_consistency::cli::Command::Metrics(args) = args.command else {
        panic!("expected metrics");
    };
    let (_, summary) = cmd_metrics(&args).unwrap();
    assert!(summary.ratio.unwrap() <= 0.7, "{summary:?}");
    assert_eq!(FrameSource::open(root.join("out"), None).unwrap().len(), 5);
}

#[test]
fn binary_exit_status() {
    let bin = env!("CARGO_BIN_EXE_tcon");
    let dir = tempfile::tempdir().unwrap();
    translating(dir.path(), 3);
    let root = dir.path();
    let ok = Command::new(bin)
        .args(["stabilize", "--iterations", "20", "--input"])
        .arg(root.join("input"))
        .arg("--processed")
        .arg(root.join("processed"))
        .arg("--output")
        .arg(root.join("out"))
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stderr).contains("frame 2:"));

    let bad = Command::new(bin)
        .args(["stabilize", "--preset", "turbo"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let missing = Command::new(bin)
        .args(["stabilize", "--input"])
        .arg(root.join("nope"))
        .arg("--processed")
        .arg(root.join("processed"))
        .arg("--output")
        .arg(root.join("out2"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error:"));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert!(help.status.success());
    for sub in ["stabilize", "flow", "metrics", "serve"] {
        assert!(String::from_utf8_lossy(&help.stdout).contains(sub));
    }
}
