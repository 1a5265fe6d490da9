// Drive the `stabilize` and `metrics` commands on frame directories, as the
// `tcon` binary would.

use std::path::Path;

use temporal_consistency::cli::main_with_args;
use temporal_consistency::imgio::save_frame;
use temporal_consistency::synthetic::TranslatingScene;

fn write_frames(dir: &Path, frames: &[temporal_consistency::Frame]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        save_frame(f, dir.join(format!("frame_{:05}.png", i + 1)))
            .map_err(std::io::Error::other)?;
    }
    Ok(())
}

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("tcon_batch_{}", std::process::id()));
    let clip = TranslatingScene {
        frames: 4,
        ..TranslatingScene::default()
    }
    .generate()?;
    write_frames(&root.join("input"), &clip.inputs)?;
    write_frames(&root.join("processed"), &clip.processed)?;
    let arg = |p: &str| root.join(p).display().to_string();

    let status = main_with_args([
        "tcon",
        "stabilize",
        "--input",
        &arg("input"),
        "--processed",
        &arg("processed"),
        "--output",
        &arg("stabilized"),
        "--pattern",
        "frame_%05d.png",
        "--preset",
        "fast",
        "--lambda",
        "3",
    ]);
    if status != 0 {
        return Err(format!("stabilize exited with {status}").into());
    }

    let status = main_with_args([
        "tcon",
        "metrics",
        "--which",
        "ewarp",
        "--candidate",
        &arg("stabilized"),
        "--reference",
        &arg("processed"),
        "--flow-from",
        &arg("input"),
        "--output",
        &arg("report"),
    ]);
    if status != 0 {
        return Err(format!("metrics exited with {status}").into());
    }
    let summary = std::fs::read_to_string(root.join("report/ewarp.json"))?;
    println!("{summary}");
    std::fs::remove_dir_all(&root)?;
    Ok(summary)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
