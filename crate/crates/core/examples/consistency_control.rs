// Sweep λ and k1 to see how much temporal consistency each buys, and what
// it costs in similarity to the processed frames.

use temporal_consistency::consistency::{stabilize_sequence, ConsistencyParams, Preset};
use temporal_consistency::imgio::FrameSource;
use temporal_consistency::metrics::{ssim_report, warping_error};
use temporal_consistency::synthetic::TranslatingScene;

pub fn run_example() -> Result<Vec<(f32, f64)>, Box<dyn std::error::Error>> {
    let clip = TranslatingScene {
        frames: 5,
        ..TranslatingScene::default()
    }
    .generate()?;
    let flow = clip.flow_provider();
    let processed = FrameSource::from_frames(clip.processed.clone())?;
    println!(
        "processed: ewarp {:.4}",
        warping_error(&processed, &flow)?.mean()
    );

    let score = |params: ConsistencyParams| -> Result<(f64, f64), Box<dyn std::error::Error>> {
        let out = stabilize_sequence(clip.pairs(), params, &flow)?;
        let video = FrameSource::from_frames(out.into_iter().map(|s| s.output).collect())?;
        Ok((
            warping_error(&video, &flow)?.mean(),
            ssim_report(&video, &processed)?.mean(),
        ))
    };

    let base = Preset::Default.params();
    let mut sweep = Vec::new();
    for lambda in [0.1, 1.0, 2.0, 5.0] {
        let (e, s) = score(ConsistencyParams { lambda, ..base })?;
        println!("lambda {lambda:>4}: ewarp {e:.4}, ssim {s:.4}");
        sweep.push((lambda, e));
    }
    for k1 in [0.1, 0.3, 0.45] {
        let (e, s) = score(ConsistencyParams { k1, ..base })?;
        println!("k1 {k1:>4}:     ewarp {e:.4}, ssim {s:.4}");
    }
    Ok(sweep)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
