// Score a clip with SSIM and temporal warping error and write the CSV and
// JSON reports the `metrics` command produces.

use temporal_consistency::consistency::{stabilize_sequence, Preset};
use temporal_consistency::imgio::FrameSource;
use temporal_consistency::metrics::{ssim_report, warping_error};
use temporal_consistency::synthetic::TranslatingScene;

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let clip = TranslatingScene {
        frames: 5,
        ..TranslatingScene::default()
    }
    .generate()?;
    let flow = clip.flow_provider();
    let out = stabilize_sequence(clip.pairs(), Preset::Default.params(), &flow)?;

    let processed = FrameSource::from_frames(clip.processed.clone())?;
    let stabilized = FrameSource::from_frames(out.into_iter().map(|s| s.output).collect())?;

    let similarity = ssim_report(&stabilized, &processed)?;
    print!("{}", similarity.to_csv());

    let ewarp = warping_error(&stabilized, &flow)?;
    let reference = warping_error(&processed, &flow)?.mean();
    let summary = ewarp
        .summary(
            Some("default"),
            Some(&temporal_consistency::flow::FlowProvider::id(&flow)),
        )
        .with_reference(reference);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    println!("mean SSIM to processed: {:.4}", similarity.mean());
    Ok(similarity.mean())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
