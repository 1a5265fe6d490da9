// Steer a live session the way the web UI does: open a source, play, change
// λ mid-stream and seek. Pass `--serve` to expose the same source over
// WebSocket instead.

use std::sync::Arc;

use temporal_consistency::flow::FlowProvider;
use temporal_consistency::imgio::FrameSource;
use temporal_consistency::service::{Outgoing, Reply, Server, Session, SourceRegistry};
use temporal_consistency::synthetic::TranslatingScene;

fn registry() -> Result<SourceRegistry, Box<dyn std::error::Error>> {
    let clip = TranslatingScene {
        frames: 6,
        ..TranslatingScene::default()
    }
    .generate()?;
    let flow: Arc<dyn FlowProvider> = Arc::new(clip.flow_provider());
    let mut registry = SourceRegistry::default();
    registry.insert(
        "synthetic",
        FrameSource::from_frames(clip.inputs)?,
        FrameSource::from_frames(clip.processed)?,
        flow,
    )?;
    Ok(registry)
}

fn describe(out: &[Outgoing]) -> Vec<String> {
    out.iter()
        .map(|m| match m {
            Outgoing::Text(Reply::Frame {
                index,
                params,
                timing,
            }) => format!(
                "frame {index} (lambda {}, solve {:.1} ms)",
                params.lambda, timing.solve_ms
            ),
            Outgoing::Text(r) => serde_json::to_string(r).unwrap_or_default(),
            Outgoing::Binary(f) => format!("  {:?} png, {} bytes", f.role, f.png.len()),
        })
        .collect()
}

pub fn run_example() -> Result<Vec<String>, Box<dyn std::error::Error>> {
    let mut session = Session::new(Arc::new(registry()?));
    let mut log = Vec::new();
    for control in [
        r#"{"type":"select_source","source":"synthetic"}"#,
        r#"{"type":"play"}"#,
    ] {
        log.extend(describe(&session.handle_text(control)));
    }
    log.extend(describe(&session.advance()));
    // lands on the next frame solved
    log.extend(describe(
        &session.handle_text(r#"{"type":"set_params","params":{"lambda":0.5}}"#),
    ));
    while session.is_playing() {
        log.extend(describe(&session.advance()));
    }
    // re-seeds: stabilized frame 3 equals processed frame 3
    log.extend(describe(
        &session.handle_text(r#"{"type":"seek","index":3}"#),
    ));
    // rejected: k1 + k2 must stay below 1
    log.extend(describe(&session.handle_text(
        r#"{"type":"set_params","params":{"k1":0.6,"k2":0.5}}"#,
    )));
    for line in &log {
        println!("{line}");
    }
    Ok(log)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if std::env::args().any(|a| a == "--serve") {
        let server = Server::bind(registry()?, "127.0.0.1:8765")?;
        println!("serving on ws://{}", server.local_addr()?);
        server.run()?;
        return Ok(());
    }
    run_example().map(|_| ())
}
