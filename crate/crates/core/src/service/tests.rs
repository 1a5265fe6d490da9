use std::net::TcpStream;
use std::sync::Arc;
use std::thread;

use tungstenite::{Message, WebSocket};

use super::*;
use crate::imgio::{decode_frame, encode_png};
use crate::synthetic::TranslatingScene;

fn registry(frames: usize) -> Arc<SourceRegistry> {
    let seq = TranslatingScene {
        width: 24,
        height: 16,
        frames,
        ..TranslatingScene::default()
    }
    .generate()
    .unwrap();
    let flow: Arc<dyn FlowProvider> = Arc::new(seq.flow_provider());
    let params = ConsistencyParams {
        iterations: 20,
        ..ConsistencyParams::default()
    };
    let mut reg = SourceRegistry::new(params);
    reg.insert(
        "clip",
        FrameSource::from_frames(seq.inputs).unwrap(),
        FrameSource::from_frames(seq.processed).unwrap(),
        flow,
    )
    .unwrap();
    Arc::new(reg)
}

fn send(session: &mut Session, json: &str) -> Vec<Outgoing> {
    session.handle_text(json)
}

fn frames(out: &[Outgoing]) -> Vec<&FramePayload> {
    out.iter().filter_map(Outgoing::frame).collect()
}

fn frame_replies(out: &[Outgoing]) -> Vec<(usize, ConsistencyParams)> {
    out.iter()
        .filter_map(|o| match o.reply() {
            Some(Reply::Frame { index, params, .. }) => Some((*index, *params)),
            _ => None,
        })
        .collect()
}

fn errors(out: &[Outgoing]) -> Vec<String> {
    out.iter()
        .filter_map(|o| match o.reply() {
            Some(Reply::Error { message }) => Some(message.clone()),
            _ => None,
        })
        .collect()
}

fn play_to_end(session: &mut Session) -> Vec<Outgoing> {
    send(session, r#"{"type":"play"}"#);
    let mut all = Vec::new();
    while session.is_playing() {
        all.extend(session.advance());
    }
    all
}

#[test]
fn open_emits_first_triplet_with_processed_output() {
    let reg = registry(3);
    let mut s = Session::new(Arc::clone(&reg));
    let out = send(&mut s, r#"{"type":"select_source","source":"clip"}"#);
    assert!(matches!(
        out[0].reply(),
        Some(Reply::SourceOpened { frames: 3, .. })
    ));
    let f = frames(&out);
    assert_eq!(f.len(), 3);
    assert!(f.iter().all(|p| p.index == 1));
    assert_eq!(
        f.iter().map(|p| p.role).collect::<Vec<_>>(),
        [Role::Input, Role::Processed, Role::Stabilized]
    );
    assert_eq!(f[1].png, f[2].png);
    let processed = reg.get("clip").unwrap().processed.load(0).unwrap();
    assert_eq!(f[1].png, encode_png(&processed).unwrap());
    assert!(!s.is_playing());
}

#[test]
fn unknown_source_is_rejected() {
    let mut s = Session::new(registry(3));
    let out = send(&mut s, r#"{"type":"select_source","source":"nope"}"#);
    assert_eq!(errors(&out).len(), 1);
    assert!(errors(&out)[0].contains("unknown source"));
    assert!(s.source().is_none());
    assert_eq!(errors(&send(&mut s, r#"{"type":"play"}"#)).len(), 1);
}

#[test]
fn three_frame_source_counts() {
    let mut s = Session::new(registry(3));
    let mut all = send(&mut s, r#"{"type":"select_source","source":"clip"}"#);
    all.extend(play_to_end(&mut s));
    assert_eq!(frames(&all).len(), 9);
    let indices: Vec<u32> = frames(&all).iter().map(|f| f.index).collect();
    assert_eq!(indices, [1, 1, 1, 2, 2, 2, 3, 3, 3]);
    assert!(matches!(
        all.last().unwrap().reply(),
        Some(Reply::EndOfStream { last_index: 3 })
    ));
    assert!(s.advance().is_empty());
}

#[test]
fn param_change_lands_on_next_frame() {
    let mut s = Session::new(registry(5));
    send(&mut s, r#"{"type":"select_source","source":"clip"}"#);
    send(&mut s, r#"{"type":"play"}"#);
    let first = s.advance();
    assert_eq!(frame_replies(&first)[0].0, 2);
    assert_eq!(frame_replies(&first)[0].1.lambda, 2.0);
    let ack = send(&mut s, r#"{"type":"set_params","params":{"lambda":0.1}}"#);
    assert!(matches!(ack[0].reply(), Some(Reply::Ack { .. })));
    let rest: Vec<_> = std::iter::from_fn(|| {
        let out = s.advance();
        (!out.is_empty()).then_some(out)
    })
    .flatten()
    .collect();
    let echoed = frame_replies(&rest);
    assert_eq!(echoed.len(), 3);
    assert!(echoed.iter().all(|(_, p)| p.lambda == 0.1));
}

#[test]
fn invalid_params_rejected_with_reason() {
    let mut s = Session::new(registry(3));
    send(&mut s, r#"{"type":"select_source","source":"clip"}"#);
    let out = send(
        &mut s,
        r#"{"type":"set_params","params":{"k1":0.6,"k2":0.5}}"#,
    );
    assert!(errors(&out)[0].contains("k1+k2 must be < 1"));
    assert_eq!(s.params().k1, 0.3);
    let bad_kind = send(&mut s, r#"{"type":"rewind"}"#);
    assert_eq!(errors(&bad_kind).len(), 1);
}

#[test]
fn seek_reseeds_with_processed_frame() {
    let reg = registry(6);
    let mut s = Session::new(Arc::clone(&reg));
    send(&mut s, r#"{"type":"select_source","source":"clip"}"#);
    play_to_end(&mut s);
    let out = send(&mut s, r#"{"type":"seek","index":4}"#);
    let f = frames(&out);
    assert_eq!(f.len(), 3);
    assert_eq!(f[2].index, 4);
    assert_eq!(f[1].png, f[2].png);
    let out = play_to_end(&mut s);
    let indices: Vec<usize> = frame_replies(&out).iter().map(|r| r.0).collect();
    assert_eq!(indices, [5, 6]);
    assert_eq!(
        errors(&send(&mut s, r#"{"type":"seek","index":40}"#)).len(),
        1
    );
}

#[test]
fn pause_stops_output() {
    let mut s = Session::new(registry(5));
    send(&mut s, r#"{"type":"select_source","source":"clip"}"#);
    send(&mut s, r#"{"type":"play"}"#);
    assert_eq!(frames(&s.advance()).len(), 3);
    send(&mut s, r#"{"type":"pause"}"#);
    assert!(s.advance().is_empty());
    send(&mut s, r#"{"type":"play"}"#);
    assert_eq!(frame_replies(&s.advance())[0].0, 3);
}

#[test]
fn sessions_are_isolated() {
    let reg = registry(4);
    let mut a = Session::new(Arc::clone(&reg));
    let mut b = Session::new(Arc::clone(&reg));
    send(&mut a, r#"{"type":"select_source","source":"clip"}"#);
    send(&mut b, r#"{"type":"select_source","source":"clip"}"#);
    send(&mut a, r#"{"type":"set_preset","preset":"objective"}"#);
    let pa = frame_replies(&play_to_end(&mut a));
    let pb = frame_replies(&play_to_end(&mut b));
    assert!(pa.iter().all(|(_, p)| p.lambda == 0.7));
    assert!(pb.iter().all(|(_, p)| p.lambda == 2.0));
}

#[test]
fn config_paths_resolve_relative_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("server.toml");
    std::fs::write(
        &path,
        "preset = \"fast\"\n[sources.a]\ninput = \"in\"\nprocessed = \"/abs/proc\"\n",
    )
    .unwrap();
    let config = ServerConfig::load(&path).unwrap();
    assert_eq!(config.preset, Some(Preset::Fast));
    let a = &config.sources["a"];
    assert_eq!(a.input, dir.path().join("in"));
    assert_eq!(a.processed, PathBuf::from("/abs/proc"));
    std::fs::write(&path, "colour = 1\n").unwrap();
    assert!(ServerConfig::load(&path).is_err());
}

fn read_until_end(
    ws: &mut WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>,
) -> Vec<Message> {
    let mut got = Vec::new();
    loop {
        let m = ws.read().unwrap();
        let end = matches!(&m, Message::Text(t) if t.contains("end_of_stream"));
        got.push(m);
        if end {
            return got;
        }
    }
}

#[test]
fn websocket_roundtrip() {
    let reg = registry(3);
    let server = Server::bind(reg, "127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    thread::spawn(move || server.run());
    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    ws.send(Message::Text(
        "{\"type\":\"select_source\",\"source\":\"clip\"}\n{\"type\":\"play\"}".into(),
    ))
    .unwrap();
    let got = read_until_end(&mut ws);
    let binaries: Vec<FramePayload> = got
        .iter()
        .filter_map(|m| match m {
            Message::Binary(b) => Some(FramePayload::decode(b).unwrap()),
            _ => None,
        })
        .collect();
    assert_eq!(binaries.len(), 9);
    let last = decode_frame(&binaries[8].png).unwrap();
    assert_eq!(last.dims(), (24, 16));
    assert!(matches!(&got[0], Message::Text(t) if t.contains("source_opened")));
    ws.close(None).unwrap();
}
