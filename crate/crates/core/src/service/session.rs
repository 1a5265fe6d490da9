//! Transport-free session logic: one client's view of one source.

use std::sync::Arc;

use crate::consistency::{ConsistencyParams, FramePair, Stabilizer, StepOutput};
use crate::error::{Error, Result};
use crate::flow::FlowProvider;
use crate::imgio::encode_png;

use super::protocol::{ControlMessage, FramePayload, Outgoing, Reply, Role};
use super::{SourceHandle, SourceRegistry};

struct Open {
    source: Arc<SourceHandle>,
    stabilizer: Stabilizer<Arc<dyn FlowProvider>>,
    /// Position of the next source frame to feed the stabilizer.
    next_read: usize,
    /// The final frame has been emitted; the next advance sends the end marker.
    drained: bool,
    ended: bool,
}

/// State machine behind one connection. Control messages are applied
/// between frames; [`Session::advance`] produces at most one frame triplet.
pub struct Session {
    registry: Arc<SourceRegistry>,
    params: ConsistencyParams,
    playing: bool,
    open: Option<Open>,
}

impl Session {
    pub fn new(registry: Arc<SourceRegistry>) -> Self {
        let params = registry.default_params();
        Self {
            registry,
            params,
            playing: false,
            open: None,
        }
    }

    pub fn params(&self) -> &ConsistencyParams {
        &self.params
    }

    pub fn is_playing(&self) -> bool {
        self.playing
    }

    pub fn source(&self) -> Option<&str> {
        self.open.as_ref().map(|o| o.source.name.as_str())
    }

    /// Handles one text message, which may hold several newline-separated
    /// JSON control messages.
    pub fn handle_text(&mut self, text: &str) -> Vec<Outgoing> {
        let mut out = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            match serde_json::from_str::<ControlMessage>(line) {
                Ok(msg) => out.extend(self.apply(msg)),
                Err(e) => out.push(error_reply(format!("invalid control message: {e}"))),
            }
        }
        out
    }

    pub fn apply(&mut self, msg: ControlMessage) -> Vec<Outgoing> {
        let kind = msg.kind();
        let result = match msg {
            ControlMessage::SelectSource { source } => self.select_source(&source),
            ControlMessage::SetParams { params } => params
                .apply(&self.params)
                .and_then(|p| self.set_params(p, kind)),
            ControlMessage::SetPreset { preset } => self.set_params(preset.params(), kind),
            ControlMessage::Seek { index } => self.seek(index),
            ControlMessage::Play => match self.open {
                Some(_) => {
                    self.playing = true;
                    Ok(vec![self.ack(kind)])
                }
                None => Err(no_source()),
            },
            ControlMessage::Pause => {
                self.playing = false;
                Ok(vec![self.ack(kind)])
            }
        };
        result.unwrap_or_else(|e| vec![error_reply(e.to_string())])
    }

    /// Produces the next triplet (or the end marker) while playing.
    pub fn advance(&mut self) -> Vec<Outgoing> {
        if !self.playing {
            return Vec::new();
        }
        match self.advance_inner() {
            Ok(out) => out,
            Err(e) => {
                self.playing = false;
                vec![error_reply(e.to_string())]
            }
        }
    }

    fn advance_inner(&mut self) -> Result<Vec<Outgoing>> {
        let open = self.open.as_mut().ok_or_else(no_source)?;
        if open.ended {
            self.playing = false;
            return Ok(Vec::new());
        }
        if open.drained {
            open.ended = true;
            self.playing = false;
            let last = open.source.input.index_at(open.source.input.len() - 1);
            return Ok(vec![Outgoing::Text(Reply::EndOfStream {
                last_index: last,
            })]);
        }
        let step = if open.next_read < open.source.input.len() {
            let pair = open.source.pair(open.next_read)?;
            open.next_read += 1;
            open.stabilizer.push(pair)?
        } else {
            open.drained = true;
            open.stabilizer.finish()?
        };
        match step {
            Some(step) => triplet(&open.source, step),
            None => Err(Error::Session("stabilizer produced no frame".into())),
        }
    }

    fn require_open(&self) -> Result<&Open> {
        self.open.as_ref().ok_or_else(no_source)
    }

    fn ack(&self, request: &str) -> Outgoing {
        Outgoing::Text(Reply::Ack {
            request: request.to_owned(),
            params: self.params,
            playing: self.playing,
        })
    }

    fn set_params(&mut self, params: ConsistencyParams, kind: &str) -> Result<Vec<Outgoing>> {
        params.validate()?;
        if let Some(open) = &mut self.open {
            open.stabilizer.set_params(params)?;
        }
        self.params = params;
        Ok(vec![self.ack(kind)])
    }

    fn select_source(&mut self, name: &str) -> Result<Vec<Outgoing>> {
        let source = self
            .registry
            .get(name)
            .ok_or_else(|| Error::Session(format!("unknown source '{name}'")))?;
        let stabilizer = Stabilizer::new(self.params, Arc::clone(&source.flow))?;
        let (width, height) = source.input.resolution();
        let opened = Reply::SourceOpened {
            source: source.name.clone(),
            frames: source.input.len(),
            first_index: source.input.index_at(0),
            last_index: source.input.index_at(source.input.len() - 1),
            width,
            height,
            params: self.params,
        };
        self.playing = false;
        self.open = Some(Open {
            source,
            stabilizer,
            next_read: 0,
            drained: false,
            ended: false,
        });
        let mut out = vec![Outgoing::Text(opened)];
        out.extend(self.restart_at(0)?);
        Ok(out)
    }

    fn seek(&mut self, index: usize) -> Result<Vec<Outgoing>> {
        let open = self.require_open()?;
        let source = &open.source.input;
        let pos = (0..source.len())
            .find(|&p| source.index_at(p) == index)
            .ok_or_else(|| {
                Error::Session(format!(
                    "frame {index} is outside {}..={}",
                    source.index_at(0),
                    source.index_at(source.len() - 1)
                ))
            })?;
        self.restart_at(pos)
    }

    /// Re-seeds the stream at `pos`: the output there equals the processed frame.
    fn restart_at(&mut self, pos: usize) -> Result<Vec<Outgoing>> {
        let open = self.open.as_mut().ok_or_else(no_source)?;
        open.stabilizer.reset();
        open.drained = false;
        open.ended = false;
        open.stabilizer.push(open.source.pair(pos)?)?;
        open.next_read = pos + 1;
        let step = if open.next_read < open.source.input.len() {
            let pair = open.source.pair(open.next_read)?;
            open.next_read += 1;
            open.stabilizer.push(pair)?
        } else {
            open.drained = true;
            open.stabilizer.finish()?
        };
        let step = step.ok_or_else(|| Error::Session("re-seed produced no frame".into()))?;
        triplet(&open.source, step)
    }
}

fn no_source() -> Error {
    Error::Session("no source selected".into())
}

fn error_reply(message: String) -> Outgoing {
    Outgoing::Text(Reply::Error { message })
}

fn triplet(source: &SourceHandle, step: StepOutput) -> Result<Vec<Outgoing>> {
    let pos = (0..source.input.len())
        .find(|&p| source.input.index_at(p) == step.index)
        .ok_or_else(|| Error::Session(format!("frame {} not in source", step.index)))?;
    let input = source.input.load(pos)?;
    let processed = source.processed.load(pos)?;
    let index = u32::try_from(step.index)
        .map_err(|_| Error::Session(format!("frame index {} exceeds u32", step.index)))?;
    let mut out = vec![Outgoing::Text(Reply::Frame {
        index: step.index,
        params: step.params,
        timing: step.timing.into(),
    })];
    for (role, frame) in Role::ALL
        .into_iter()
        .zip([&input, &processed, &step.output])
    {
        out.push(Outgoing::Binary(FramePayload {
            index,
            role,
            png: encode_png(frame)?,
        }));
    }
    Ok(out)
}

impl SourceHandle {
    fn pair(&self, pos: usize) -> Result<FramePair> {
        FramePair::new(
            self.input.index_at(pos),
            self.input.load(pos)?,
            self.processed.load(pos)?,
        )
    }
}
