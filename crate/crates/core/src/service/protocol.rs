//! Wire format: JSON text messages for control and replies, binary messages
//! with a 16-byte header for frame images.

use serde::{Deserialize, Serialize};

use crate::consistency::{ConsistencyParams, ParamsPatch, Preset, StepTiming};
use crate::error::{Error, Result};

pub const FRAME_HEADER_LEN: usize = 16;

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    /// Opens (or re-opens) a session on a registered source, paused at its first frame.
    SelectSource {
        source: String,
    },
    /// Changes some parameters; takes effect from the next frame solved.
    SetParams {
        params: ParamsPatch,
    },
    SetPreset {
        preset: Preset,
    },
    /// Restarts the stream at `index`, whose output is re-seeded with its processed frame.
    Seek {
        index: usize,
    },
    Play,
    Pause,
}

impl ControlMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlMessage::SelectSource { .. } => "select_source",
            ControlMessage::SetParams { .. } => "set_params",
            ControlMessage::SetPreset { .. } => "set_preset",
            ControlMessage::Seek { .. } => "seek",
            ControlMessage::Play => "play",
            ControlMessage::Pause => "pause",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingMs {
    pub flow_ms: f64,
    pub solve_ms: f64,
}

impl From<StepTiming> for TimingMs {
    fn from(t: StepTiming) -> Self {
        Self {
            flow_ms: t.flow.as_secs_f64() * 1e3,
            solve_ms: t.solve.as_secs_f64() * 1e3,
        }
    }
}

/// Server to client, sent as JSON text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    SourceOpened {
        source: String,
        frames: usize,
        first_index: usize,
        last_index: usize,
        width: usize,
        height: usize,
        params: ConsistencyParams,
    },
    Ack {
        request: String,
        params: ConsistencyParams,
        playing: bool,
    },
    Error {
        message: String,
    },
    /// Announces the three binary frame messages that follow, and the
    /// parameters that produced the stabilized one.
    Frame {
        index: usize,
        params: ConsistencyParams,
        timing: TimingMs,
    },
    EndOfStream {
        last_index: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Input = 0,
    Processed = 1,
    Stabilized = 2,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Input, Role::Processed, Role::Stabilized];

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Role::Input),
            1 => Ok(Role::Processed),
            2 => Ok(Role::Stabilized),
            _ => Err(Error::Session(format!("unknown frame role {b}"))),
        }
    }
}

/// One PNG-encoded image of a frame triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePayload {
    pub index: u32,
    pub role: Role,
    pub png: Vec<u8>,
}

impl FramePayload {
    /// `u32 index LE | u8 role | 3 reserved zero bytes | u64 length LE | PNG`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.png.len());
        out.extend_from_slice(&self.index.to_le_bytes());
        out.push(self.role as u8);
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&(self.png.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.png);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(Error::Session(format!(
                "frame message of {} bytes is shorter than its header",
                bytes.len()
            )));
        }
        let index = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
        let role = Role::from_byte(bytes[4])?;
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let png = &bytes[FRAME_HEADER_LEN..];
        if png.len() != len {
            return Err(Error::Session(format!(
                "frame header declares {len} payload bytes, found {}",
                png.len()
            )));
        }
        Ok(Self {
            index,
            role,
            png: png.to_vec(),
        })
    }
}

/// Anything the session hands to the transport.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Text(Reply),
    Binary(FramePayload),
}

impl Outgoing {
    pub fn reply(&self) -> Option<&Reply> {
        match self {
            Outgoing::Text(r) => Some(r),
            Outgoing::Binary(_) => None,
        }
    }

    pub fn frame(&self) -> Option<&FramePayload> {
        match self {
            Outgoing::Binary(f) => Some(f),
            Outgoing::Text(_) => None,
        }
    }
}

pub fn encode_reply(reply: &Reply) -> String {
    serde_json::to_string(reply).expect("replies serialize")
}
