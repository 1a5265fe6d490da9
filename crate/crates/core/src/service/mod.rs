//! Live session server.
//!
//! Each WebSocket connection owns a [`Session`]: the client selects a source,
//! steers playback and parameters with JSON control messages, and receives
//! (input, processed, stabilized) frame triplets as PNG binary messages.
//! The message layouts are documented in `protocol.md`.

mod protocol;
mod server;
mod session;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cli::{flow_provider, open_pair_sources, FlowBackend};
use crate::consistency::{ConsistencyParams, Preset};
use crate::error::{Error, Result};
use crate::flow::FlowProvider;
use crate::imgio::FrameSource;

pub use protocol::{
    encode_reply, ControlMessage, FramePayload, Outgoing, Reply, Role, TimingMs, FRAME_HEADER_LEN,
};
pub use server::{serve, Server};
pub use session::Session;

/// One frame-pair directory registered with the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub input: PathBuf,
    pub processed: PathBuf,
    pub pattern: Option<String>,
    #[serde(default)]
    pub flow_backend: FlowBackend,
    pub flo_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

/// Server configuration file.
///
/// ```toml
/// preset = "fast"
///
/// [sources.city]
/// input = "data/city/input"
/// processed = "data/city/stylized"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// Parameters new sessions start with.
    pub preset: Option<Preset>,
    #[serde(default)]
    pub sources: BTreeMap<String, SourceConfig>,
}

impl ServerConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative source paths are resolved against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for source in config.sources.values_mut() {
            for p in [
                Some(&mut source.input),
                Some(&mut source.processed),
                source.flo_dir.as_mut(),
                source.cache_dir.as_mut(),
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }
}

/// A registered source: read-only frames shared by every session on it.
pub struct SourceHandle {
    pub name: String,
    pub input: FrameSource,
    pub processed: FrameSource,
    pub flow: Arc<dyn FlowProvider>,
}

/// The sources a server can stream, by name.
pub struct SourceRegistry {
    sources: BTreeMap<String, Arc<SourceHandle>>,
    default_params: ConsistencyParams,
}

impl Default for SourceRegistry {
    fn default() -> Self {
        Self::new(ConsistencyParams::default())
    }
}

impl SourceRegistry {
    pub fn new(default_params: ConsistencyParams) -> Self {
        Self {
            sources: BTreeMap::new(),
            default_params,
        }
    }

    pub fn from_config(config: &ServerConfig) -> Result<Self> {
        let mut registry = Self::new(config.preset.unwrap_or(Preset::Default).params());
        for (name, src) in &config.sources {
            let (input, processed) =
                open_pair_sources(&src.input, &src.processed, src.pattern.as_deref())?;
            let flow = flow_provider(
                src.flow_backend,
                src.flo_dir.as_deref(),
                src.cache_dir.as_deref(),
            )?;
            registry.insert(name, input, processed, Arc::from(flow))?;
        }
        Ok(registry)
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        input: FrameSource,
        processed: FrameSource,
        flow: Arc<dyn FlowProvider>,
    ) -> Result<()> {
        let name = name.into();
        if input.len() != processed.len() || input.resolution() != processed.resolution() {
            return Err(Error::SequenceMismatch(format!(
                "source '{name}': input has {} frames at {:?}, processed has {} at {:?}",
                input.len(),
                input.resolution(),
                processed.len(),
                processed.resolution()
            )));
        }
        self.sources.insert(
            name.clone(),
            Arc::new(SourceHandle {
                name,
                input,
                processed,
                flow,
            }),
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<SourceHandle>> {
        self.sources.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sources.keys().map(String::as_str)
    }

    pub fn default_params(&self) -> ConsistencyParams {
        self.default_params
    }
}

#[cfg(test)]
mod tests;
