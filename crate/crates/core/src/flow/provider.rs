//! Sources of optical flow for the pipeline: the built-in estimator,
//! precomputed `.flo` directories, and an on-disk cache around either.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::imgio::{read_flo, write_flo};

use super::{estimate_flow, FlowField, FlowOptions};

/// One flow query: displacement mapping pixels of frame `from_index` toward `to_index`.
#[derive(Debug, Clone, Copy)]
pub struct FlowRequest<'a> {
    pub from_index: usize,
    pub to_index: usize,
    pub from: &'a Frame,
    pub to: &'a Frame,
    /// Estimation downscale factor; ignored by precomputed sources.
    pub downscale: u32,
}

pub trait FlowProvider: Send + Sync {
    /// Short identifier recorded in reports.
    fn id(&self) -> String;

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField>;
}

/// File name used for precomputed and cached flows.
pub fn flo_file_name(from_index: usize, to_index: usize, downscale: u32) -> String {
    if downscale > 1 {
        format!("flow_{from_index:05}_{to_index:05}_ds{downscale}.flo")
    } else {
        format!("flow_{from_index:05}_{to_index:05}.flo")
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuiltinFlow {
    pub options: FlowOptions,
}

impl BuiltinFlow {
    pub fn new(options: FlowOptions) -> Self {
        Self { options }
    }
}

impl FlowProvider for BuiltinFlow {
    fn id(&self) -> String {
        "builtin".into()
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        let opts = FlowOptions {
            downscale: request.downscale,
            ..self.options
        };
        estimate_flow(request.from, request.to, &opts)
    }
}

/// Reads `flow_{from:05}_{to:05}.flo` files from a directory, e.g. flows
/// exported from an external network.
#[derive(Debug, Clone)]
pub struct FloDirFlow {
    dir: PathBuf,
}

impl FloDirFlow {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::UnreadableFile {
                path: dir.to_path_buf(),
                reason: "flow directory does not exist".into(),
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }
}

impl FlowProvider for FloDirFlow {
    fn id(&self) -> String {
        format!("flo-dir:{}", self.dir.display())
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        let path = self
            .dir
            .join(flo_file_name(request.from_index, request.to_index, 1));
        let flow = read_flo(&path)?;
        let dims = request.from.dims();
        if flow.dims() != dims {
            log::debug!(
                "resampling {} from {:?} to {:?}",
                path.display(),
                flow.dims(),
                dims
            );
            return Ok(flow.resize(dims.0, dims.1));
        }
        Ok(flow)
    }
}

/// Wraps another provider and persists every flow it produces as `.flo`,
/// keyed by frame indices, direction and downscale.
pub struct CachedFlow<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: FlowProvider> CachedFlow<P> {
    pub fn new(inner: P, dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            inner,
            dir: dir.as_ref().to_path_buf(),
        })
    }
}

impl<P: FlowProvider> FlowProvider for CachedFlow<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        let path = self.dir.join(flo_file_name(
            request.from_index,
            request.to_index,
            request.downscale,
        ));
        if path.is_file() {
            if let Ok(flow) = read_flo(&path) {
                if flow.dims() == request.from.dims() {
                    return Ok(flow);
                }
            }
        }
        let flow = self.inner.flow(request)?;
        write_flo(&flow, &path)?;
        Ok(flow)
    }
}

/// Flow computed by a closure of `(from_index, to_index, width, height)`;
/// used for synthetic sequences whose motion is known exactly.
pub struct FnFlow<F> {
    name: String,
    f: F,
}

impl<F> FnFlow<F>
where
    F: Fn(usize, usize, usize, usize) -> FlowField + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> FlowProvider for FnFlow<F>
where
    F: Fn(usize, usize, usize, usize) -> FlowField + Send + Sync,
{
    fn id(&self) -> String {
        self.name.clone()
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        let (w, h) = request.from.dims();
        let flow = (self.f)(request.from_index, request.to_index, w, h);
        crate::frame::ensure_dims((w, h), flow.dims())?;
        Ok(flow)
    }
}

impl<T: FlowProvider + ?Sized> FlowProvider for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        (**self).flow(request)
    }
}

impl<T: FlowProvider + ?Sized> FlowProvider for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        (**self).flow(request)
    }
}

impl<T: FlowProvider + ?Sized> FlowProvider for &T {
    fn id(&self) -> String {
        (**self).id()
    }

    fn flow(&self, request: FlowRequest<'_>) -> Result<FlowField> {
        (**self).flow(request)
    }
}
