//! Optical flow: estimation, backward warping, occlusion masks and accuracy metrics.

mod estimate;
mod field;
mod provider;
mod viz;
mod warp;

pub use estimate::{estimate_flow, FlowOptions};
pub use field::{FlowField, UNKNOWN_FLOW, UNKNOWN_FLOW_THRESHOLD};
pub use provider::{
    flo_file_name, BuiltinFlow, CachedFlow, FloDirFlow, FlowProvider, FlowRequest, FnFlow,
};
pub use viz::flow_to_color;
pub use warp::{backward_warp, occlusion_mask};

use crate::error::{Error, Result};
use crate::frame::ensure_dims;

/// Mean Euclidean distance in pixels between `pred` and `gt` over the pixels
/// where `gt` is valid.
pub fn endpoint_error(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    ensure_dims(gt.dims(), pred.dims())?;
    let (w, h) = gt.dims();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !gt.is_valid(x, y) {
                continue;
            }
            let (u, v) = pred.get(x, y);
            let (gu, gv) = gt.get(x, y);
            let (du, dv) = ((u - gu) as f64, (v - gv) as f64);
            sum += (du * du + dv * dv).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / count as f64)
}
