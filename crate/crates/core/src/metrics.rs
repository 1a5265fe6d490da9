//! Similarity to the per-frame processed stream (SSIM) and temporal warping
//! error with occlusion masking.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{backward_warp, occlusion_mask, FlowField, FlowProvider, FlowRequest};
use crate::frame::{ensure_dims, Frame, Mask};
use crate::imgio::FrameSource;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Per-frame values of one metric over a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    /// `(frame index, value)` in frame order.
    pub values: Vec<(usize, f64)>,
    /// Frames (or pair starts) that produced no value, e.g. fully occluded pairs.
    pub skipped: Vec<usize>,
}

/// Aggregate written next to the per-frame CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub count: usize,
    pub skipped: Vec<usize>,
    pub preset: Option<String>,
    pub flow_backend: Option<String>,
    /// Mean of the same metric on a reference sequence, when one was scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_mean: Option<f64>,
    /// `mean / reference_mean`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl MetricSummary {
    pub fn with_reference(mut self, reference_mean: f64) -> Self {
        self.reference_mean = Some(reference_mean);
        self.ratio = Some(self.mean / reference_mean);
        self
    }
}

impl MetricReport {
    pub fn new(metric: impl Into<String>) -> Self {
        Self {
            metric: metric.into(),
            values: Vec::new(),
            skipped: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Arithmetic mean of the per-frame values; NaN when there are none.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().map(|(_, v)| v).sum::<f64>() / self.values.len() as f64
    }

    /// `frame_index,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,value\n");
        for (i, v) in &self.values {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }

    pub fn summary(&self, preset: Option<&str>, flow_backend: Option<&str>) -> MetricSummary {
        MetricSummary {
            metric: self.metric.clone(),
            mean: self.mean(),
            count: self.count(),
            skipped: self.skipped.clone(),
            preset: preset.map(str::to_owned),
            flow_backend: flow_backend.map(str::to_owned),
            reference_mean: None,
            ratio: None,
        }
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW)
                .map(|i| k[i] * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Single-scale SSIM on luma with an 11x11 Gaussian window (σ = 1.5), averaged
/// over all window positions fully inside the image.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    ensure_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::DegenerateResolution {
            width: w,
            height: h,
            min: SSIM_WINDOW,
        });
    }
    let x: Vec<f64> = a.luma().into_iter().map(f64::from).collect();
    let y: Vec<f64> = b.luma().into_iter().map(f64::from).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let k = gaussian_kernel();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, w, h, &k));
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Per-frame SSIM of `candidate` against `reference`.
pub fn ssim_report(candidate: &FrameSource, reference: &FrameSource) -> Result<MetricReport> {
    if candidate.len() != reference.len() {
        return Err(Error::SequenceMismatch(format!(
            "candidate has {} frames, reference has {}",
            candidate.len(),
            reference.len()
        )));
    }
    if candidate.resolution() != reference.resolution() {
        return Err(Error::ResolutionMismatch {
            expected: reference.resolution(),
            found: candidate.resolution(),
        });
    }
    let mut report = MetricReport::new("ssim");
    for pos in 0..candidate.len() {
        let value = ssim(&candidate.load(pos)?, &reference.load(pos)?)?;
        report.values.push((candidate.index_at(pos), value));
    }
    Ok(report)
}

/// Masked mean L1 between `current` and `next` warped back by `forward`,
/// over pixels and channels. `None` when the mask is empty.
pub fn pair_warping_error(
    current: &Frame,
    next: &Frame,
    forward: &FlowField,
    mask: &Mask,
) -> Result<Option<f64>> {
    current.ensure_same_shape(next)?;
    ensure_dims(current.dims(), mask.dims())?;
    let (warped, inside) = backward_warp(next, forward)?;
    let c = current.channels();
    let mut weight = 0.0f64;
    let mut sum = 0.0f64;
    for (i, (a, b)) in current
        .data()
        .chunks_exact(c)
        .zip(warped.data().chunks_exact(c))
        .enumerate()
    {
        let m = (mask.values()[i] * inside.values()[i]) as f64;
        if m == 0.0 {
            continue;
        }
        weight += m;
        sum += m * a
            .iter()
            .zip(b)
            .map(|(p, q)| (p - q).abs() as f64)
            .sum::<f64>();
    }
    if weight == 0.0 {
        return Ok(None);
    }
    Ok(Some(sum / (weight * c as f64)))
}

/// Temporal warping error of a video, one value per consecutive pair keyed
/// by the first frame's index. Flow is estimated on the video itself at full
/// resolution.
pub fn warping_error(video: &FrameSource, flow: &dyn FlowProvider) -> Result<MetricReport> {
    warping_error_guided(video, None, flow, 1)
}

/// [`warping_error`] with flow estimated on `guide` (typically the unprocessed
/// input, whose motion is not obscured by flicker) at 1/`downscale` resolution.
pub fn warping_error_guided(
    video: &FrameSource,
    guide: Option<&FrameSource>,
    flow: &dyn FlowProvider,
    downscale: u32,
) -> Result<MetricReport> {
    if video.len() < 2 {
        return Err(Error::SequenceMismatch(format!(
            "warping error needs at least 2 frames, got {}",
            video.len()
        )));
    }
    if let Some(g) = guide {
        if g.len() != video.len() || g.resolution() != video.resolution() {
            return Err(Error::SequenceMismatch(format!(
                "guide has {} frames at {:?}, video has {} at {:?}",
                g.len(),
                g.resolution(),
                video.len(),
                video.resolution()
            )));
        }
    }
    let mut report = MetricReport::new("ewarp");
    let mut current = video.load(0)?;
    let mut guide_current = guide.map(|g| g.load(0)).transpose()?;
    for pos in 0..video.len() - 1 {
        let next = video.load(pos + 1)?;
        let guide_next = guide.map(|g| g.load(pos + 1)).transpose()?;
        let (i, j) = (video.index_at(pos), video.index_at(pos + 1));
        let (from, to) = match (&guide_current, &guide_next) {
            (Some(a), Some(b)) => (a, b),
            _ => (&current, &next),
        };
        let request = |from_index, to_index, from, to| FlowRequest {
            from_index,
            to_index,
            from,
            to,
            downscale,
        };
        let forward = flow.flow(request(i, j, from, to))?;
        let backward = flow.flow(request(j, i, to, from))?;
        let mask = occlusion_mask(&forward, &backward)?;
        match pair_warping_error(&current, &next, &forward, &mask)? {
            Some(v) => report.values.push((i, v)),
            None => {
                log::warn!("frame pair {i}-{j} fully occluded; skipped");
                report.skipped.push(i);
            }
        }
        current = next;
        guide_current = guide_next;
    }
    Ok(report)
}
