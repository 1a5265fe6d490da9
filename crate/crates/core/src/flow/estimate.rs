//! Coarse-to-fine dense inverse search (DIS-style) flow estimation.
//!
//! Per pyramid level, a grid of overlapping patches from the `from` image is
//! aligned against the `to` image with inverse-compositional Gauss-Newton
//! steps, the patch displacements are fused into a dense field weighted by
//! their photometric residual, and a few Jacobi sweeps of a linearized
//! brightness-constancy + smoothness energy regularize the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ensure_dims, Frame};

use super::warp::sample_plane;
use super::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    /// Pyramid levels, including full resolution.
    pub levels: usize,
    /// Square patch side in pixels; odd, at least 3.
    pub patch_size: usize,
    /// Gauss-Newton iterations per patch and level.
    pub iterations: usize,
    /// Estimate on frames reduced by this factor (1, 2 or 4), then upsample.
    pub downscale: u32,
    /// Jacobi sweeps of the smoothing pass per level.
    pub smoothing_iterations: usize,
    /// Regularization weight of the smoothing pass (squared intensity units).
    pub smoothness: f32,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            levels: 5,
            patch_size: 9,
            iterations: 4,
            downscale: 1,
            smoothing_iterations: 5,
            smoothness: 0.01,
        }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::InvalidParams("pyramid levels must be >= 1".into()));
        }
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidParams(
                "patch size must be odd and >= 3".into(),
            ));
        }
        if ![1, 2, 4].contains(&self.downscale) {
            return Err(Error::InvalidParams(
                "flow downscale must be 1, 2 or 4".into(),
            ));
        }
        if !(self.smoothness.is_finite() && self.smoothness > 0.0) {
            return Err(Error::InvalidParams("smoothness must be > 0".into()));
        }
        Ok(())
    }
}

/// A single-channel image plane.
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn sample(&self, x: f32, y: f32) -> f32 {
        sample_plane(&self.data, self.width, self.height, x, y)
    }

    /// Box-filter reduction by an integer factor (trailing partial blocks dropped).
    pub fn reduce(&self, factor: usize) -> Plane {
        let width = (self.width / factor).max(1);
        let height = (self.height / factor).max(1);
        let norm = 1.0 / (factor * factor) as f32;
        let mut data = vec![0.0; width * height];
        data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for dy in 0..factor {
                    let sy = (y * factor + dy).min(self.height - 1);
                    for dx in 0..factor {
                        let sx = (x * factor + dx).min(self.width - 1);
                        acc += self.at(sx, sy);
                    }
                }
                *out = acc * norm;
            }
        });
        Plane {
            width,
            height,
            data,
        }
    }

    /// Separable 5-tap binomial low-pass followed by 2x subsampling.
    pub fn pyr_down(&self) -> Plane {
        const TAPS: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.width, self.height);
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut horiz = vec![0.0f32; w * h];
        horiz.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                *out = TAPS
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * self.at(clamp(x as isize + k as isize - 2, w), y))
                    .sum();
            }
        });
        let width = (w / 2).max(1);
        let height = (h / 2).max(1);
        let mut data = vec![0.0f32; width * height];
        data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                *out = TAPS
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * horiz[clamp(2 * y as isize + k as isize - 2, h) * w + 2 * x])
                    .sum();
            }
        });
        Plane {
            width,
            height,
            data,
        }
    }

    /// Central-difference gradients with replicated borders.
    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let (w, h) = (self.width, self.height);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        gx.par_chunks_mut(w)
            .zip(gy.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (rx, ry))| {
                let yu = y.saturating_sub(1);
                let yd = (y + 1).min(h - 1);
                for x in 0..w {
                    let xl = x.saturating_sub(1);
                    let xr = (x + 1).min(w - 1);
                    rx[x] = 0.5 * (self.at(xr, y) - self.at(xl, y));
                    ry[x] = 0.5 * (self.at(x, yd) - self.at(x, yu));
                }
            });
        (gx, gy)
    }
}

/// Estimates dense flow mapping pixels of `from` toward `to`, so that
/// `backward_warp(to, flow)` aligns `to` with `from`.
pub fn estimate_flow(from: &Frame, to: &Frame, opts: &FlowOptions) -> Result<FlowField> {
    opts.validate()?;
    ensure_dims(from.dims(), to.dims())?;
    let (w, h) = from.dims();
    let p = opts.patch_size;
    if w < p || h < p {
        return Err(Error::DegenerateResolution {
            width: w,
            height: h,
            min: p,
        });
    }
    let mut src = Plane {
        width: w,
        height: h,
        data: from.luma(),
    };
    let mut dst = Plane {
        width: w,
        height: h,
        data: to.luma(),
    };
    let mut factor = opts.downscale as usize;
    while factor > 1 && (w / factor < p || h / factor < p) {
        factor /= 2;
    }
    if factor > 1 {
        src = src.reduce(factor);
        dst = dst.reduce(factor);
    }
    let flow = estimate_planes(&src, &dst, opts);
    Ok(if factor > 1 { flow.resize(w, h) } else { flow })
}

fn build_pyramid(base: &Plane, levels: usize) -> Vec<Plane> {
    let mut pyr = vec![base.clone()];
    for _ in 1..levels {
        let next = pyr.last().unwrap().pyr_down();
        pyr.push(next);
    }
    pyr
}

pub(crate) fn estimate_planes(src: &Plane, dst: &Plane, opts: &FlowOptions) -> FlowField {
    // the coarsest level must still hold a few patches across its short side
    let min_side = 3 * opts.patch_size;
    let mut levels = 1;
    while levels < opts.levels {
        let scale = 1usize << levels;
        if src.width / scale < min_side || src.height / scale < min_side {
            break;
        }
        levels += 1;
    }
    let src_pyr = build_pyramid(src, levels);
    let dst_pyr = build_pyramid(dst, levels);

    let coarsest = &src_pyr[levels - 1];
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    for level in (0..levels).rev() {
        let (s, d) = (&src_pyr[level], &dst_pyr[level]);
        if flow.dims() != (s.width, s.height) {
            flow = flow.resize(s.width, s.height);
        }
        flow = refine_level(s, d, &flow, opts, level == levels - 1);
    }
    flow
}

fn patch_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

struct PatchResult {
    x0: usize,
    y0: usize,
    u: f32,
    v: f32,
}

/// Integer displacement radius scanned per patch around its initial
/// displacement, at the coarsest level and at the finer levels.
const COARSE_SEARCH_RADIUS: i32 = 3;
const FINE_SEARCH_RADIUS: i32 = 1;

fn refine_level(
    src: &Plane,
    dst: &Plane,
    init: &FlowField,
    opts: &FlowOptions,
    coarsest: bool,
) -> FlowField {
    let p = opts.patch_size;
    let stride = (p / 2).max(1);
    let (gx, gy) = src.gradients();
    let xs = patch_origins(src.width, p, stride);
    let ys = patch_origins(src.height, p, stride);
    let origins: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let radius = if coarsest {
        COARSE_SEARCH_RADIUS
    } else {
        FINE_SEARCH_RADIUS
    };

    let patches: Vec<PatchResult> = origins
        .par_iter()
        .map(|&(x0, y0)| {
            let tpl = Template::new(src, &gx, &gy, x0, y0, p);
            let start = tpl.best_candidate(dst, init);
            let start = tpl.integer_search(dst, start, radius);
            let (u, v) = tpl.inverse_search(dst, &gx, &gy, start, opts.iterations);
            PatchResult { x0, y0, u, v }
        })
        .collect();

    let dense = densify(src, dst, init, &patches, p);
    smooth(src, dst, &dense, opts)
}

/// A mean-normalized patch of the `from` image with its Gauss-Newton Hessian.
struct Template {
    x0: usize,
    y0: usize,
    p: usize,
    values: Vec<f32>,
    hxx: f32,
    hxy: f32,
    hyy: f32,
}

impl Template {
    fn new(src: &Plane, gx: &[f32], gy: &[f32], x0: usize, y0: usize, p: usize) -> Self {
        let n = (p * p) as f32;
        let mut values = Vec::with_capacity(p * p);
        let (mut hxx, mut hxy, mut hyy) = (0.0f32, 0.0f32, 0.0f32);
        let (mut sx, mut sy) = (0.0f32, 0.0f32);
        for y in y0..y0 + p {
            for x in x0..x0 + p {
                let i = y * src.width + x;
                values.push(src.data[i]);
                hxx += gx[i] * gx[i];
                hxy += gx[i] * gy[i];
                hyy += gy[i] * gy[i];
                sx += gx[i];
                sy += gy[i];
            }
        }
        let mean = values.iter().sum::<f32>() / n;
        values.iter_mut().for_each(|v| *v -= mean);
        // residuals are mean-normalized, so the constant part of the gradients drops out
        Self {
            x0,
            y0,
            p,
            values,
            hxx: hxx - sx * sx / n,
            hxy: hxy - sx * sy / n,
            hyy: hyy - sy * sy / n,
        }
    }

    /// Samples the `to` patch displaced by `(u, v)` into `out`, returning its mean.
    fn gather(&self, dst: &Plane, u: f32, v: f32, out: &mut [f32]) -> f32 {
        let p = self.p;
        let mut sum = 0.0;
        for (k, o) in out.iter_mut().enumerate() {
            let (x, y) = (self.x0 + k % p, self.y0 + k / p);
            *o = dst.sample(x as f32 + u, y as f32 + v);
            sum += *o;
        }
        sum / (p * p) as f32
    }

    /// Mean-normalized SSD against the `to` image displaced by `(u, v)`.
    fn cost(&self, dst: &Plane, (u, v): (f32, f32)) -> f32 {
        let p = self.p;
        let (mut s, mut s2, mut st) = (0.0f32, 0.0f32, 0.0f32);
        for (k, t) in self.values.iter().enumerate() {
            let (x, y) = (self.x0 + k % p, self.y0 + k / p);
            let j = dst.sample(x as f32 + u, y as f32 + v);
            s += j;
            s2 += j * j;
            st += j * t;
        }
        let t2: f32 = self.values.iter().map(|t| t * t).sum();
        (s2 - s * s / (p * p) as f32 - 2.0 * st + t2).max(0.0)
    }

    /// Cheapest start among the incoming flow at the patch center and one
    /// patch width away in each direction.
    fn best_candidate(&self, dst: &Plane, init: &FlowField) -> (f32, f32) {
        let (w, h) = init.dims();
        let p = self.p;
        let (cx, cy) = (self.x0 + p / 2, self.y0 + p / 2);
        let probes = [
            (cx.saturating_sub(p), cy),
            ((cx + p).min(w - 1), cy),
            (cx, cy.saturating_sub(p)),
            (cx, (cy + p).min(h - 1)),
        ];
        let mut best = init.get(cx, cy);
        let mut best_cost = self.cost(dst, best);
        for (x, y) in probes {
            let cand = init.get(x, y);
            if cand == best {
                continue;
            }
            let c = self.cost(dst, cand);
            if c < best_cost {
                best_cost = c;
                best = cand;
            }
        }
        best
    }

    /// Exhaustive search over integer offsets around `start`.
    fn integer_search(&self, dst: &Plane, start: (f32, f32), radius: i32) -> (f32, f32) {
        let mut best = start;
        let mut best_cost = self.cost(dst, start);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let cand = (start.0 + dx as f32, start.1 + dy as f32);
                let c = self.cost(dst, cand);
                if c < best_cost {
                    best_cost = c;
                    best = cand;
                }
            }
        }
        best
    }

    /// Inverse-compositional Gauss-Newton refinement. Returns `start`
    /// unchanged when the patch has no usable texture or the refinement does
    /// not lower the residual.
    fn inverse_search(
        &self,
        dst: &Plane,
        gx: &[f32],
        gy: &[f32],
        start: (f32, f32),
        iterations: usize,
    ) -> (f32, f32) {
        let det = self.hxx * self.hyy - self.hxy * self.hxy;
        let trace = self.hxx + self.hyy;
        if det.is_nan() || det <= 1e-6 * trace * trace + 1e-12 {
            return start;
        }
        let p = self.p;
        let (mut u, mut v) = start;
        let mut sampled = vec![0.0f32; p * p];
        for _ in 0..iterations {
            let j_mean = self.gather(dst, u, v, &mut sampled);
            let (mut bx, mut by) = (0.0f32, 0.0f32);
            for (k, (j, t)) in sampled.iter().zip(&self.values).enumerate() {
                let i = (self.y0 + k / p) * (dst.width) + self.x0 + k % p;
                let d = (j - j_mean) - t;
                bx += gx[i] * d;
                by += gy[i] * d;
            }
            let du = (self.hyy * bx - self.hxy * by) / det;
            let dv = (self.hxx * by - self.hxy * bx) / det;
            if !du.is_finite() || !dv.is_finite() {
                break;
            }
            u -= du;
            v -= dv;
            if du * du + dv * dv < 1e-6 {
                break;
            }
        }
        if (u, v) != start && self.cost(dst, (u, v)) > self.cost(dst, start) {
            return start;
        }
        (u, v)
    }
}

fn densify(
    src: &Plane,
    dst: &Plane,
    init: &FlowField,
    patches: &[PatchResult],
    p: usize,
) -> FlowField {
    let (w, h) = (src.width, src.height);
    let mut acc = vec![0.0f32; w * h * 2];
    let mut weight = vec![0.0f32; w * h];
    for patch in patches {
        for y in patch.y0..patch.y0 + p {
            for x in patch.x0..patch.x0 + p {
                let i = y * w + x;
                let d = (dst.sample(x as f32 + patch.u, y as f32 + patch.v) - src.data[i]).abs();
                let wt = 1.0 / d.max(1.0 / 255.0);
                acc[2 * i] += wt * patch.u;
                acc[2 * i + 1] += wt * patch.v;
                weight[i] += wt;
            }
        }
    }
    FlowField::from_fn(w, h, |x, y| {
        let i = y * w + x;
        if weight[i] > 0.0 {
            (acc[2 * i] / weight[i], acc[2 * i + 1] / weight[i])
        } else {
            init.get(x, y)
        }
    })
}

/// Jacobi sweeps on the linearized energy
/// `(It + Ix du + Iy dv)² + smoothness · (|∇u|² + |∇v|²)`.
fn smooth(src: &Plane, dst: &Plane, flow: &FlowField, opts: &FlowOptions) -> FlowField {
    if opts.smoothing_iterations == 0 {
        return flow.clone();
    }
    let (w, h) = (src.width, src.height);
    let mut warped = vec![0.0f32; w * h];
    warped.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let (u, v) = flow.get(x, y);
            *o = dst.sample(x as f32 + u, y as f32 + v);
        }
    });
    let warped = Plane {
        width: w,
        height: h,
        data: warped,
    };
    let (wx, wy) = warped.gradients();
    let (sx, sy) = src.gradients();
    let ix: Vec<f32> = wx.iter().zip(&sx).map(|(a, b)| 0.5 * (a + b)).collect();
    let iy: Vec<f32> = wy.iter().zip(&sy).map(|(a, b)| 0.5 * (a + b)).collect();
    let it: Vec<f32> = warped
        .data
        .iter()
        .zip(&src.data)
        .map(|(a, b)| a - b)
        .collect();

    let base = flow.interleaved().to_vec();
    let mut cur = base.clone();
    let mut next = base.clone();
    let alpha = opts.smoothness;
    for _ in 0..opts.smoothing_iterations {
        next.par_chunks_mut(2 * w).enumerate().for_each(|(y, row)| {
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            for x in 0..w {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(w - 1);
                let i = y * w + x;
                let avg = |k: usize| {
                    0.25 * (cur[2 * (y * w + xl) + k]
                        + cur[2 * (y * w + xr) + k]
                        + cur[2 * (yu * w + x) + k]
                        + cur[2 * (yd * w + x) + k])
                };
                let (ub, vb) = (avg(0), avg(1));
                let r = it[i] + ix[i] * (ub - base[2 * i]) + iy[i] * (vb - base[2 * i + 1]);
                let denom = alpha + ix[i] * ix[i] + iy[i] * iy[i];
                row[2 * x] = ub - ix[i] * r / denom;
                row[2 * x + 1] = vb - iy[i] * r / denom;
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    FlowField::with_validity(w, h, cur, flow.validity().to_vec())
        .expect("smoothed flow keeps its dimensions")
}
