//! Procedural test sequences with known motion: a smooth random texture
//! translating by a whole number of pixels per frame, paired with a simple
//! stylization that flickers through per-frame i.i.d. noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::consistency::FramePair;
use crate::error::{Error, Result};
use crate::flow::{FlowField, FnFlow};
use crate::frame::{Frame, LUMA};

/// Random RGB texture, box-blurred with wrap-around so that it tiles.
pub fn texture(width: usize, height: usize, blur_radius: usize, seed: u64) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planes: Vec<Vec<f32>> = (0..3)
        .map(|_| (0..width * height).map(|_| rng.gen::<f32>()).collect())
        .collect();
    for plane in &mut planes {
        for _ in 0..2 {
            box_blur_wrap(plane, width, height, blur_radius);
        }
        stretch(plane);
    }
    Frame::from_planes(width, height, &planes)
}

fn box_blur_wrap(plane: &mut [f32], w: usize, h: usize, r: usize) {
    if r == 0 {
        return;
    }
    let n = (2 * r + 1) as f32;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let s: f32 = (0..=2 * r)
                .map(|k| plane[y * w + (x + w * r + k - r) % w])
                .sum();
            tmp[y * w + x] = s / n;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let s: f32 = (0..=2 * r)
                .map(|k| tmp[((y + h * r + k - r) % h) * w + x])
                .sum();
            plane[y * w + x] = s / n;
        }
    }
}

/// Rescales to span `[0.05, 0.95]`.
fn stretch(plane: &mut [f32]) {
    let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = (hi - lo).max(1e-6);
    for v in plane {
        *v = 0.05 + 0.9 * (*v - lo) / span;
    }
}

/// Circular shift: `out(x, y) = image(x - dx, y - dy)`.
pub fn shift_wrap(image: &Frame, dx: i64, dy: i64) -> Frame {
    let (w, h) = image.dims();
    let planes: Vec<Vec<f32>> = (0..image.channels())
        .map(|c| {
            let mut p = vec![0.0; w * h];
            for y in 0..h {
                let sy = (y as i64 - dy).rem_euclid(h as i64) as usize;
                for x in 0..w {
                    let sx = (x as i64 - dx).rem_euclid(w as i64) as usize;
                    p[y * w + x] = image.get(sx, sy, c);
                }
            }
            p
        })
        .collect();
    Frame::from_planes(w, h, &planes).expect("shifted frame keeps its shape")
}

/// A deterministic per-frame "effect": a contrast curve blended toward a
/// warm tint, the kind of image-to-image transform whose per-frame
/// application is temporally stable on its own.
pub fn stylize(frame: &Frame) -> Frame {
    let c = frame.channels();
    let tint = [1.0f32, 0.85, 0.7];
    Frame::from_fn(frame.width(), frame.height(), c, |x, y, k| {
        let v = frame.get(x, y, k);
        let curve = v * v * (3.0 - 2.0 * v);
        let luma: f32 = if c == 3 {
            (0..3).map(|j| LUMA[j] * frame.get(x, y, j)).sum()
        } else {
            v
        };
        let t = if c == 3 { tint[k] } else { 1.0 };
        0.75 * curve + 0.25 * luma * t
    })
    .expect("stylized values are clamped")
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`, clamped to `[0, 1]`.
pub fn add_noise(frame: &Frame, sigma: f32, rng: &mut impl Rng) -> Frame {
    if sigma == 0.0 {
        return frame.clone();
    }
    let normal = Normal::new(0.0f32, sigma).expect("finite sigma");
    let data: Vec<f32> = frame
        .data()
        .iter()
        .map(|v| v + normal.sample(rng))
        .collect();
    Frame::from_fn(
        frame.width(),
        frame.height(),
        frame.channels(),
        |x, y, c| data[(y * frame.width() + x) * frame.channels() + c],
    )
    .expect("noisy values are clamped")
}

/// Parameters of a translating-texture sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatingScene {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Whole-pixel displacement of the content per frame.
    pub velocity: (i32, i32),
    pub blur_radius: usize,
    /// Standard deviation of the flicker added to each processed frame.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for TranslatingScene {
    fn default() -> Self {
        Self {
            width: 96,
            height: 64,
            frames: 8,
            velocity: (2, 1),
            blur_radius: 2,
            noise_sigma: 0.05,
            seed: 7,
        }
    }
}

/// Input frames, processed frames and the motion that relates them.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub inputs: Vec<Frame>,
    pub processed: Vec<Frame>,
    pub velocity: (i32, i32),
}

impl TranslatingScene {
    pub fn generate(&self) -> Result<SyntheticSequence> {
        if self.frames == 0 {
            return Err(Error::InvalidFrame("scene needs at least one frame".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParams("noise_sigma must be >= 0".into()));
        }
        let base = texture(self.width, self.height, self.blur_radius, self.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let (vx, vy) = (self.velocity.0 as i64, self.velocity.1 as i64);
        let inputs: Vec<Frame> = (0..self.frames as i64)
            .map(|t| shift_wrap(&base, t * vx, t * vy))
            .collect();
        let processed = inputs
            .iter()
            .map(|f| add_noise(&stylize(f), self.noise_sigma, &mut rng))
            .collect();
        Ok(SyntheticSequence {
            inputs,
            processed,
            velocity: self.velocity,
        })
    }
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Frame pairs numbered from 1.
    pub fn pairs(&self) -> Vec<FramePair> {
        self.inputs
            .iter()
            .zip(&self.processed)
            .enumerate()
            .map(|(i, (input, processed))| FramePair {
                index: i + 1,
                input: input.clone(),
                processed: processed.clone(),
            })
            .collect()
    }

    /// Exact flow between any two frames of the sequence. Content that
    /// wrapped around the border is not modeled; the warp masks it out.
    pub fn flow_provider(&self) -> FnFlow<impl Fn(usize, usize, usize, usize) -> FlowField> {
        let (vx, vy) = self.velocity;
        FnFlow::new(format!("synthetic-gt({vx},{vy})"), move |from, to, w, h| {
            let dt = to as f32 - from as f32;
            FlowField::uniform(w, h, dt * vx as f32, dt * vy as f32)
        })
    }
}

/// `frames` identical (input, processed) pairs.
pub fn static_scene(
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
) -> Result<SyntheticSequence> {
    let input = texture(width, height, 2, seed)?;
    let processed = stylize(&input);
    Ok(SyntheticSequence {
        inputs: vec![input; frames],
        processed: vec![processed; frames],
        velocity: (0, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{backward_warp, FlowProvider, FlowRequest};

    #[test]
    fn texture_spans_range_and_is_deterministic() {
        let a = texture(32, 24, 2, 3).unwrap();
        assert_eq!(a, texture(32, 24, 2, 3).unwrap());
        assert_ne!(a, texture(32, 24, 2, 4).unwrap());
        let (lo, hi) = a
            .data()
            .iter()
            .fold((1.0f32, 0.0f32), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(lo >= 0.04 && hi <= 0.96);
    }

    #[test]
    fn shift_wrap_roundtrip() {
        let a = texture(10, 7, 1, 1).unwrap();
        assert_eq!(shift_wrap(&shift_wrap(&a, 3, -2), -3, 2), a);
        let s = shift_wrap(&a, 1, 0);
        assert_eq!(s.pixel(1, 0), a.pixel(0, 0));
    }

    #[test]
    fn ground_truth_flow_aligns_frames() {
        let seq = TranslatingScene {
            noise_sigma: 0.0,
            ..TranslatingScene::default()
        }
        .generate()
        .unwrap();
        let gt = seq.flow_provider();
        let flow = gt
            .flow(FlowRequest {
                from_index: 2,
                to_index: 3,
                from: &seq.inputs[1],
                to: &seq.inputs[2],
                downscale: 1,
            })
            .unwrap();
        let (warped, mask) = backward_warp(&seq.inputs[2], &flow).unwrap();
        for y in 0..seq.inputs[1].height() {
            for x in 0..seq.inputs[1].width() {
                if mask.get(x, y) == 1.0 {
                    assert_eq!(warped.pixel(x, y), seq.inputs[1].pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn noise_is_per_frame() {
        let seq = TranslatingScene {
            velocity: (0, 0),
            ..TranslatingScene::default()
        }
        .generate()
        .unwrap();
        assert_eq!(seq.inputs[0], seq.inputs[1]);
        assert_ne!(seq.processed[0], seq.processed[1]);
        assert_eq!(seq.pairs()[3].index, 4);
    }
}
