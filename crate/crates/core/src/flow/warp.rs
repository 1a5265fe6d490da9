use rayon::prelude::*;

use crate::error::Result;
use crate::frame::{ensure_dims, Frame, Mask};

use super::FlowField;

/// Bilinear lookup into an interleaved buffer with coordinates clamped to the border.
#[inline]
pub(crate) fn sample_bilinear(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    x: f32,
    y: f32,
    out: &mut [f32],
) {
    let xc = x.clamp(0.0, (width - 1) as f32);
    let yc = y.clamp(0.0, (height - 1) as f32);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f32;
    let fy = yc - y0 as f32;
    let i00 = (y0 * width + x0) * channels;
    let i01 = (y0 * width + x1) * channels;
    let i10 = (y1 * width + x0) * channels;
    let i11 = (y1 * width + x1) * channels;
    for (c, o) in out.iter_mut().enumerate().take(channels) {
        let top = (1.0 - fx) * data[i00 + c] + fx * data[i01 + c];
        let bottom = (1.0 - fx) * data[i10 + c] + fx * data[i11 + c];
        *o = (1.0 - fy) * top + fy * bottom;
    }
}

#[inline]
pub(crate) fn sample_plane(data: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let mut out = [0.0f32];
    sample_bilinear(data, width, height, 1, x, y, &mut out);
    out[0]
}

#[inline]
fn footprint_inside(x: f32, y: f32, width: usize, height: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (width - 1) as f32 && y <= (height - 1) as f32
}

/// Backward warp: `output(x) = image(x + flow(x))`, sampled bilinearly.
///
/// The mask is 1 where the sample footprint lies inside the image and the
/// flow is valid. Out-of-range coordinates are clamped, so the output stays finite.
pub fn backward_warp(image: &Frame, flow: &FlowField) -> Result<(Frame, Mask)> {
    ensure_dims(image.dims(), flow.dims())?;
    let (w, h) = image.dims();
    let ch = image.channels();
    let src = image.data();
    let mut out = vec![0.0f32; w * h * ch];
    let mut mask = vec![0.0f32; w * h];
    out.par_chunks_mut(w * ch)
        .zip(mask.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, mrow))| {
            for x in 0..w {
                let (u, v) = flow.get(x, y);
                let valid = flow.is_valid(x, y) && u.is_finite() && v.is_finite();
                let (sx, sy) = if valid {
                    (x as f32 + u, y as f32 + v)
                } else {
                    (x as f32, y as f32)
                };
                sample_bilinear(src, w, h, ch, sx, sy, &mut row[x * ch..(x + 1) * ch]);
                mrow[x] = if valid && footprint_inside(sx, sy, w, h) {
                    1.0
                } else {
                    0.0
                };
            }
        });
    Ok((Frame::from_raw(w, h, ch, out), Mask::from_raw(w, h, mask)))
}

/// Forward-backward consistency check.
///
/// `forward` maps t→t+1 and `backward` maps t+1→t. A pixel is non-occluded
/// when `|w + ŵ|² < 0.01 (|w|² + |ŵ|²) + 0.5`, with `ŵ = backward(x + w)`
/// sampled bilinearly; pixels whose target leaves the frame or whose flow is
/// invalid are marked occluded.
pub fn occlusion_mask(forward: &FlowField, backward: &FlowField) -> Result<Mask> {
    ensure_dims(forward.dims(), backward.dims())?;
    let (w, h) = forward.dims();
    let mut mask = vec![0.0f32; w * h];
    mask.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, m) in row.iter_mut().enumerate() {
            if !forward.is_valid(x, y) {
                continue;
            }
            let (u, v) = forward.get(x, y);
            let (tx, ty) = (x as f32 + u, y as f32 + v);
            if !footprint_inside(tx, ty, w, h) {
                continue;
            }
            let nx = (tx.round() as usize).min(w - 1);
            let ny = (ty.round() as usize).min(h - 1);
            if !backward.is_valid(nx, ny) {
                continue;
            }
            let (bu, bv) = backward.sample(tx, ty);
            let sum = (u + bu).powi(2) + (v + bv).powi(2);
            let mag = u * u + v * v + bu * bu + bv * bv;
            if sum < 0.01 * mag + 0.5 {
                *m = 1.0;
            }
        }
    });
    Ok(Mask::from_raw(w, h, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_identity() {
        let img = Frame::from_fn(5, 4, 3, |x, y, c| {
            ((x * 13 + y * 7 + c * 3) % 17) as f32 / 16.0
        })
        .unwrap();
        let (out, mask) = backward_warp(&img, &FlowField::zeros(5, 4)).unwrap();
        assert_eq!(out, img);
        assert!(mask.values().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn ramp_shift_by_one() {
        let img = Frame::new(4, 1, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (out, mask) = backward_warp(&img, &FlowField::uniform(4, 1, 1.0, 0.0)).unwrap();
        let expect = [0.2, 0.3, 0.4];
        for (x, e) in expect.iter().enumerate() {
            assert!((out.get(x, 0, 0) - e).abs() < 1e-6);
            assert_eq!(mask.get(x, 0), 1.0);
        }
        assert_eq!(mask.get(3, 0), 0.0);
    }

    #[test]
    fn far_out_of_bounds_is_clamped_and_masked() {
        let img = Frame::new(3, 1, 1, vec![0.1, 0.5, 0.9]).unwrap();
        let flow = FlowField::from_fn(3, 1, |x, _| if x == 1 { (1e6, 0.0) } else { (0.0, 0.0) });
        let (out, mask) = backward_warp(&img, &flow).unwrap();
        assert!((out.get(1, 0, 0) - 0.9).abs() < 1e-6);
        assert_eq!(mask.values(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_flow_pixels_masked() {
        let img = Frame::filled(2, 1, 1, 0.5).unwrap();
        let flow = FlowField::with_validity(2, 1, vec![0.0; 4], vec![true, false]).unwrap();
        let (_, mask) = backward_warp(&img, &flow).unwrap();
        assert_eq!(mask.values(), &[1.0, 0.0]);
    }

    #[test]
    fn resolution_mismatch() {
        let img = Frame::filled(2, 2, 1, 0.5).unwrap();
        assert!(backward_warp(&img, &FlowField::zeros(3, 2)).is_err());
        assert!(occlusion_mask(&FlowField::zeros(2, 2), &FlowField::zeros(3, 2)).is_err());
    }

    #[test]
    fn consistent_uniform_flow_is_unoccluded() {
        let fwd = FlowField::uniform(10, 6, 2.0, 0.0);
        let bwd = FlowField::uniform(10, 6, -2.0, 0.0);
        let m = occlusion_mask(&fwd, &bwd).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                assert_eq!(m.get(x, y), 1.0);
            }
        }
    }

    #[test]
    fn inconsistent_flow_is_occluded() {
        // |(5,0) + 0|² = 25 >= 0.01 * 25 + 0.5
        let m = occlusion_mask(
            &FlowField::uniform(12, 3, 5.0, 0.0),
            &FlowField::zeros(12, 3),
        )
        .unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_scene_all_visible() {
        let m = occlusion_mask(&FlowField::zeros(4, 4), &FlowField::zeros(4, 4)).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }
}
