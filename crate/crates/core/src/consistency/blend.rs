//! Per-pixel weights and the local, global, adaptive and input blends.

use crate::error::{Error, Result};
use crate::flow::{backward_warp, FlowField};
use crate::frame::{ensure_dims, Frame, Mask, WeightMap};

fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Warp-confidence weight: `min(bound, exp(-alpha * |reference - warped|²))`,
/// zero where `validity` is zero. The distance sums squared channel differences.
pub fn warp_weight(
    reference: &Frame,
    warped: &Frame,
    alpha: f32,
    bound: f32,
    validity: &Mask,
) -> Result<WeightMap> {
    reference.ensure_same_shape(warped)?;
    ensure_dims(reference.dims(), validity.dims())?;
    if !(0.0..1.0).contains(&bound) {
        return Err(Error::InvalidParams(format!(
            "weight bound {bound} outside [0, 1)"
        )));
    }
    let c = reference.channels();
    let values = reference
        .data()
        .chunks_exact(c)
        .zip(warped.data().chunks_exact(c))
        .zip(validity.values())
        .map(|((r, w), &m)| {
            if m == 0.0 {
                0.0
            } else {
                (-alpha * squared_distance(r, w)).exp().min(bound)
            }
        })
        .collect();
    Ok(WeightMap::from_raw(
        reference.width(),
        reference.height(),
        values,
    ))
}

/// `(1 - (w_p + w_n)) * current + w_p * warped_prev + w_n * warped_next`.
///
/// Serves both the locally consistent processed frame and the warped input.
pub fn local_blend(
    current: &Frame,
    warped_prev: &Frame,
    warped_next: &Frame,
    w_p: &WeightMap,
    w_n: &WeightMap,
) -> Result<Frame> {
    current.ensure_same_shape(warped_prev)?;
    current.ensure_same_shape(warped_next)?;
    ensure_dims(current.dims(), w_p.dims())?;
    ensure_dims(current.dims(), w_n.dims())?;
    let c = current.channels();
    let mut out = Vec::with_capacity(current.data().len());
    for (i, ((cur, prev), next)) in current
        .data()
        .chunks_exact(c)
        .zip(warped_prev.data().chunks_exact(c))
        .zip(warped_next.data().chunks_exact(c))
        .enumerate()
    {
        let (wp, wn) = (w_p.values()[i], w_n.values()[i]);
        if wp + wn >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "w_p + w_n = {} >= 1 at pixel {i}",
                wp + wn
            )));
        }
        let keep = 1.0 - (wp + wn);
        for k in 0..c {
            out.push((keep * cur[k] + wp * prev[k] + wn * next[k]).clamp(0.0, 1.0));
        }
    }
    Ok(Frame::from_raw(current.width(), current.height(), c, out))
}

/// Warped input frame, same form as [`local_blend`] over the input stream.
pub fn input_blend(
    input: &Frame,
    warped_prev: &Frame,
    warped_next: &Frame,
    w_p: &WeightMap,
    w_n: &WeightMap,
) -> Result<Frame> {
    local_blend(input, warped_prev, warped_next, w_p, w_n)
}

/// Globally consistent frame: the previous output warped into the current frame.
pub fn global_warp(previous_output: &Frame, flow_to_prev: &FlowField) -> Result<(Frame, Mask)> {
    backward_warp(previous_output, flow_to_prev)
}

/// `w_p * global + (1 - w_p) * local`.
pub fn adaptive_blend(global: &Frame, local: &Frame, w_p: &WeightMap) -> Result<Frame> {
    global.ensure_same_shape(local)?;
    ensure_dims(global.dims(), w_p.dims())?;
    let c = global.channels();
    let out = global
        .data()
        .chunks_exact(c)
        .zip(local.data().chunks_exact(c))
        .zip(w_p.values())
        .flat_map(|((g, l), &w)| {
            g.iter()
                .zip(l)
                .map(move |(g, l)| (w * g + (1.0 - w) * l).clamp(0.0, 1.0))
        })
        .collect();
    Ok(Frame::from_raw(global.width(), global.height(), c, out))
}

/// `lambda * exp(-alpha * |input - warped_input|²)`.
pub fn consistency_weight(
    input: &Frame,
    warped_input: &Frame,
    alpha: f32,
    lambda: f32,
) -> Result<WeightMap> {
    input.ensure_same_shape(warped_input)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "lambda {lambda} must be >= 0"
        )));
    }
    let c = input.channels();
    let values = input
        .data()
        .chunks_exact(c)
        .zip(warped_input.data().chunks_exact(c))
        .map(|(a, b)| lambda * (-alpha * squared_distance(a, b)).exp())
        .collect();
    Ok(WeightMap::from_raw(input.width(), input.height(), values))
}
