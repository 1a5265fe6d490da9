use crate::error::Result;
use crate::frame::Frame;

use super::FlowField;

// Middlebury color wheel segment lengths.
const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;

fn color_wheel() -> Vec<[f32; 3]> {
    let mut wheel = Vec::with_capacity(RY + YG + GC + CB + BM + MR);
    for i in 0..RY {
        wheel.push([1.0, i as f32 / RY as f32, 0.0]);
    }
    for i in 0..YG {
        wheel.push([1.0 - i as f32 / YG as f32, 1.0, 0.0]);
    }
    for i in 0..GC {
        wheel.push([0.0, 1.0, i as f32 / GC as f32]);
    }
    for i in 0..CB {
        wheel.push([0.0, 1.0 - i as f32 / CB as f32, 1.0]);
    }
    for i in 0..BM {
        wheel.push([i as f32 / BM as f32, 0.0, 1.0]);
    }
    for i in 0..MR {
        wheel.push([1.0, 0.0, 1.0 - i as f32 / MR as f32]);
    }
    wheel
}

/// Color-codes a flow field: hue encodes direction, saturation magnitude.
/// Magnitudes are normalized by `max_magnitude`, or by the field's largest
/// valid magnitude when `None`. Invalid pixels are black.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f32>) -> Result<Frame> {
    let (w, h) = flow.dims();
    let wheel = color_wheel();
    let ncols = wheel.len();
    let max_mag = max_magnitude.unwrap_or_else(|| {
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| flow.is_valid(x, y))
            .map(|(x, y)| {
                let (u, v) = flow.get(x, y);
                (u * u + v * v).sqrt()
            })
            .fold(0.0, f32::max)
    });
    let norm = if max_mag > 0.0 { max_mag } else { 1.0 };
    Frame::from_fn(w, h, 3, |x, y, c| {
        if !flow.is_valid(x, y) {
            return 0.0;
        }
        let (u, v) = flow.get(x, y);
        let (u, v) = (u / norm, v / norm);
        let rad = (u * u + v * v).sqrt();
        let angle = (-v).atan2(-u) / std::f32::consts::PI;
        let fk = (angle + 1.0) / 2.0 * (ncols - 1) as f32;
        let k0 = fk.floor() as usize % ncols;
        let k1 = (k0 + 1) % ncols;
        let f = fk - fk.floor();
        let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        if rad <= 1.0 {
            1.0 - rad * (1.0 - col)
        } else {
            col * 0.75
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_color(&FlowField::zeros(3, 2), None).unwrap();
        assert!(img.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn rightward_flow_is_reddish() {
        let img = flow_to_color(&FlowField::uniform(2, 2, 1.0, 0.0), Some(1.0)).unwrap();
        let p = img.pixel(0, 0);
        assert!(p[0] > p[2], "{p:?}");
    }
}
