// Backward-warp a frame and mark occluded pixels with the forward-backward
// consistency check.

use temporal_consistency::flow::{backward_warp, occlusion_mask, FlowField};
use temporal_consistency::synthetic::{shift_wrap, texture};

pub fn run_example() -> Result<usize, Box<dyn std::error::Error>> {
    let (w, h) = (64, 48);
    let current = texture(w, h, 2, 3)?;
    let next = shift_wrap(&current, 4, 0);

    // content moves 4 px right: forward flow +4, backward flow -4
    let forward = FlowField::uniform(w, h, 4.0, 0.0);
    let backward = FlowField::uniform(w, h, -4.0, 0.0);

    let (aligned, inside) = backward_warp(&next, &forward)?;
    let mask = occlusion_mask(&forward, &backward)?;
    let max_diff = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y) == 1.0)
        .flat_map(|(x, y)| {
            let a = aligned.pixel(x, y).to_vec();
            let b = current.pixel(x, y).to_vec();
            a.into_iter().zip(b).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0f32, f32::max);

    let occluded = w * h - mask.count_set();
    println!(
        "{} of {} pixels inside after warping, {occluded} occluded; max residual on visible pixels {max_diff:.2e}",
        inside.count_set(),
        w * h
    );
    Ok(occluded)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
