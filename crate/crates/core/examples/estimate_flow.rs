// Recover a known translation with the built-in estimator and save a
// color-coded visualization.

use temporal_consistency::flow::{
    endpoint_error, estimate_flow, flow_to_color, FlowField, FlowOptions,
};
use temporal_consistency::imgio::save_frame;
use temporal_consistency::synthetic::{shift_wrap, texture};

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let (dx, dy) = (5, -3);
    let a = texture(128, 96, 1, 11)?;
    let b = shift_wrap(&a, dx, dy);

    let flow = estimate_flow(&a, &b, &FlowOptions::default())?;
    let truth = FlowField::uniform(128, 96, dx as f32, dy as f32);
    let epe = endpoint_error(&flow, &truth)?;
    let (u, v) = flow.get(64, 48);
    println!("center flow ({u:.2}, {v:.2}), expected ({dx}, {dy}); mean EPE {epe:.3} px");

    let path = std::env::temp_dir().join("tcon_flow_color.png");
    save_frame(&flow_to_color(&flow, None)?, &path)?;
    println!("visualization written to {}", path.display());
    Ok(epe)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
