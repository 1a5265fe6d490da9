// Blend the gradients of one image with the colors of another through the
// screened-Poisson solver, watching the energy fall.

use temporal_consistency::consistency::{
    screened_poisson_energy, solve_screened_poisson, ConsistencyParams,
};
use temporal_consistency::{Frame, WeightMap};

pub fn run_example() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let (w, h) = (48, 32);
    // detail to keep: fine stripes
    let processed = Frame::from_fn(w, h, 3, |x, _, _| if x % 4 < 2 { 0.6 } else { 0.4 })?;
    // colors to match: a smooth ramp
    let target = Frame::from_fn(w, h, 3, |x, y, c| {
        (x + y + 10 * c) as f32 / (w + h + 20) as f32
    })?;
    let w_c = WeightMap::constant(w, h, 0.5);

    let mut energies = Vec::new();
    for iterations in [1, 10, 50, 150] {
        let params = ConsistencyParams {
            iterations,
            ..ConsistencyParams::default()
        };
        let out = solve_screened_poisson(&processed, &target, &w_c, &params, &target)?;
        let e = screened_poisson_energy(&out, &processed, &target, &w_c)?;
        println!("{iterations:>4} iterations: energy {e:.3}");
        energies.push(e);
    }
    Ok(energies)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
