//! Screened-Poisson solve by gradient descent with momentum.
//!
//! Minimizes, per channel,
//!
//! ```text
//! E(O) = ½ Σ |∇O − ∇P|² + ½ Σ w_c (O − A)²
//! ```
//!
//! with forward-difference gradients and replicated (Neumann) borders, so the
//! gradient is `−Δ(O − P) + w_c (O − A)` with the 5-point Laplacian. The
//! iteration is `O' = O − η ∇E(O) + κ (O − O_prev)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{ensure_dims, Frame, WeightMap};

use super::ConsistencyParams;

/// Iterate buffers reused across solves of the same resolution.
#[derive(Debug, Default, Clone)]
pub struct SolverScratch {
    current: Vec<f32>,
    previous: Vec<f32>,
    next: Vec<f32>,
    data_lap: Vec<f32>,
}

impl SolverScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn resize(&mut self, n: usize) {
        for buf in [
            &mut self.current,
            &mut self.previous,
            &mut self.next,
            &mut self.data_lap,
        ] {
            buf.clear();
            buf.resize(n, 0.0);
        }
    }
}

/// 5-point Laplacian of one row with replicated borders.
#[inline]
fn laplacian_at(plane: &[f32], w: usize, h: usize, x: usize, y: usize) -> f32 {
    let i = y * w + x;
    let c = plane[i];
    let mut acc = 0.0;
    if x > 0 {
        acc += plane[i - 1] - c;
    }
    if x + 1 < w {
        acc += plane[i + 1] - c;
    }
    if y > 0 {
        acc += plane[i - w] - c;
    }
    if y + 1 < h {
        acc += plane[i + w] - c;
    }
    acc
}

pub(crate) fn laplacian(plane: &[f32], w: usize, h: usize, out: &mut [f32]) {
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = laplacian_at(plane, w, h, x, y);
        }
    });
}

/// Solves with a fresh scratch buffer. See [`solve_with_scratch`].
pub fn solve_screened_poisson(
    processed: &Frame,
    target: &Frame,
    w_c: &WeightMap,
    params: &ConsistencyParams,
    init: &Frame,
) -> Result<Frame> {
    solve_with_scratch(
        processed,
        target,
        w_c,
        params,
        init,
        &mut SolverScratch::new(),
    )
}

/// Runs `params.iterations` momentum steps from `init` (with `O⁻¹ = O⁰ = init`)
/// toward the screened-Poisson solution matching the gradients of `processed`
/// and, weighted by `w_c`, the colors of `target`. Channels are solved
/// independently and the result is clamped to `[0, 1]` only at the end.
pub fn solve_with_scratch(
    processed: &Frame,
    target: &Frame,
    w_c: &WeightMap,
    params: &ConsistencyParams,
    init: &Frame,
    scratch: &mut SolverScratch,
) -> Result<Frame> {
    processed.ensure_same_shape(target)?;
    processed.ensure_same_shape(init)?;
    ensure_dims(processed.dims(), w_c.dims())?;
    if params.eta.is_nan() || params.eta <= 0.0 || !(0.0..1.0).contains(&params.kappa) {
        return Err(Error::InvalidParams(
            "solver needs eta > 0 and kappa in [0, 1)".into(),
        ));
    }
    let (w, h) = processed.dims();
    let n = w * h;
    let eta = params.eta;
    let kappa = params.kappa;
    let weights = w_c.values();

    let mut planes = Vec::with_capacity(processed.channels());
    for c in 0..processed.channels() {
        let p_plane = processed.plane(c);
        let a_plane = target.plane(c);
        scratch.resize(n);
        laplacian(&p_plane, w, h, &mut scratch.data_lap);
        let init_plane = init.plane(c);
        scratch.current.copy_from_slice(&init_plane);
        scratch.previous.copy_from_slice(&init_plane);

        for iteration in 1..=params.iterations {
            let SolverScratch {
                current,
                previous,
                next,
                data_lap,
            } = &mut *scratch;
            let (cur, prev, lap_p) = (&*current, &*previous, &*data_lap);
            let diverged = next
                .par_chunks_mut(w)
                .enumerate()
                .map(|(y, row)| {
                    let mut bad = false;
                    for (x, o) in row.iter_mut().enumerate() {
                        let i = y * w + x;
                        let grad = -(laplacian_at(cur, w, h, x, y) - lap_p[i])
                            + weights[i] * (cur[i] - a_plane[i]);
                        let v = cur[i] - eta * grad + kappa * (cur[i] - prev[i]);
                        bad |= !v.is_finite();
                        *o = v;
                    }
                    bad
                })
                .reduce(|| false, |a, b| a || b);
            if diverged {
                return Err(Error::Divergence { iteration });
            }
            // previous <- current, current <- next
            std::mem::swap(&mut scratch.previous, &mut scratch.current);
            std::mem::swap(&mut scratch.current, &mut scratch.next);
        }
        planes.push(scratch.current.clone());
    }
    Frame::from_planes(w, h, &planes)
}

/// `½ Σ |∇(O − P)|² + ½ Σ w_c (O − A)²` summed over channels, with forward
/// differences (zero across the last row/column).
pub fn screened_poisson_energy(
    output: &Frame,
    processed: &Frame,
    target: &Frame,
    w_c: &WeightMap,
) -> Result<f64> {
    output.ensure_same_shape(processed)?;
    output.ensure_same_shape(target)?;
    ensure_dims(output.dims(), w_c.dims())?;
    let (w, h) = output.dims();
    let mut energy = 0.0f64;
    for c in 0..output.channels() {
        let d: Vec<f64> = output
            .plane(c)
            .iter()
            .zip(processed.plane(c))
            .map(|(o, p)| (*o - p) as f64)
            .collect();
        let a = target.plane(c);
        let o = output.plane(c);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    energy += 0.5 * (d[i + 1] - d[i]).powi(2);
                }
                if y + 1 < h {
                    energy += 0.5 * (d[i + w] - d[i]).powi(2);
                }
                energy += 0.5 * w_c.values()[i] as f64 * ((o[i] - a[i]) as f64).powi(2);
            }
        }
    }
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Frame {
        Frame::from_fn(w, h, 1, |_, _, _| rng.gen()).unwrap()
    }

    fn params(iterations: usize) -> ConsistencyParams {
        ConsistencyParams {
            iterations,
            ..ConsistencyParams::default()
        }
    }

    #[test]
    fn fixed_point_is_bitwise_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Frame::from_fn(9, 7, 3, |_, _, _| rng.gen()).unwrap();
        let w_c = WeightMap::new(9, 7, (0..63).map(|_| rng.gen::<f32>() * 2.0).collect()).unwrap();
        for iters in [1, 7, 150] {
            let out = solve_screened_poisson(&p, &p, &w_c, &params(iters), &p).unwrap();
            assert_eq!(out, p);
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let plane = vec![0.7f32; 12];
        let mut out = vec![1.0f32; 12];
        laplacian(&plane, 4, 3, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_corner_and_interior() {
        // 3x3 with a single 1 in the center
        let mut plane = vec![0.0f32; 9];
        plane[4] = 1.0;
        let mut out = vec![0.0f32; 9];
        laplacian(&plane, 3, 3, &mut out);
        assert_eq!(out[4], -4.0);
        assert_eq!(out[1], 1.0);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // ∇E from the update rule vs central differences of the energy
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (w, h) = (5, 4);
        let p = random_frame(w, h, &mut rng);
        let a = random_frame(w, h, &mut rng);
        let o = random_frame(w, h, &mut rng);
        let w_c =
            WeightMap::new(w, h, (0..w * h).map(|_| rng.gen::<f32>() * 2.0).collect()).unwrap();
        let one_step = ConsistencyParams {
            eta: 1.0,
            kappa: 0.0,
            iterations: 1,
            ..ConsistencyParams::default()
        };
        // with eta = 1 and no momentum, O1 = O0 - ∇E(O0); read ∇E back out of the
        // unclamped update by checking pixels that stay within [0, 1]
        let stepped = solve_screened_poisson(&p, &a, &w_c, &one_step, &o).unwrap();
        let eps = 1e-3f32;
        for i in 0..w * h {
            let (x, y) = (i % w, i / w);
            let bump = |d: f32| {
                let mut data = o.data().to_vec();
                data[i] = (data[i] + d).clamp(0.0, 1.0);
                Frame::new(w, h, 1, data).unwrap()
            };
            let (lo, hi) = (bump(-eps), bump(eps));
            let span = (hi.get(x, y, 0) - lo.get(x, y, 0)) as f64;
            let fd = (screened_poisson_energy(&hi, &p, &a, &w_c).unwrap()
                - screened_poisson_energy(&lo, &p, &a, &w_c).unwrap())
                / span;
            let analytic = (o.get(x, y, 0) - stepped.get(x, y, 0)) as f64;
            let s = stepped.get(x, y, 0);
            if s > 0.0 && s < 1.0 {
                assert!(
                    (fd - analytic).abs() < 5e-3,
                    "pixel {i}: fd {fd} analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn divergence_reported_with_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_frame(8, 8, &mut rng);
        let a = random_frame(8, 8, &mut rng);
        let w_c = WeightMap::constant(8, 8, 1.0);
        let unstable = ConsistencyParams {
            eta: 10.0,
            iterations: 5000,
            ..ConsistencyParams::default()
        };
        match solve_screened_poisson(&p, &a, &w_c, &unstable, &a) {
            Err(Error::Divergence { iteration }) => assert!(iteration > 1 && iteration <= 5000),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Frame::filled(4, 4, 1, 0.5).unwrap();
        let b = Frame::filled(4, 5, 1, 0.5).unwrap();
        let w_c = WeightMap::constant(4, 4, 1.0);
        assert!(solve_screened_poisson(&a, &b, &w_c, &params(3), &a).is_err());
        let w_bad = WeightMap::constant(5, 4, 1.0);
        assert!(solve_screened_poisson(&a, &a, &w_bad, &params(3), &a).is_err());
    }
}
