//! Flow-guided temporal consistency.
//!
//! For each frame `t`, neighbors `t-1` and `t+1` are warped into `t` and
//! weighted by how well the warped *input* frames agree with `I_t`:
//!
//! * `L_t`: local blend of `P_t` with the warped processed neighbors,
//! * `G_t`: the previous output warped into `t`,
//! * `A_t = w_p G_t + (1 - w_p) L_t`,
//! * `w_c`: confidence derived from the warped input blend,
//!
//! and the output `O_t` solves a screened-Poisson problem taking gradients
//! from `P_t` and, where `w_c` is large, colors from `A_t`.

mod blend;
mod params;
mod session;
mod solver;

pub use blend::{
    adaptive_blend, consistency_weight, global_warp, input_blend, local_blend, warp_weight,
};
pub use params::{ConsistencyParams, ParamsPatch, Preset};
pub use session::{
    stabilize_sequence, FramePair, SessionState, Stabilizer, StepDetail, StepOutput, StepTiming,
};
pub use solver::{
    screened_poisson_energy, solve_screened_poisson, solve_with_scratch, SolverScratch,
};
