//! Streaming state: a three-frame window of (input, processed) pairs plus the
//! previous output, advanced one frame at a time.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::flow::{backward_warp, FlowField, FlowProvider, FlowRequest};
use crate::frame::{Frame, WeightMap};

use super::blend::{
    adaptive_blend, consistency_weight, global_warp, input_blend, local_blend, warp_weight,
};
use super::solver::{solve_with_scratch, SolverScratch};
use super::ConsistencyParams;

/// Input frame `I_t` and its per-frame processed counterpart `P_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub index: usize,
    pub input: Frame,
    pub processed: Frame,
}

impl FramePair {
    pub fn new(index: usize, input: Frame, processed: Frame) -> Result<Self> {
        if input.dims() != processed.dims() {
            return Err(Error::ResolutionMismatch {
                expected: input.dims(),
                found: processed.dims(),
            });
        }
        Ok(Self {
            index,
            input,
            processed,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTiming {
    pub flow: Duration,
    pub solve: Duration,
}

/// A stabilized frame together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub index: usize,
    pub output: Frame,
    pub params: ConsistencyParams,
    pub timing: StepTiming,
}

/// Intermediate images of one step, exposed for inspection and examples.
#[derive(Debug, Clone)]
pub struct StepDetail {
    pub flow_prev: FlowField,
    pub flow_next: Option<FlowField>,
    pub w_p: WeightMap,
    pub w_n: WeightMap,
    pub local: Frame,
    pub global: Frame,
    pub adaptive: Frame,
    pub warped_input: Frame,
    pub w_c: WeightMap,
}

type Shape = ((usize, usize), usize, usize);

#[derive(Debug)]
pub struct SessionState {
    params: ConsistencyParams,
    previous_output: Option<Frame>,
    window: VecDeque<FramePair>,
    scratch: SolverScratch,
    shape: Option<Shape>,
}

impl SessionState {
    pub fn new(params: ConsistencyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            previous_output: None,
            window: VecDeque::with_capacity(3),
            scratch: SolverScratch::new(),
            shape: None,
        })
    }

    pub fn params(&self) -> &ConsistencyParams {
        &self.params
    }

    /// Replaces the parameters used by the next step.
    pub fn set_params(&mut self, params: ConsistencyParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn previous_output(&self) -> Option<&Frame> {
        self.previous_output.as_ref()
    }

    /// Index of the next frame to be produced, if its pair is buffered.
    pub fn pending_index(&self) -> Option<usize> {
        match self.previous_output {
            None => self.window.front().map(|p| p.index),
            Some(_) => self.window.get(1).map(|p| p.index),
        }
    }

    pub fn buffered(&self) -> usize {
        self.window.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.previous_output.is_some()
    }

    /// Buffers the next (input, processed) pair.
    pub fn push(&mut self, pair: FramePair) -> Result<()> {
        let shape = (
            pair.input.dims(),
            pair.input.channels(),
            pair.processed.channels(),
        );
        match self.shape {
            None => self.shape = Some(shape),
            Some(s) if s != shape => {
                return Err(Error::ResolutionMismatch {
                    expected: s.0,
                    found: shape.0,
                })
            }
            _ => {}
        }
        if let Some(last) = self.window.back() {
            if pair.index != last.index + 1 {
                return Err(Error::Session(format!(
                    "frame {} pushed after frame {}",
                    pair.index, last.index
                )));
            }
        }
        if self.window.len() == 3 {
            return Err(Error::Session("window already holds three frames".into()));
        }
        self.window.push_back(pair);
        Ok(())
    }

    /// Emits the first output of a stream (or after a re-seed): `O = P`.
    pub fn initialize(&mut self) -> Result<StepOutput> {
        if self.previous_output.is_some() {
            return Err(Error::Session("session already initialized".into()));
        }
        let first = self
            .window
            .front()
            .ok_or_else(|| Error::Session("no buffered frame to initialize from".into()))?;
        let output = first.processed.clone();
        self.previous_output = Some(output.clone());
        Ok(StepOutput {
            index: first.index,
            output,
            params: self.params,
            timing: StepTiming::default(),
        })
    }

    /// Stabilizes frame `t` from the buffered `(t-1, t, t+1)` snippet and
    /// `O_{t-1}`, then advances the window.
    pub fn stabilize_step(&mut self, flow: &dyn FlowProvider) -> Result<StepOutput> {
        if self.window.len() != 3 {
            return Err(Error::Session(format!(
                "stabilize_step needs frames t-1, t and t+1; {} buffered",
                self.window.len()
            )));
        }
        let out = self.step(flow, true)?;
        self.window.pop_front();
        Ok(out.0)
    }

    /// Stabilizes the final frame of a stream, with no `t+1` available.
    pub fn stream_end_step(&mut self, flow: &dyn FlowProvider) -> Result<StepOutput> {
        if self.window.len() == 3 {
            return Err(Error::Session(
                "stream_end_step called while a next frame is buffered".into(),
            ));
        }
        if self.window.len() != 2 {
            return Err(Error::Session(format!(
                "stream_end_step needs frames t-1 and t; {} buffered",
                self.window.len()
            )));
        }
        let out = self.step(flow, false)?;
        self.window.clear();
        self.previous_output = None;
        Ok(out.0)
    }

    /// Runs one step without advancing, returning the intermediate images too.
    pub fn inspect_step(&mut self, flow: &dyn FlowProvider) -> Result<(StepOutput, StepDetail)> {
        let has_next = match self.window.len() {
            3 => true,
            2 => false,
            n => {
                return Err(Error::Session(format!(
                    "inspect_step needs two or three buffered frames, got {n}"
                )))
            }
        };
        let saved = self.previous_output.clone();
        let result = self.step(flow, has_next);
        self.previous_output = saved;
        result
    }

    fn step(
        &mut self,
        flow: &dyn FlowProvider,
        has_next: bool,
    ) -> Result<(StepOutput, StepDetail)> {
        let previous_output = self
            .previous_output
            .as_ref()
            .ok_or_else(|| Error::Session("missing previous output; initialize first".into()))?;
        let params = self.params;
        let prev = &self.window[0];
        let cur = &self.window[1];
        let next = if has_next {
            Some(&self.window[2])
        } else {
            None
        };
        let (w, h) = cur.input.dims();

        let t0 = Instant::now();
        let downscale = params.flow_downscale;
        let flow_prev = flow.flow(request(cur, prev, downscale))?;
        let flow_next = next
            .map(|n| flow.flow(request(cur, n, downscale)))
            .transpose()?;
        let flow_time = t0.elapsed();

        let t1 = Instant::now();
        let (warped_i_prev, mask_prev) = backward_warp(&prev.input, &flow_prev)?;
        let w_p = warp_weight(
            &cur.input,
            &warped_i_prev,
            params.alpha,
            params.k1,
            &mask_prev,
        )?;
        let warped_p_prev = backward_warp(&prev.processed, &flow_prev)?.0;

        let (warped_i_next, warped_p_next, w_n) = match (next, &flow_next) {
            (Some(n), Some(f)) => {
                let (wi, mask) = backward_warp(&n.input, f)?;
                let wn = warp_weight(&cur.input, &wi, params.alpha, params.k2, &mask)?;
                (wi, backward_warp(&n.processed, f)?.0, wn)
            }
            _ => (
                cur.input.clone(),
                cur.processed.clone(),
                WeightMap::constant(w, h, 0.0),
            ),
        };

        let local = local_blend(&cur.processed, &warped_p_prev, &warped_p_next, &w_p, &w_n)?;
        let (global, _) = global_warp(previous_output, &flow_prev)?;
        let adaptive = adaptive_blend(&global, &local, &w_p)?;
        let warped_input = input_blend(&cur.input, &warped_i_prev, &warped_i_next, &w_p, &w_n)?;
        let w_c = consistency_weight(&cur.input, &warped_input, params.alpha, params.lambda)?;
        let output = solve_with_scratch(
            &cur.processed,
            &adaptive,
            &w_c,
            &params,
            &adaptive,
            &mut self.scratch,
        )?;
        let solve_time = t1.elapsed();

        let index = cur.index;
        self.previous_output = Some(output.clone());
        Ok((
            StepOutput {
                index,
                output,
                params,
                timing: StepTiming {
                    flow: flow_time,
                    solve: solve_time,
                },
            },
            StepDetail {
                flow_prev,
                flow_next,
                w_p,
                w_n,
                local,
                global,
                adaptive,
                warped_input,
                w_c,
            },
        ))
    }

    /// Drops all buffered frames and the previous output.
    pub fn reset(&mut self) {
        self.window.clear();
        self.previous_output = None;
        self.shape = None;
    }
}

fn request<'a>(from: &'a FramePair, to: &'a FramePair, downscale: u32) -> FlowRequest<'a> {
    FlowRequest {
        from_index: from.index,
        to_index: to.index,
        from: &from.input,
        to: &to.input,
        downscale,
    }
}

/// Drives a [`SessionState`] over a stream with one frame of latency: the
/// output for frame `t` is returned by the `push` of frame `t + 1`, and the
/// final frame by [`Stabilizer::finish`].
pub struct Stabilizer<F> {
    state: SessionState,
    flow: F,
}

impl<F: FlowProvider> Stabilizer<F> {
    pub fn new(params: ConsistencyParams, flow: F) -> Result<Self> {
        Ok(Self {
            state: SessionState::new(params)?,
            flow,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn params(&self) -> &ConsistencyParams {
        self.state.params()
    }

    /// Takes effect from the next frame produced.
    pub fn set_params(&mut self, params: ConsistencyParams) -> Result<()> {
        self.state.set_params(params)
    }

    pub fn flow_provider(&self) -> &F {
        &self.flow
    }

    pub fn push(&mut self, pair: FramePair) -> Result<Option<StepOutput>> {
        self.state.push(pair)?;
        if !self.state.is_initialized() {
            if self.state.buffered() == 2 {
                return self.state.initialize().map(Some);
            }
            return Ok(None);
        }
        if self.state.buffered() == 3 {
            return self.state.stabilize_step(&self.flow).map(Some);
        }
        Ok(None)
    }

    /// Flushes the last frame of the stream.
    pub fn finish(&mut self) -> Result<Option<StepOutput>> {
        let out = match (self.state.is_initialized(), self.state.buffered()) {
            (false, 1) => {
                let out = self.state.initialize()?;
                self.state.reset();
                Some(out)
            }
            (true, 2) => Some(self.state.stream_end_step(&self.flow)?),
            _ => None,
        };
        self.state.reset();
        Ok(out)
    }

    /// Discards all stream state; the next pushed frame starts a new stream
    /// whose first output equals its processed frame.
    pub fn reset(&mut self) {
        self.state.reset();
    }
}

/// Stabilizes a whole in-memory sequence.
pub fn stabilize_sequence(
    pairs: impl IntoIterator<Item = FramePair>,
    params: ConsistencyParams,
    flow: &dyn FlowProvider,
) -> Result<Vec<StepOutput>> {
    let mut stabilizer = Stabilizer::new(params, flow)?;
    let mut out = Vec::new();
    for pair in pairs {
        let index = pair.index;
        if let Some(o) = stabilizer.push(pair).map_err(|e| Error::FrameFailed {
            index,
            source: Box::new(e),
        })? {
            out.push(o);
        }
    }
    out.extend(stabilizer.finish()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FnFlow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn still() -> impl FlowProvider {
        FnFlow::new("zero", |_, _, w, h| FlowField::zeros(w, h))
    }

    fn noisy_pairs(n: usize, seed: u64) -> Vec<FramePair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Frame::from_fn(12, 10, 3, |x, y, c| {
            ((x * 3 + y * 5 + c) % 11) as f32 / 10.0
        })
        .unwrap();
        (1..=n)
            .map(|i| {
                let processed = Frame::from_fn(12, 10, 3, |x, y, c| {
                    input.get(x, y, c) * 0.8 + rng.gen_range(-0.05..0.05)
                })
                .unwrap();
                FramePair::new(i, input.clone(), processed).unwrap()
            })
            .collect()
    }

    #[test]
    fn first_output_is_processed_frame() {
        let pairs = noisy_pairs(4, 1);
        let out =
            stabilize_sequence(pairs.clone(), ConsistencyParams::default(), &still()).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[0].output, pairs[0].processed);
        let indices: Vec<_> = out.iter().map(|o| o.index).collect();
        assert_eq!(indices, [1, 2, 3, 4]);
    }

    #[test]
    fn static_scene_is_preserved() {
        let f = Frame::from_fn(8, 6, 3, |x, y, c| ((x + 2 * y + c) % 5) as f32 / 4.0).unwrap();
        let pairs = (1..=5).map(|i| FramePair::new(i, f.clone(), f.clone()).unwrap());
        for o in stabilize_sequence(pairs, ConsistencyParams::default(), &still()).unwrap() {
            assert_eq!(o.output, f);
        }
    }

    #[test]
    fn single_frame_stream() {
        let pairs = noisy_pairs(1, 2);
        let out =
            stabilize_sequence(pairs.clone(), ConsistencyParams::default(), &still()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].output, pairs[0].processed);
    }

    #[test]
    fn stabilization_reduces_temporal_variation() {
        let pairs = noisy_pairs(6, 3);
        let params = ConsistencyParams {
            iterations: 60,
            ..ConsistencyParams::default()
        };
        let out = stabilize_sequence(pairs.clone(), params, &still()).unwrap();
        let diff = |a: &Frame, b: &Frame| -> f32 {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y).abs())
                .sum()
        };
        let before: f32 = pairs
            .windows(2)
            .map(|w| diff(&w[0].processed, &w[1].processed))
            .sum();
        let after: f32 = out
            .windows(2)
            .map(|w| diff(&w[0].output, &w[1].output))
            .sum();
        assert!(after < 0.7 * before, "{after} vs {before}");
    }

    #[test]
    fn resolution_drift_is_rejected() {
        let mut state = SessionState::new(ConsistencyParams::default()).unwrap();
        let a = Frame::filled(4, 4, 3, 0.5).unwrap();
        let b = Frame::filled(5, 4, 3, 0.5).unwrap();
        state
            .push(FramePair::new(1, a.clone(), a).unwrap())
            .unwrap();
        let err = state
            .push(FramePair::new(2, b.clone(), b).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::ResolutionMismatch { .. }));
    }

    #[test]
    fn step_preconditions() {
        let flow = still();
        let mut state = SessionState::new(ConsistencyParams::default()).unwrap();
        let mut pairs = noisy_pairs(3, 4).into_iter();
        state.push(pairs.next().unwrap()).unwrap();
        assert!(state.stabilize_step(&flow).is_err());
        state.initialize().unwrap();
        state.push(pairs.next().unwrap()).unwrap();
        state.push(pairs.next().unwrap()).unwrap();
        assert!(state.stream_end_step(&flow).is_err());
        assert_eq!(state.pending_index(), Some(2));
        assert_eq!(state.stabilize_step(&flow).unwrap().index, 2);
        assert_eq!(state.stream_end_step(&flow).unwrap().index, 3);
    }

    #[test]
    fn params_change_applies_to_next_frame() {
        let flow = still();
        let mut s = Stabilizer::new(ConsistencyParams::default(), &flow).unwrap();
        let mut pairs = noisy_pairs(4, 5).into_iter();
        s.push(pairs.next().unwrap()).unwrap();
        let first = s.push(pairs.next().unwrap()).unwrap().unwrap();
        assert_eq!(first.params.lambda, 2.0);
        let p = ConsistencyParams {
            lambda: 0.5,
            ..ConsistencyParams::default()
        };
        s.set_params(p).unwrap();
        let second = s.push(pairs.next().unwrap()).unwrap().unwrap();
        assert_eq!(second.params, p);
        assert!(s
            .set_params(ConsistencyParams {
                k1: 0.6,
                k2: 0.6,
                ..p
            })
            .is_err());
        assert_eq!(*s.params(), p);
    }

    #[test]
    fn deterministic() {
        let pairs = noisy_pairs(4, 6);
        let a = stabilize_sequence(pairs.clone(), ConsistencyParams::default(), &still()).unwrap();
        let b = stabilize_sequence(pairs, ConsistencyParams::default(), &still()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.output, y.output);
        }
    }
}
