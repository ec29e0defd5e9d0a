//! Randomized transmission protocol.
//!
//! Agent `i` makes exactly one communication attempt per slot
//! `[k * delta_i, (k + 1) * delta_i)`, at a time drawn uniformly within the slot.
//!
//! Draws come from ChaCha8 keyed by the master seed. Agent `i` owns stream `i`,
//! and the draw for slot `k` is the 64-bit word at position `2k` of that stream,
//! so every `(seed, agent, slot)` triple maps to a fixed value regardless of how
//! many other draws were made or on which thread.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::Graph;

/// Stream id reserved for initial-state draws; agent streams are `0..n`.
pub const INITIAL_STATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamViolation {
    #[error("expected {expected} per-agent values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("agent {agent}: slot length must be positive, got {delta}")]
    Delta { agent: usize, delta: f64 },
    #[error(
        "agent {agent}: hold time {hold} outside (0, {bound}) (bound = min(eps/(2 d), delta))"
    )]
    Hold { agent: usize, hold: f64, bound: f64 },
}

/// Per-agent slot lengths and hold times, plus the shared deadband.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub delta: Vec<f64>,
    pub hold: Vec<f64>,
    pub epsilon: f64,
}

impl ProtocolParams {
    pub fn new(delta: Vec<f64>, hold: Vec<f64>, epsilon: f64) -> Self {
        Self {
            delta,
            hold,
            epsilon,
        }
    }

    /// Same slot length for every agent with `hold = delta / divisor`.
    pub fn uniform(n: usize, delta: f64, divisor: f64, epsilon: f64) -> Self {
        Self::new(vec![delta; n], vec![delta / divisor; n], epsilon)
    }

    /// Common slot length, if all agents share one.
    pub fn common_delta(&self) -> Option<f64> {
        let first = *self.delta.first()?;
        self.delta.iter().all(|&d| d == first).then_some(first)
    }

    /// Checks `hold_i` in `(0, min(eps / (2 d_i), delta_i))` for every agent.
    pub fn validate(&self, graph: &Graph) -> Result<(), ParamViolation> {
        let n = graph.n();
        for len in [self.delta.len(), self.hold.len()] {
            if len != n {
                return Err(ParamViolation::Dimension {
                    expected: n,
                    got: len,
                });
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(ParamViolation::Epsilon(self.epsilon));
        }
        for agent in 0..n {
            let delta = self.delta[agent];
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(ParamViolation::Delta { agent, delta });
            }
            let degree = graph.degree(agent).expect("agent index within graph") as f64;
            let bound = (self.epsilon / (2.0 * degree)).min(delta);
            let hold = self.hold[agent];
            if !(hold > 0.0 && hold < bound) {
                return Err(ParamViolation::Hold { agent, hold, bound });
            }
        }
        Ok(())
    }
}

fn unit_from_bits(bits: u64) -> f64 {
    // 53 high bits, scaled into [0, 1).
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The uniform `[0, 1)` variate for `(seed, agent, slot)`, computed directly.
pub fn slot_variate(seed: u64, agent: usize, slot: u64) -> f64 {
    let mut rng = stream_rng(seed, agent as u64);
    rng.set_word_pos(u128::from(slot) * 2);
    unit_from_bits(rng.next_u64())
}

/// `n` values uniform in `[low, high)` from the reserved initial-state stream.
pub fn uniform_initial_state(seed: u64, n: usize, low: f64, high: f64) -> Vec<f64> {
    let mut rng = stream_rng(seed, INITIAL_STATE_STREAM);
    (0..n)
        .map(|_| low + (high - low) * unit_from_bits(rng.next_u64()))
        .collect()
}

/// Realized attempt times, fully materialized up to a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSchedule {
    seed: u64,
    delta: Vec<f64>,
    times: Vec<Vec<f64>>,
}

impl CommSchedule {
    /// Draws every slot whose start `k * delta_i` is at most `horizon`.
    pub fn draw(params: &ProtocolParams, horizon: f64, seed: u64) -> Self {
        let times = params
            .delta
            .iter()
            .enumerate()
            .map(|(agent, &delta)| {
                let slots = (horizon / delta).floor() as u64 + 1;
                let mut rng = stream_rng(seed, agent as u64);
                (0..slots)
                    .map(|k| {
                        let start = k as f64 * delta;
                        let t = start + unit_from_bits(rng.next_u64()) * delta;
                        // Rounding can push start + u * delta onto the next slot boundary.
                        let end = (k + 1) as f64 * delta;
                        if t < end {
                            t
                        } else {
                            start.max(end.next_down())
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            seed,
            delta: params.delta.clone(),
            times,
        }
    }

    /// Builds a schedule from explicit attempt times (tests, replays).
    pub fn from_times(seed: u64, delta: Vec<f64>, times: Vec<Vec<f64>>) -> Self {
        Self { seed, delta, times }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_agents(&self) -> usize {
        self.times.len()
    }

    pub fn delta(&self, agent: usize) -> f64 {
        self.delta[agent]
    }

    pub fn agent_times(&self, agent: usize) -> &[f64] {
        &self.times[agent]
    }

    pub fn attempt(&self, agent: usize, slot: usize) -> Option<f64> {
        self.times.get(agent)?.get(slot).copied()
    }
}
