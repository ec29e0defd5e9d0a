//! Ternary control law driven by the outcome of each communication attempt.
//!
//! At attempt `k` the controller computes the candidate input
//! `cand_k = phi_k * sign_eps(ave_k)` and then:
//!
//! * `cand_k != 0`: apply `cand_k` on `[t_k, t_k + T)`;
//! * `cand_k == 0` and `t_k < t_{k-1} + T`: keep applying `cand_{k-1}` until `t_{k-1} + T`;
//! * otherwise: apply 0.
//!
//! The emitted input is further cut off by the next attempt, which the engine
//! realizes by delivering that attempt before the expiry.

use thiserror::Error;

/// Ternary control value.
pub type Ternary = i8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("agent {agent}: attempt for slot {got} delivered, expected slot {expected}")]
    OutOfOrderAttempt {
        agent: usize,
        expected: u64,
        got: u64,
    },
    #[error("agent {agent}: attempt at {time} precedes previous attempt at {previous}")]
    TimeReversal {
        agent: usize,
        time: f64,
        previous: f64,
    },
}

/// `sign(z)` when `|z| >= eps`, else 0. The boundary `|z| == eps` maps to `sign(z)`.
pub fn sign_eps(z: f64, eps: f64) -> Ternary {
    if z.abs() >= eps {
        if z > 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

/// Result of one communication attempt as seen by the attempting agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptOutcome {
    pub slot: u64,
    pub time: f64,
    pub success: bool,
    /// Neighbor offset at `time`; only meaningful when `success` is set.
    pub ave: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    agent: usize,
    hold: f64,
    epsilon: f64,
    /// Slot of the last processed attempt; `None` before the first attempt.
    last_slot: Option<u64>,
    t_prev: f64,
    cand_prev: Ternary,
    uhat: Ternary,
    active_until: f64,
}

impl ControllerState {
    pub fn new(agent: usize, hold: f64, epsilon: f64) -> Self {
        Self {
            agent,
            hold,
            epsilon,
            last_slot: None,
            t_prev: f64::NEG_INFINITY,
            cand_prev: 0,
            uhat: 0,
            active_until: f64::NEG_INFINITY,
        }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn hold(&self) -> f64 {
        self.hold
    }

    pub fn last_slot(&self) -> Option<u64> {
        self.last_slot
    }

    pub fn last_attempt_time(&self) -> Option<f64> {
        self.last_slot.map(|_| self.t_prev)
    }

    /// Input set at the last attempt (before any expiry).
    pub fn uhat(&self) -> Ternary {
        self.uhat
    }

    /// Exclusive end of the window in which `uhat` is applied.
    pub fn active_until(&self) -> f64 {
        self.active_until
    }

    /// Candidate input computed at the last attempt (`phi * sign_eps(ave)`).
    pub fn last_candidate(&self) -> Ternary {
        self.cand_prev
    }

    /// Processes attempt `outcome`, which must belong to the slot right after the last one.
    pub fn on_attempt(&mut self, outcome: &AttemptOutcome) -> Result<(), ControlError> {
        let expected = self.last_slot.map_or(0, |k| k + 1);
        if outcome.slot != expected {
            return Err(ControlError::OutOfOrderAttempt {
                agent: self.agent,
                expected,
                got: outcome.slot,
            });
        }
        if self.last_slot.is_some() && outcome.time < self.t_prev {
            return Err(ControlError::TimeReversal {
                agent: self.agent,
                time: outcome.time,
                previous: self.t_prev,
            });
        }

        let t = outcome.time;
        let cand = if outcome.success {
            sign_eps(outcome.ave, self.epsilon)
        } else {
            0
        };
        let (uhat, until) = if cand != 0 || self.last_slot.is_none() {
            (cand, t + self.hold)
        } else if t < self.t_prev + self.hold {
            (self.cand_prev, self.t_prev + self.hold)
        } else {
            (0, t + self.hold)
        };

        self.last_slot = Some(outcome.slot);
        self.t_prev = t;
        self.cand_prev = cand;
        self.uhat = uhat;
        self.active_until = until;
        Ok(())
    }

    /// Input applied at time `t`, assuming no later attempt has been processed.
    pub fn control_value(&self, t: f64) -> Ternary {
        match self.last_slot {
            Some(_) if t >= self.t_prev && t < self.active_until => self.uhat,
            _ => 0,
        }
    }

    /// Whether the current input is nonzero and still pending expiry after `t`.
    pub fn holding_at(&self, t: f64) -> bool {
        self.control_value(t) != 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(slot: u64, time: f64, success: bool, ave: f64) -> AttemptOutcome {
        AttemptOutcome {
            slot,
            time,
            success,
            ave,
        }
    }

    #[test]
    fn sign_with_deadband() {
        assert_eq!(sign_eps(0.05, 0.02), 1);
        assert_eq!(sign_eps(-0.02, 0.02), -1);
        assert_eq!(sign_eps(0.02, 0.02), 1);
        assert_eq!(sign_eps(0.0199, 0.02), 0);
        assert_eq!(sign_eps(0.0, 0.02), 0);
    }

    #[test]
    fn successful_attempt_sets_input_for_hold() {
        let mut c = ControllerState::new(0, 0.5, 0.02);
        assert_eq!(c.control_value(0.1), 0);
        c.on_attempt(&outcome(0, 0.3, true, 0.05)).unwrap();
        assert_eq!(c.uhat(), 1);
        assert_eq!(c.active_until(), 0.3 + 0.5);
        assert_eq!(c.control_value(0.3), 1);
    }

    #[test]
    fn failed_attempt_inside_hold_keeps_previous_input() {
        let mut c = ControllerState::new(0, 0.9, 0.02);
        c.on_attempt(&outcome(0, 0.8, true, -0.3)).unwrap();
        c.on_attempt(&outcome(1, 1.1, false, 0.0)).unwrap();
        assert_eq!(c.uhat(), -1);
        assert_eq!(c.active_until(), 0.8 + 0.9);
        assert_eq!(c.control_value(1.69), -1);
        assert_eq!(c.control_value(0.8 + 0.9), 0);
    }

    #[test]
    fn failed_attempt_after_hold_sets_zero() {
        let mut c = ControllerState::new(0, 0.5, 0.02);
        c.on_attempt(&outcome(0, 0.2, true, 1.0)).unwrap();
        c.on_attempt(&outcome(1, 1.5, false, 0.0)).unwrap();
        assert_eq!(c.uhat(), 0);
        assert_eq!(c.control_value(1.6), 0);
    }

    #[test]
    fn boundary_of_hold_falls_to_zero_branch() {
        let mut c = ControllerState::new(0, 0.5, 0.02);
        c.on_attempt(&outcome(0, 0.5, true, 1.0)).unwrap();
        c.on_attempt(&outcome(1, 1.0, false, 0.0)).unwrap();
        assert_eq!(c.uhat(), 0);
    }

    #[test]
    fn half_open_window() {
        let mut c = ControllerState::new(0, 1.0, 0.02);
        c.on_attempt(&outcome(0, 1.0, true, 2.0)).unwrap();
        assert_eq!(c.control_value(1.99), 1);
        assert_eq!(c.control_value(2.0), 0);
    }

    #[test]
    fn out_of_order_attempts_are_rejected() {
        let mut c = ControllerState::new(3, 0.5, 0.02);
        assert_eq!(
            c.on_attempt(&outcome(1, 1.2, true, 1.0)),
            Err(ControlError::OutOfOrderAttempt {
                agent: 3,
                expected: 0,
                got: 1
            })
        );
        c.on_attempt(&outcome(0, 0.2, true, 1.0)).unwrap();
        assert!(c.on_attempt(&outcome(2, 2.2, true, 1.0)).is_err());
        assert!(c.on_attempt(&outcome(1, 0.1, true, 1.0)).is_err());
    }

    /// Step pattern of the agent-2 example: attempts 0, 2, 3, 4 succeed, 1 fails.
    #[test]
    fn example_step_pattern() {
        let hold = 0.9;
        let attempts = [
            outcome(0, 0.05, true, 0.4),
            outcome(1, 1.5, false, 0.0),
            outcome(2, 2.8, true, 0.3),
            outcome(3, 3.1, true, -0.2),
            outcome(4, 4.5, true, 0.1),
        ];
        let mut c = ControllerState::new(2, hold, 0.02);
        // (attempt index, probe time, expected input)
        let probes: &[&[(f64, Ternary)]] = &[
            &[(0.05, 1), (0.9, 1), (0.951, 0), (1.4, 0)],
            &[(1.5, 0), (2.7, 0)],
            &[(2.8, 1), (3.05, 1)],
            &[(3.1, -1), (3.99, -1), (4.001, 0), (4.4, 0)],
            &[(4.5, 1), (5.39, 1), (5.401, 0)],
        ];
        for (a, checks) in attempts.iter().zip(probes) {
            c.on_attempt(a).unwrap();
            for &(t, want) in *checks {
                assert_eq!(c.control_value(t), want, "t = {t}");
            }
        }
    }
}
