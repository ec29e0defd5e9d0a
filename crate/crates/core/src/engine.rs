//! Exact event-driven simulation.
//!
//! Every agent follows `dx_i/dt = u_i` with a piecewise-constant ternary input,
//! so the state is piecewise affine and is integrated in closed form between
//! events. The trajectory is stored as breakpoints `(t_m, x(t_m), u(t_m))`;
//! between two breakpoints `x(t) = x(t_m) + u(t_m) (t - t_m)`.
//!
//! Events at equal timestamps are ordered slot start, forced jam end, attempt,
//! hold expiry; ties within a kind go by agent (or slot) index.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::attacks::{
    AttackError, AttackIntervals, AwareAttacker, DeterministicAttack, Interval, JamBudget,
    PeriodicAttack,
};
use crate::control::{AttemptOutcome, ControlError, ControllerState, Ternary};
use crate::graph::Graph;
use crate::schedule::{CommSchedule, ParamViolation, ProtocolParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamViolation),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Jamming process driving a run.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackModel {
    None,
    /// Fixed in advance; `budget` is the declared `(kappa, rho)`, if any.
    Deterministic {
        attack: DeterministicAttack,
        budget: Option<JamBudget>,
    },
    /// Online communication-aware attacker; requires a common slot length.
    Aware(JamBudget),
}

impl AttackModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Deterministic {
                attack: DeterministicAttack::Intervals(_),
                ..
            } => "explicit",
            Self::Deterministic {
                attack: DeterministicAttack::Periodic(_),
                ..
            } => "periodic",
            Self::Aware(_) => "aware",
        }
    }

    pub fn budget(&self) -> Option<JamBudget> {
        match self {
            Self::None => None,
            Self::Deterministic { budget, .. } => *budget,
            Self::Aware(b) => Some(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub graph: Graph,
    pub params: ProtocolParams,
    pub x0: Vec<f64>,
    pub attack: AttackModel,
    pub horizon: f64,
    pub seed: u64,
    /// End the event loop once the state is frozen (all inputs zero inside the
    /// consensus set). Attempt logs then stop at that time.
    pub stop_at_quiescence: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate(&self.graph)?;
        if self.x0.len() != self.graph.n() {
            return Err(SimError::Config(format!(
                "x0 has {} entries for {} agents",
                self.x0.len(),
                self.graph.n()
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Config("x0 must be finite".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if matches!(self.attack, AttackModel::Aware(_)) && self.params.common_delta().is_none() {
            return Err(AttackError::NonuniformDelta.into());
        }
        Ok(())
    }
}

/// Jamming that actually happened during a run.
#[derive(Debug, Clone, PartialEq)]
pub enum RealizedAttack {
    Intervals(AttackIntervals),
    Periodic(PeriodicAttack),
}

impl RealizedAttack {
    pub fn is_jammed(&self, t: f64) -> bool {
        match self {
            Self::Intervals(a) => a.is_jammed(t),
            Self::Periodic(p) => p.is_jammed(t),
        }
    }

    pub fn intervals_until(&self, horizon: f64) -> Vec<Interval> {
        match self {
            Self::Intervals(a) => a
                .intervals()
                .iter()
                .copied()
                .take_while(|iv| iv.start <= horizon)
                .collect(),
            Self::Periodic(p) => p.materialize(horizon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptRecord {
    pub agent: usize,
    pub slot: u64,
    pub time: f64,
    pub success: bool,
    /// Neighbor offset observed on success.
    pub ave: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    times: Vec<f64>,
    /// Row-major `times.len() x n`.
    states: Vec<f64>,
    inputs: Vec<Ternary>,
    schedule: CommSchedule,
    attack: RealizedAttack,
    attempts: Vec<AttemptRecord>,
    hold: Vec<f64>,
    epsilon: f64,
    horizon: f64,
    quiescent_at: Option<f64>,
    num_events: u64,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, m: usize) -> f64 {
        self.times[m]
    }

    pub fn state(&self, m: usize) -> &[f64] {
        &self.states[m * self.n..(m + 1) * self.n]
    }

    pub fn input(&self, m: usize) -> &[Ternary] {
        &self.inputs[m * self.n..(m + 1) * self.n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// State at any `t` in `[0, horizon]`, by affine interpolation.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let m = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        let dt = t - self.times[m];
        self.state(m)
            .iter()
            .zip(self.input(m))
            .map(|(&x, &u)| x + f64::from(u) * dt)
            .collect()
    }

    pub fn schedule(&self) -> &CommSchedule {
        &self.schedule
    }

    pub fn attack(&self) -> &RealizedAttack {
        &self.attack
    }

    pub fn attempts(&self) -> &[AttemptRecord] {
        &self.attempts
    }

    pub fn hold(&self) -> &[f64] {
        &self.hold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time at which the event loop stopped because the state froze.
    pub fn quiescent_at(&self) -> Option<f64> {
        self.quiescent_at
    }

    /// Last time covered by the event log (quiescence or horizon).
    pub fn event_end(&self) -> f64 {
        self.quiescent_at.unwrap_or(self.horizon)
    }

    pub fn num_events(&self) -> u64 {
        self.num_events
    }

    #[cfg(test)]
    pub(crate) fn perturb_last_state(&mut self, by: f64) {
        let last = self.states.len() - 1;
        self.states[last] += by;
    }

    /// Success indicators of one agent, in slot order.
    pub fn success_series(&self, agent: usize) -> Vec<bool> {
        self.attempts
            .iter()
            .filter(|a| a.agent == agent)
            .map(|a| a.success)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    SlotStart,
    JamForcedEnd,
    Attempt,
    HoldExpiry,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    /// Agent for attempts and expiries, slot for attacker events.
    key: u64,
    /// Slot for attempts, generation for expiries.
    aux: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.key.cmp(&other.key))
            .then(self.aux.cmp(&other.aux))
    }
}

enum LiveAttack {
    None,
    Fixed(DeterministicAttack),
    Aware(AwareAttacker),
}

struct Recorder {
    n: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    inputs: Vec<Ternary>,
}

impl Recorder {
    fn last_time(&self) -> f64 {
        *self.times.last().expect("initial breakpoint")
    }

    fn last_input(&self) -> &[Ternary] {
        &self.inputs[self.inputs.len() - self.n..]
    }

    fn state_of(&self, i: usize, t: f64) -> f64 {
        let base = self.states.len() - self.n;
        self.states[base + i] + f64::from(self.inputs[base + i]) * (t - self.last_time())
    }

    /// Opens (or reuses) a breakpoint at `t` and sets `u_i = value`.
    fn set_input(&mut self, t: f64, i: usize, value: Ternary) {
        if self.last_input()[i] == value {
            return;
        }
        if self.last_time() != t {
            let x: Vec<f64> = (0..self.n).map(|j| self.state_of(j, t)).collect();
            let u = self.last_input().to_vec();
            self.times.push(t);
            self.states.extend(x);
            self.inputs.extend(u);
        }
        let base = self.inputs.len() - self.n;
        self.inputs[base + i] = value;
    }

    fn close(&mut self, t: f64) {
        if self.last_time() < t {
            let x: Vec<f64> = (0..self.n).map(|j| self.state_of(j, t)).collect();
            let u = self.last_input().to_vec();
            self.times.push(t);
            self.states.extend(x);
            self.inputs.extend(u);
        }
    }
}

/// Runs one simulation to the configured horizon.
pub fn simulate(cfg: &RunConfig) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let schedule = CommSchedule::draw(&cfg.params, cfg.horizon, cfg.seed);
    simulate_with_schedule(cfg, schedule)
}

/// Runs one simulation over an already realized schedule.
pub fn simulate_with_schedule(
    cfg: &RunConfig,
    schedule: CommSchedule,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let graph = &cfg.graph;
    let n = graph.n();
    if schedule.n_agents() != n {
        return Err(SimError::Config(format!(
            "schedule covers {} agents, graph has {n}",
            schedule.n_agents()
        )));
    }
    let horizon = cfg.horizon;
    let eps = cfg.params.epsilon;

    let mut live = match &cfg.attack {
        AttackModel::None => LiveAttack::None,
        AttackModel::Deterministic { attack, .. } => LiveAttack::Fixed(attack.clone()),
        AttackModel::Aware(budget) => {
            LiveAttack::Aware(AwareAttacker::for_slots(&cfg.params.delta, *budget)?)
        }
    };

    let mut queue = BinaryHeap::new();
    for agent in 0..n {
        if let Some(t) = schedule.attempt(agent, 0) {
            if t <= horizon {
                queue.push(Reverse(Event {
                    time: t,
                    kind: EventKind::Attempt,
                    key: agent as u64,
                    aux: 0,
                }));
            }
        }
    }
    if let LiveAttack::Aware(_) = live {
        queue.push(Reverse(Event {
            time: 0.0,
            kind: EventKind::SlotStart,
            key: 0,
            aux: 0,
        }));
    }

    let mut controllers: Vec<ControllerState> = (0..n)
        .map(|i| ControllerState::new(i, cfg.params.hold[i], eps))
        .collect();
    let mut generation = vec![0u64; n];
    let mut rec = Recorder {
        n,
        times: vec![0.0],
        states: cfg.x0.clone(),
        inputs: vec![0; n],
    };
    let mut attempts = Vec::new();
    let mut num_events = 0u64;
    let mut quiescent_at = None;

    while let Some(Reverse(ev)) = queue.pop() {
        if ev.time > horizon {
            break;
        }
        num_events += 1;
        let t = ev.time;
        match ev.kind {
            EventKind::SlotStart => {
                let LiveAttack::Aware(att) = &mut live else {
                    unreachable!("slot events only with the aware attacker")
                };
                att.start_slot(ev.key)?;
                if let Some(end) = att.jam_end() {
                    queue.push(Reverse(Event {
                        time: end,
                        kind: EventKind::JamForcedEnd,
                        key: ev.key,
                        aux: 0,
                    }));
                }
                let next = att.slot_start(ev.key + 1);
                if next <= horizon {
                    queue.push(Reverse(Event {
                        time: next,
                        kind: EventKind::SlotStart,
                        key: ev.key + 1,
                        aux: 0,
                    }));
                }
            }
            EventKind::JamForcedEnd => {
                if let LiveAttack::Aware(att) = &mut live {
                    att.force_end(ev.key);
                }
            }
            EventKind::Attempt => {
                let agent = ev.key as usize;
                let slot = ev.aux;
                let jammed = match &mut live {
                    LiveAttack::None => false,
                    LiveAttack::Fixed(a) => a.is_jammed(t),
                    LiveAttack::Aware(att) => {
                        let jammed = att.is_jammed(t);
                        att.sense_attempt(t, agent)?;
                        jammed
                    }
                };
                let success = !jammed;
                let ave = success.then(|| {
                    let xi = rec.state_of(agent, t);
                    graph
                        .neighbors(agent)
                        .expect("agent in graph")
                        .iter()
                        .map(|&j| rec.state_of(j, t) - xi)
                        .sum::<f64>()
                });
                let ctl = &mut controllers[agent];
                ctl.on_attempt(&AttemptOutcome {
                    slot,
                    time: t,
                    success,
                    ave: ave.unwrap_or(0.0),
                })?;
                attempts.push(AttemptRecord {
                    agent,
                    slot,
                    time: t,
                    success,
                    ave,
                });
                let value = ctl.control_value(t);
                generation[agent] += 1;
                if value != 0 {
                    queue.push(Reverse(Event {
                        time: ctl.active_until(),
                        kind: EventKind::HoldExpiry,
                        key: ev.key,
                        aux: generation[agent],
                    }));
                }
                rec.set_input(t, agent, value);
                if let Some(next) = schedule.attempt(agent, slot as usize + 1) {
                    if next <= horizon {
                        queue.push(Reverse(Event {
                            time: next,
                            kind: EventKind::Attempt,
                            key: ev.key,
                            aux: slot + 1,
                        }));
                    }
                }
            }
            EventKind::HoldExpiry => {
                let agent = ev.key as usize;
                if ev.aux == generation[agent] {
                    let value = controllers[agent].control_value(t);
                    rec.set_input(t, agent, value);
                }
            }
        }

        if cfg.stop_at_quiescence
            && matches!(ev.kind, EventKind::Attempt | EventKind::HoldExpiry)
            && rec.last_input().iter().all(|&u| u == 0)
        {
            let x: Vec<f64> = (0..n).map(|j| rec.state_of(j, t)).collect();
            if graph.in_consensus_set(&x, eps) {
                quiescent_at = Some(t);
                break;
            }
        }
    }

    rec.close(horizon);
    let attack = match live {
        LiveAttack::None => RealizedAttack::Intervals(AttackIntervals::empty()),
        LiveAttack::Fixed(DeterministicAttack::Intervals(a)) => RealizedAttack::Intervals(a),
        LiveAttack::Fixed(DeterministicAttack::Periodic(p)) => RealizedAttack::Periodic(p),
        LiveAttack::Aware(att) => {
            let budget = att.budget();
            RealizedAttack::Intervals(AttackIntervals::new(att.finish(), Some(budget))?)
        }
    };

    Ok(Trajectory {
        n,
        times: rec.times,
        states: rec.states,
        inputs: rec.inputs,
        schedule,
        attack,
        attempts,
        hold: cfg.params.hold.clone(),
        epsilon: eps,
        horizon,
        quiescent_at,
        num_events,
    })
}

/// `V(x(t_m)) = x^T L x / 2` at every breakpoint.
pub fn lyapunov_trace(tr: &Trajectory, graph: &Graph) -> Vec<(f64, f64)> {
    (0..tr.len())
        .map(|m| (tr.time(m), graph.disagreement(tr.state(m))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConsensusTimes {
    /// First time the state is inside the consensus set.
    pub first_entry: Option<f64>,
    /// Last time the state is outside the consensus set; `None` if it is
    /// still outside at the horizon. `Some(0.0)` if it never leaves.
    pub settling: Option<f64>,
}

/// Sub-interval of `[0, len]` where `a + b s >= thr`.
fn at_least(a: f64, b: f64, len: f64, thr: f64) -> Option<(f64, f64)> {
    if b == 0.0 {
        return (a >= thr).then_some((0.0, len));
    }
    let root = (thr - a) / b;
    if b > 0.0 {
        let lo = root.max(0.0);
        (lo <= len).then_some((lo, len))
    } else {
        let hi = root.min(len);
        (hi >= 0.0).then_some((0.0, hi))
    }
}

/// Exact consensus-set entry and settling times.
///
/// `ave^i` is affine on each segment, so the set where `max_i |ave^i| >= eps`
/// is a finite union of closed intervals per segment, found by solving linear
/// equations.
pub fn consensus_times(tr: &Trajectory, graph: &Graph, eps: f64) -> ConsensusTimes {
    let n = tr.n();
    let mut first_entry = None;
    let mut settling: Option<f64> = None;
    let mut outside = Vec::with_capacity(2 * n);
    let mut rates = vec![0.0; n];

    for m in 0..tr.len() {
        let t0 = tr.time(m);
        let len = if m + 1 < tr.len() {
            tr.time(m + 1) - t0
        } else {
            0.0
        };
        let x = tr.state(m);
        let u: Vec<f64> = tr.input(m).iter().map(|&v| f64::from(v)).collect();
        outside.clear();
        for (i, rate) in rates.iter_mut().enumerate() {
            let a = graph.neighbor_offset(i, x);
            *rate = graph.neighbor_offset_rate(i, &u);
            outside.extend(at_least(a, *rate, len, eps));
            outside.extend(at_least(-a, -*rate, len, eps));
        }
        if let Some(hi) = outside.iter().map(|iv| iv.1).reduce(f64::max) {
            settling = Some(t0 + hi);
        }
        if first_entry.is_none() {
            outside.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut covered: Option<f64> = None;
            for &(lo, hi) in &outside {
                match covered {
                    None if lo > 0.0 => break,
                    None => covered = Some(hi),
                    Some(c) if lo > c => break,
                    Some(c) => covered = Some(c.max(hi)),
                }
            }
            match covered {
                None => first_entry = Some(t0),
                Some(c) if c < len => first_entry = Some(t0 + c),
                _ => {}
            }
        }
    }

    let at_horizon = tr.final_state();
    let settling = if graph.in_consensus_set(at_horizon, eps) {
        Some(settling.unwrap_or(0.0))
    } else {
        None
    };
    ConsensusTimes {
        first_entry,
        settling,
    }
}

/// Finds a horizon automatically: pilot runs with doubling horizons until the
/// run settles, then three times the pilot settling time (at least `min_horizon`).
pub fn auto_horizon(cfg: &RunConfig, start: f64, cap: f64, min_horizon: f64) -> Option<f64> {
    let mut pilot = cfg.clone();
    pilot.stop_at_quiescence = true;
    let mut h = start;
    while h <= cap {
        pilot.horizon = h;
        let tr = simulate(&pilot).ok()?;
        if let Some(s) = consensus_times(&tr, &cfg.graph, cfg.params.epsilon).settling {
            return Some((3.0 * s).max(min_horizon));
        }
        h *= 2.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::periodic_schedule;

    fn two_agents(attack: AttackModel, x0: Vec<f64>, horizon: f64) -> RunConfig {
        RunConfig {
            graph: Graph::path(2).unwrap(),
            params: ProtocolParams::uniform(2, 0.01, 1.01, 0.02),
            x0,
            attack,
            horizon,
            seed: 4,
            stop_at_quiescence: false,
        }
    }

    /// Independent two-agent computation: each agent moves toward the other on
    /// `[t, t + T)` after every attempt at which the gap is at least eps, and
    /// the gap shrinks by the measure of the union of those windows.
    fn two_agent_oracle(
        schedule: &CommSchedule,
        hold: f64,
        eps: f64,
        gap0: f64,
        horizon: f64,
    ) -> f64 {
        let mut attempts: Vec<(f64, usize)> = (0..2)
            .flat_map(|i| schedule.agent_times(i).iter().map(move |&t| (t, i)))
            .filter(|&(t, _)| t <= horizon)
            .collect();
        attempts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut windows: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
        let moved = |w: &[(f64, f64)], t: f64| -> f64 {
            // Windows are in time order; merge overlaps.
            let mut total = 0.0;
            let mut cur: Option<(f64, f64)> = None;
            for &(a, b) in w {
                let (a, b) = (a.min(t), b.min(t));
                match cur {
                    Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
                    Some((ca, cb)) => {
                        total += cb - ca;
                        cur = Some((a, b));
                    }
                    None => cur = Some((a, b)),
                }
            }
            total + cur.map_or(0.0, |(a, b)| b - a)
        };
        let gap = |w: &[Vec<(f64, f64)>; 2], t: f64| gap0 - moved(&w[0], t) - moved(&w[1], t);
        for (t, i) in attempts {
            if gap(&windows, t) >= eps {
                windows[i].push((t, t + hold));
            }
        }
        // Bisection for the time the gap crosses eps (the gap is nonincreasing).
        let (mut lo, mut hi) = (0.0, horizon);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(&windows, mid) >= eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn two_agents_without_attacks_settle_like_the_oracle() {
        let cfg = two_agents(AttackModel::None, vec![0.0, 1.0], 60.0);
        let tr = simulate(&cfg).unwrap();
        let ct = consensus_times(&tr, &cfg.graph, 0.02);
        let settling = ct.settling.expect("settles");
        let oracle = two_agent_oracle(tr.schedule(), cfg.params.hold[0], 0.02, 1.0, 60.0);
        assert!((settling - oracle).abs() < 1e-9, "{settling} vs {oracle}");
        assert_eq!(ct.first_entry, ct.settling);
        // Inputs are zero once settled.
        let last = tr.len() - 1;
        assert!(tr.input(last).iter().all(|&u| u == 0));
        let x = tr.final_state();
        assert!((x[1] - x[0]).abs() < 0.02);
    }

    #[test]
    fn inside_consensus_set_nothing_moves() {
        let cfg = two_agents(AttackModel::None, vec![0.3, 0.31], 5.0);
        let tr = simulate(&cfg).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.final_state(), &[0.3, 0.31]);
        let ct = consensus_times(&tr, &cfg.graph, 0.02);
        assert_eq!(ct.first_entry, Some(0.0));
        assert_eq!(ct.settling, Some(0.0));
    }

    #[test]
    fn blanket_jamming_blocks_everything() {
        let blanket = AttackIntervals::from_pairs(&[(0.0, 10.0)], None).unwrap();
        let attack = AttackModel::Deterministic {
            attack: DeterministicAttack::Intervals(blanket),
            budget: None,
        };
        let cfg = two_agents(attack, vec![0.0, 1.0], 5.0);
        let tr = simulate(&cfg).unwrap();
        assert!(tr.attempts().iter().all(|a| !a.success));
        assert_eq!(tr.final_state(), &[0.0, 1.0]);
        assert_eq!(consensus_times(&tr, &cfg.graph, 0.02).settling, None);
        assert_eq!(consensus_times(&tr, &cfg.graph, 0.02).first_entry, None);
    }

    #[test]
    fn lyapunov_is_zero_at_consensus_and_flat_when_frozen() {
        let cfg = two_agents(AttackModel::None, vec![0.5, 0.5], 1.0);
        let tr = simulate(&cfg).unwrap();
        assert!(lyapunov_trace(&tr, &cfg.graph)
            .iter()
            .all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn quiescence_stops_early_without_changing_the_outcome() {
        let mut cfg = two_agents(AttackModel::None, vec![0.0, 1.0], 60.0);
        let full = simulate(&cfg).unwrap();
        cfg.stop_at_quiescence = true;
        let short = simulate(&cfg).unwrap();
        let q = short.quiescent_at().expect("freezes");
        assert!(q < 60.0);
        assert_eq!(full.final_state(), short.final_state());
        let a = consensus_times(&full, &cfg.graph, 0.02);
        let b = consensus_times(&short, &cfg.graph, 0.02);
        assert_eq!(a, b);
        assert!(short.attempts().len() < full.attempts().len());
    }

    #[test]
    fn periodic_attack_blocks_attempts_inside_bursts() {
        let a = PeriodicAttack::new(0.5, 10.0).unwrap();
        let attack = AttackModel::Deterministic {
            attack: DeterministicAttack::Periodic(a),
            budget: periodic_schedule(0.5, 10.0, 1.0).unwrap().budget(),
        };
        let cfg = two_agents(attack, vec![0.0, 1.0], 20.0);
        let tr = simulate(&cfg).unwrap();
        for rec in tr.attempts() {
            assert_eq!(rec.success, !a.is_jammed(rec.time));
        }
        let succ = tr.attempts().iter().filter(|a| a.success).count() as f64;
        let frac = succ / tr.attempts().len() as f64;
        assert!((frac - 0.5).abs() < 0.1, "success fraction {frac}");
    }

    #[test]
    fn aware_attack_requires_common_slot() {
        let mut cfg = two_agents(
            AttackModel::Aware(JamBudget::new(0.1, 0.5).unwrap()),
            vec![0.0, 1.0],
            1.0,
        );
        cfg.params.delta[1] = 0.011;
        assert!(matches!(
            simulate(&cfg),
            Err(SimError::Attack(AttackError::NonuniformDelta))
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = two_agents(AttackModel::None, vec![0.0], 1.0);
        assert!(matches!(simulate(&cfg), Err(SimError::Config(_))));
        cfg.x0 = vec![0.0, 1.0];
        cfg.horizon = 0.0;
        assert!(matches!(simulate(&cfg), Err(SimError::Config(_))));
        cfg.horizon = 1.0;
        cfg.params.hold = vec![0.05; 2];
        assert!(matches!(simulate(&cfg), Err(SimError::Params(_))));
    }

    #[test]
    fn consensus_times_on_hand_built_segments() {
        // Agent 1 moves toward agent 0 at unit speed: gap 1 - t, |ave| = gap.
        let schedule = CommSchedule::from_times(0, vec![10.0, 10.0], vec![vec![], vec![]]);
        let tr = Trajectory {
            n: 2,
            times: vec![0.0, 0.9, 2.0],
            states: vec![0.0, 1.0, 0.0, 0.1, 0.0, 0.1],
            inputs: vec![0, -1, 0, 0, 0, 0],
            schedule,
            attack: RealizedAttack::Intervals(AttackIntervals::empty()),
            attempts: vec![],
            hold: vec![1.0, 1.0],
            epsilon: 0.5,
            horizon: 2.0,
            quiescent_at: None,
            num_events: 0,
        };
        let g = Graph::path(2).unwrap();
        let ct = consensus_times(&tr, &g, 0.5);
        assert!((ct.settling.unwrap() - 0.5).abs() < 1e-15);
        assert!((ct.first_entry.unwrap() - 0.5).abs() < 1e-15);
        let ct = consensus_times(&tr, &g, 0.05);
        assert_eq!(ct.settling, None);
        assert_eq!(ct.first_entry, None);
    }
}
