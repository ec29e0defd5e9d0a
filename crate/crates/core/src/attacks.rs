//! Jamming processes and the duration budget that constrains them.
//!
//! An attack is a sequence of closed intervals `[a_k, a_k + tau_k]` during
//! which every transmission fails. The budget `(kappa, rho)` requires the
//! jammed measure of every window `[s, t]` to be at most `kappa + rho (t - s)`.
//!
//! Budget checks work on the cumulative slack `G(t) = rho t - |jammed in [0, t]|`:
//! the budget holds on `[s, t]` iff `G(s) - G(t) <= kappa`. `G` rises at rate
//! `rho` while idle and falls at rate `1 - rho` while jamming, so its local maxima
//! sit at attack starts and its local minima at attack ends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack allowed when checking the duration budget in floating point.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("interval {index}: start {start} and duration {duration} must be finite, start >= 0, duration >= 0")]
    BadInterval {
        index: usize,
        start: f64,
        duration: f64,
    },
    #[error("interval {index} starts at {start}, not after the previous end {previous_end}")]
    Unordered {
        index: usize,
        start: f64,
        previous_end: f64,
    },
    #[error("invalid query window [{tau}, {t}]")]
    InvalidInterval { tau: f64, t: f64 },
    #[error("rho must lie in (0, 1), got {0}")]
    Rho(f64),
    #[error("kappa must be finite and >= 0, got {0}")]
    Kappa(f64),
    #[error("attack frequency must be positive, got {0}")]
    Sigma(f64),
    #[error("slot length must be positive, got {0}")]
    Delta(f64),
    #[error("communication-aware attack needs a common slot length for all agents")]
    NonuniformDelta,
    #[error("out-of-order attacker event: {0}")]
    OutOfOrderEvent(String),
}

/// Closed jamming interval `[start, start + duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub duration: f64,
}

impl Interval {
    pub fn new(start: f64, duration: f64) -> Self {
        Self { start, duration }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }
}

/// The `(kappa, rho)` duration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JamBudget {
    pub kappa: f64,
    pub rho: f64,
}

impl JamBudget {
    pub fn new(kappa: f64, rho: f64) -> Result<Self, AttackError> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(AttackError::Kappa(kappa));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(AttackError::Rho(rho));
        }
        Ok(Self { kappa, rho })
    }

    /// Longest continuous jam the budget allows, `kappa / (1 - rho)`.
    pub fn longest_jam(&self) -> f64 {
        self.kappa / (1.0 - self.rho)
    }
}

/// An ordered list of disjoint attack intervals with an optional declared budget.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackIntervals {
    intervals: Vec<Interval>,
    budget: Option<JamBudget>,
}

impl AttackIntervals {
    pub fn new(intervals: Vec<Interval>, budget: Option<JamBudget>) -> Result<Self, AttackError> {
        for (index, iv) in intervals.iter().enumerate() {
            if !(iv.start >= 0.0 && iv.duration >= 0.0 && iv.end().is_finite()) {
                return Err(AttackError::BadInterval {
                    index,
                    start: iv.start,
                    duration: iv.duration,
                });
            }
            if index > 0 {
                let previous_end = intervals[index - 1].end();
                if !(iv.start > previous_end) {
                    return Err(AttackError::Unordered {
                        index,
                        start: iv.start,
                        previous_end,
                    });
                }
            }
        }
        Ok(Self { intervals, budget })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds from `(start, duration)` pairs.
    pub fn from_pairs(
        pairs: &[(f64, f64)],
        budget: Option<JamBudget>,
    ) -> Result<Self, AttackError> {
        Self::new(
            pairs.iter().map(|&(a, d)| Interval::new(a, d)).collect(),
            budget,
        )
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn budget(&self) -> Option<JamBudget> {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether `t` lies in some closed attack interval.
    pub fn is_jammed(&self, t: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.start <= t);
        idx > 0 && self.intervals[idx - 1].contains(t)
    }

    /// Lebesgue measure of the jammed set within `[tau, t]`.
    pub fn jammed_measure(&self, tau: f64, t: f64) -> Result<f64, AttackError> {
        if !(tau >= 0.0 && tau <= t) {
            return Err(AttackError::InvalidInterval { tau, t });
        }
        let first = self.intervals.partition_point(|iv| iv.end() < tau);
        Ok(self.intervals[first..]
            .iter()
            .take_while(|iv| iv.start <= t)
            .map(|iv| (iv.end().min(t) - iv.start.max(tau)).max(0.0))
            .sum())
    }

    /// Worst budget window over `[0, horizon]`; see [`worst_budget_window`].
    pub fn worst_window(&self, budget: JamBudget, horizon: f64) -> BudgetWindow {
        worst_budget_window(&self.intervals, budget, horizon)
    }

    /// Checks the duration budget over `[0, horizon]`.
    pub fn check_budget(&self, budget: JamBudget, horizon: f64) -> Result<(), BudgetViolation> {
        check_assumption1(&self.intervals, budget, horizon)
    }
}

/// Window `[tau, t]` maximizing `|jammed in [tau, t]| - kappa - rho (t - tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetWindow {
    pub tau: f64,
    pub t: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize)]
#[error("duration budget exceeded by {excess} on window [{tau}, {t}]")]
pub struct BudgetViolation {
    pub tau: f64,
    pub t: f64,
    pub excess: f64,
}

/// Exact worst window of the duration budget over `[0, horizon]`.
///
/// Only attack starts (and 0) can maximize the cumulative slack and only
/// attack ends (and the horizon) can minimize it, so one pass with a running
/// maximum visits every candidate pair.
pub fn worst_budget_window(
    intervals: &[Interval],
    budget: JamBudget,
    horizon: f64,
) -> BudgetWindow {
    let rho = budget.rho;
    let mut jammed = 0.0;
    // (G value, time) of the best window start so far.
    let mut best_start = (0.0, 0.0);
    // The empty window [0, 0] has excess -kappa.
    let mut worst = BudgetWindow {
        tau: 0.0,
        t: 0.0,
        excess: -budget.kappa,
    };
    let consider = |best_start: (f64, f64), t: f64, g_t: f64, worst: &mut BudgetWindow| {
        let excess = best_start.0 - g_t - budget.kappa;
        if excess > worst.excess {
            *worst = BudgetWindow {
                tau: best_start.1,
                t,
                excess,
            };
        }
    };
    for iv in intervals {
        if iv.start > horizon {
            break;
        }
        let g_start = rho * iv.start - jammed;
        if g_start > best_start.0 {
            best_start = (g_start, iv.start);
        }
        let end = iv.end().min(horizon);
        jammed += end - iv.start;
        consider(best_start, end, rho * end - jammed, &mut worst);
    }
    consider(best_start, horizon, rho * horizon - jammed, &mut worst);
    worst
}

/// Verifies `|jammed in [tau, t]| <= kappa + rho (t - tau)` for all `0 <= tau <= t <= horizon`,
/// up to [`BUDGET_TOLERANCE`]. Returns the worst window when violated.
pub fn check_assumption1(
    intervals: &[Interval],
    budget: JamBudget,
    horizon: f64,
) -> Result<(), BudgetViolation> {
    let w = worst_budget_window(intervals, budget, horizon);
    if w.excess > BUDGET_TOLERANCE {
        Err(BudgetViolation {
            tau: w.tau,
            t: w.t,
            excess: w.excess,
        })
    } else {
        Ok(())
    }
}

/// Largest `s` in `[0, delta]` such that jamming `[k delta, k delta + s]` on top of
/// `history` keeps the duration budget for every window ending at `k delta + s`.
///
/// Minimizes the slack `kappa + rho (k delta - tau) - |jammed in [tau, k delta]|`
/// over the candidate starts `{0} + {attack starts} + {k delta}`.
pub fn aware_budget(history: &[Interval], budget: JamBudget, slot: u64, delta: f64) -> f64 {
    let now = slot as f64 * delta;
    let rho = budget.rho;
    let jammed_total: f64 = history
        .iter()
        .take_while(|iv| iv.start <= now)
        .map(|iv| iv.end().min(now) - iv.start)
        .sum();
    let g_now = rho * now - jammed_total;

    let mut g_max = 0.0f64.max(g_now);
    let mut jammed_before = 0.0;
    for iv in history.iter().take_while(|iv| iv.start <= now) {
        g_max = g_max.max(rho * iv.start - jammed_before);
        jammed_before += iv.end().min(now) - iv.start;
    }
    let slack = budget.kappa + g_now - g_max;
    (slack / (1.0 - rho)).clamp(0.0, delta)
}

/// Periodic attack: bursts of length `rho / sigma` at `a_k = (k + 1 - rho) / sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicAttack {
    pub rho: f64,
    pub sigma: f64,
}

impl PeriodicAttack {
    pub fn new(rho: f64, sigma: f64) -> Result<Self, AttackError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(AttackError::Rho(rho));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(AttackError::Sigma(sigma));
        }
        Ok(Self { rho, sigma })
    }

    pub fn interval(&self, k: u64) -> Interval {
        let start = k as f64 / self.sigma + (1.0 - self.rho) / self.sigma;
        Interval::new(start, self.rho / self.sigma)
    }

    /// Closed-form membership test, consistent with [`PeriodicAttack::interval`].
    pub fn is_jammed(&self, t: f64) -> bool {
        if t < 0.0 {
            return false;
        }
        let guess = (t * self.sigma - (1.0 - self.rho)).floor();
        let lo = (guess - 1.0).max(0.0) as u64;
        (lo..=lo + 2).any(|k| self.interval(k).contains(t))
    }

    /// All bursts starting no later than `horizon`.
    pub fn materialize(&self, horizon: f64) -> Vec<Interval> {
        (0u64..)
            .map(|k| self.interval(k))
            .take_while(|iv| iv.start <= horizon)
            .collect()
    }
}

/// Materialized periodic schedule up to `horizon`, declaring the budget
/// `(rho / sigma, rho)` that every such schedule satisfies.
pub fn periodic_schedule(
    rho: f64,
    sigma: f64,
    horizon: f64,
) -> Result<AttackIntervals, AttackError> {
    let p = PeriodicAttack::new(rho, sigma)?;
    AttackIntervals::new(
        p.materialize(horizon),
        Some(JamBudget::new(rho / sigma, rho)?),
    )
}

/// Attack fixed before the run, independent of the attempt times.
#[derive(Debug, Clone, PartialEq)]
pub enum DeterministicAttack {
    Intervals(AttackIntervals),
    Periodic(PeriodicAttack),
}

impl DeterministicAttack {
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

/// Events observed by the communication-aware attacker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AwareEvent {
    SlotStart(u64),
    SensedAttempt { time: f64, agent: usize },
    JamForcedEnd(u64),
}

/// Online communication-aware attacker.
///
/// In each slot `[k delta, (k + 1) delta)` it jams from `k delta` until the last
/// agent has attempted or until its budget `s_k` runs out, whichever is first.
#[derive(Debug, Clone)]
pub struct AwareAttacker {
    delta: f64,
    budget: JamBudget,
    n_agents: usize,
    history: Vec<Interval>,
    total_jammed: f64,
    g_max: f64,
    slot: Option<u64>,
    slot_budget: f64,
    /// Closed end of this slot's jam; `None` when not jamming in this slot.
    jam_end: Option<f64>,
    committed: bool,
    attempted: Vec<bool>,
    remaining: usize,
    last_time: f64,
}

impl AwareAttacker {
    pub fn new(delta: f64, budget: JamBudget, n_agents: usize) -> Result<Self, AttackError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(AttackError::Delta(delta));
        }
        Ok(Self {
            delta,
            budget,
            n_agents,
            history: Vec::new(),
            total_jammed: 0.0,
            g_max: 0.0,
            slot: None,
            slot_budget: 0.0,
            jam_end: None,
            committed: true,
            attempted: vec![false; n_agents],
            remaining: n_agents,
            last_time: 0.0,
        })
    }

    /// Attacker for a per-agent slot vector, which must be uniform.
    pub fn for_slots(deltas: &[f64], budget: JamBudget) -> Result<Self, AttackError> {
        let first = *deltas.first().ok_or(AttackError::NonuniformDelta)?;
        if deltas.iter().any(|&d| d != first) {
            return Err(AttackError::NonuniformDelta);
        }
        Self::new(first, budget, deltas.len())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn budget(&self) -> JamBudget {
        self.budget
    }

    pub fn slot_start(&self, k: u64) -> f64 {
        k as f64 * self.delta
    }

    /// Budget `s_k` of the current slot.
    pub fn slot_budget(&self) -> f64 {
        self.slot_budget
    }

    /// Planned closed end of the current jam, if jamming this slot.
    pub fn jam_end(&self) -> Option<f64> {
        self.jam_end
    }

    pub fn history(&self) -> &[Interval] {
        &self.history
    }

    /// Whether an attempt at `t` (inside the current slot) is blocked.
    pub fn is_jammed(&self, t: f64) -> bool {
        match (self.slot, self.jam_end) {
            (Some(k), Some(end)) => t >= self.slot_start(k) && t <= end,
            _ => false,
        }
    }

    pub fn step(&mut self, event: AwareEvent) -> Result<Option<Interval>, AttackError> {
        match event {
            AwareEvent::SlotStart(k) => self.start_slot(k).map(|_| None),
            AwareEvent::SensedAttempt { time, agent } => self.sense_attempt(time, agent),
            AwareEvent::JamForcedEnd(k) => Ok(self.force_end(k)),
        }
    }

    fn check_time(&mut self, t: f64) -> Result<(), AttackError> {
        if t < self.last_time {
            return Err(AttackError::OutOfOrderEvent(format!(
                "event at {t} after event at {}",
                self.last_time
            )));
        }
        self.last_time = t;
        Ok(())
    }

    fn commit(&mut self) -> Option<Interval> {
        if self.committed {
            return None;
        }
        self.committed = true;
        let k = self.slot?;
        let mut end = self.jam_end?;
        let next = self.slot_start(k + 1);
        if end >= next {
            // The next slot's jam starts at `next`; keep intervals disjoint.
            end = next.next_down();
        }
        let start = self.slot_start(k);
        let iv = Interval::new(start, end - start);
        self.jam_end = Some(end);
        self.total_jammed += iv.duration;
        self.history.push(iv);
        Some(iv)
    }

    /// Opens slot `k` and returns its budget `s_k`.
    pub fn start_slot(&mut self, k: u64) -> Result<f64, AttackError> {
        let expected = self.slot.map_or(0, |s| s + 1);
        if k != expected {
            return Err(AttackError::OutOfOrderEvent(format!(
                "slot {k} started, expected slot {expected}"
            )));
        }
        let now = self.slot_start(k);
        self.check_time(now)?;
        self.commit();

        let g_now = self.budget.rho * now - self.total_jammed;
        self.g_max = self.g_max.max(g_now);
        let slack = self.budget.kappa + g_now - self.g_max;
        let s = (slack / (1.0 - self.budget.rho)).clamp(0.0, self.delta);

        self.slot = Some(k);
        self.slot_budget = s;
        self.jam_end = (s > 0.0).then_some(now + s);
        self.committed = self.jam_end.is_none();
        self.attempted.fill(false);
        self.remaining = self.n_agents;
        Ok(s)
    }

    /// Records an attempt. Once every agent has attempted within the jam, the
    /// jam ends at that attempt (which is itself blocked).
    pub fn sense_attempt(
        &mut self,
        time: f64,
        agent: usize,
    ) -> Result<Option<Interval>, AttackError> {
        let k = self
            .slot
            .ok_or_else(|| AttackError::OutOfOrderEvent("attempt before first slot".into()))?;
        if time < self.slot_start(k) || time >= self.slot_start(k + 1) {
            return Err(AttackError::OutOfOrderEvent(format!(
                "attempt at {time} outside slot {k}"
            )));
        }
        if agent >= self.n_agents || self.attempted[agent] {
            return Err(AttackError::OutOfOrderEvent(format!(
                "agent {agent} attempted twice in slot {k}"
            )));
        }
        self.check_time(time)?;
        self.attempted[agent] = true;
        self.remaining -= 1;

        let mut out = None;
        if let Some(end) = self.jam_end {
            if !self.committed && time > end {
                out = self.commit();
            } else if !self.committed && self.remaining == 0 {
                self.jam_end = Some(time);
                out = self.commit();
            }
        }
        Ok(out)
    }

    /// Budget exhausted in slot `k`: commits the jam if still open.
    pub fn force_end(&mut self, k: u64) -> Option<Interval> {
        if self.slot == Some(k) {
            if let Some(end) = self.jam_end {
                self.last_time = self.last_time.max(end);
            }
            self.commit()
        } else {
            None
        }
    }

    /// Commits any open jam and returns the full history.
    pub fn finish(mut self) -> Vec<Interval> {
        self.commit();
        self.history
    }
}
