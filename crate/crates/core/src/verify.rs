//! Invariant checks over stored trajectories and a fixed-step integrator oracle.

use serde::Serialize;

use crate::attacks::{check_assumption1, JamBudget};
use crate::engine::{consensus_times, Trajectory};
use crate::graph::Graph;

/// Per-step slack for `V(x(t_{m+1})) <= V(x(t_m))`.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-9;
/// Rounding slack for `|x_i(t_{m+1}) - x_i(t_m)| <= t_{m+1} - t_m`.
pub const SPEED_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Violation {
    pub agent: usize,
    pub slot: u64,
    pub attempt_time: f64,
    /// Breakpoint time at which `|u| != 1`.
    pub at: f64,
}

/// After every successful attempt with `|ave| >= eps`, `|u_i| = 1` on `[t_k, t_k + T_i)`.
///
/// Returns the number of qualifying attempts.
pub fn lemma1_check(tr: &Trajectory) -> Result<usize, Lemma1Violation> {
    let eps = tr.epsilon();
    let times = tr.times();
    let mut qualifying = 0;
    for rec in tr.attempts() {
        let Some(ave) = rec.ave else { continue };
        if ave.abs() < eps {
            continue;
        }
        qualifying += 1;
        let end = rec.time + tr.hold()[rec.agent];
        let first = times.partition_point(|&s| s <= rec.time) - 1;
        for m in first..tr.len() {
            if times[m] >= end {
                break;
            }
            if tr.input(m)[rec.agent].abs() != 1 {
                return Err(Lemma1Violation {
                    agent: rec.agent,
                    slot: rec.slot,
                    attempt_time: rec.time,
                    at: times[m],
                });
            }
        }
    }
    Ok(qualifying)
}

/// Largest step increase of `V` across consecutive breakpoints.
pub fn max_lyapunov_increase(tr: &Trajectory, graph: &Graph) -> f64 {
    let mut prev = graph.disagreement(tr.state(0));
    let mut worst = f64::NEG_INFINITY;
    for m in 1..tr.len() {
        let v = graph.disagreement(tr.state(m));
        worst = worst.max(v - prev);
        prev = v;
    }
    worst
}

/// Largest `|x_i(t_{m+1}) - x_i(t_m)| - (t_{m+1} - t_m)` over all agents and steps.
pub fn max_speed_excess(tr: &Trajectory) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for m in 1..tr.len() {
        let dt = tr.time(m) - tr.time(m - 1);
        for (a, b) in tr.state(m - 1).iter().zip(tr.state(m)) {
            worst = worst.max((b - a).abs() - dt);
        }
    }
    worst
}

/// Checks that the run settles and that `max_i |ave^i| < eps` on every
/// breakpoint after the settling time. `|ave^i|` is convex on each segment, so
/// the segment right endpoints cover every instant after settling.
pub fn stays_in_consensus(tr: &Trajectory, graph: &Graph) -> Result<f64, String> {
    let eps = tr.epsilon();
    let settling = consensus_times(tr, graph, eps)
        .settling
        .ok_or_else(|| "state is outside the consensus set at the horizon".to_string())?;
    for m in 0..tr.len() {
        if tr.time(m) > settling && !graph.in_consensus_set(tr.state(m), eps) {
            return Err(format!(
                "outside the consensus set at t = {} after settling at {settling}",
                tr.time(m)
            ));
        }
    }
    Ok(settling)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    pub step: f64,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub compared_points: usize,
}

impl OracleComparison {
    pub fn pass(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

/// Re-integrates the closed loop with explicit fixed steps of size `h` over
/// the trajectory's realized schedule and attacks, and compares against the
/// stored breakpoints.
///
/// Attempts are handled at the first grid point at or after their time. The
/// oracle evaluates `ave` from its own state; when that value lies within its
/// own accumulated error of the deadband edge it takes the deadband decision
/// from the logged exact value instead, so grid lag cannot flip a borderline
/// decision.
pub fn integrator_oracle(tr: &Trajectory, graph: &Graph, h: f64) -> OracleComparison {
    let n = tr.n();
    let eps = tr.epsilon();
    let end = tr.event_end();
    let schedule = tr.schedule();

    let mut queue: Vec<(f64, usize, u64)> = (0..n)
        .flat_map(|i| {
            schedule
                .agent_times(i)
                .iter()
                .enumerate()
                .map(move |(k, &t)| (t, i, k as u64))
        })
        .filter(|&(t, _, _)| t <= end)
        .collect();
    queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let logged: std::collections::HashMap<(usize, u64), Option<f64>> = tr
        .attempts()
        .iter()
        .map(|r| ((r.agent, r.slot), r.ave))
        .collect();

    let mut x = tr.state(0).to_vec();
    let mut t_prev = vec![f64::NEG_INFINITY; n];
    let mut cand_prev = vec![0i8; n];
    let mut uhat = vec![0i8; n];
    let mut start = vec![0.0f64; n];
    let mut until = vec![f64::NEG_INFINITY; n];
    let mut next = 0;
    let mut events = 0usize;

    let bps = tr.times();
    let mut bp = 0;
    let mut max_dev: f64 = 0.0;
    let mut compared = 0;
    let steps = (end / h).ceil() as u64;

    for s in 0..=steps {
        let tau = s as f64 * h;
        while next < queue.len() && queue[next].0 <= tau {
            let (t, i, k) = queue[next];
            next += 1;
            events += 1;
            let success = !tr.attack().is_jammed(t);
            let cand: i8 = if success {
                let own: f64 = graph
                    .neighbors(i)
                    .expect("agent in graph")
                    .iter()
                    .map(|&j| x[j] - x[i])
                    .sum();
                let band = 2.0 * graph.max_degree() as f64 * (events as f64 + 1.0) * h;
                let z = match logged.get(&(i, k)) {
                    Some(Some(exact)) if (own.abs() - eps).abs() <= band => *exact,
                    _ => own,
                };
                if z >= eps {
                    1
                } else if z <= -eps {
                    -1
                } else {
                    0
                }
            } else {
                0
            };
            if cand != 0 || t_prev[i] == f64::NEG_INFINITY {
                uhat[i] = cand;
                until[i] = t + tr.hold()[i];
            } else if t < t_prev[i] + tr.hold()[i] {
                uhat[i] = cand_prev[i];
                until[i] = t_prev[i] + tr.hold()[i];
            } else {
                uhat[i] = 0;
                until[i] = t + tr.hold()[i];
            }
            start[i] = t;
            t_prev[i] = t;
            cand_prev[i] = cand;
        }

        // Compare at grid points that follow a breakpoint.
        let mut touched = false;
        while bp < bps.len() && bps[bp] <= tau {
            bp += 1;
            touched = true;
        }
        if touched {
            let exact = tr.state_at(tau.min(tr.horizon()));
            let dev = exact
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            max_dev = max_dev.max(dev);
            compared += 1;
        }

        for i in 0..n {
            if tau >= start[i] && tau < until[i] {
                x[i] += f64::from(uhat[i]) * h;
            }
        }
    }

    OracleComparison {
        step: h,
        max_deviation: max_dev,
        tolerance: tr.num_events() as f64 * h,
        compared_points: compared,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Declared budget of the attack, checked on the realized history.
    pub budget: Option<JamBudget>,
    /// Whether the run is expected to settle within its horizon.
    pub expect_consensus: bool,
    /// Step of the integrator oracle; `None` skips it.
    pub integrator_step: Option<f64>,
}

/// Runs every applicable check on one trajectory.
pub fn verify_trajectory(tr: &Trajectory, graph: &Graph, opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(match lemma1_check(tr) {
        Ok(count) => CheckResult::new("lemma1_hold", true, format!("{count} qualifying attempts")),
        Err(v) => CheckResult::new(
            "lemma1_hold",
            false,
            format!(
                "agent {} slot {} (t = {}): |u| != 1 at {}",
                v.agent, v.slot, v.attempt_time, v.at
            ),
        ),
    });
    let dv = max_lyapunov_increase(tr, graph);
    out.push(CheckResult::new(
        "lyapunov_monotone",
        dv <= LYAPUNOV_TOLERANCE,
        format!("max step increase {dv:e}"),
    ));
    let ds = max_speed_excess(tr);
    out.push(CheckResult::new(
        "speed_bound",
        ds <= SPEED_TOLERANCE,
        format!("max excess {ds:e}"),
    ));
    if opts.expect_consensus {
        out.push(match stays_in_consensus(tr, graph) {
            Ok(s) => CheckResult::new("finite_time_consensus", true, format!("settled at {s}")),
            Err(e) => CheckResult::new("finite_time_consensus", false, e),
        });
    }
    if let Some(budget) = opts.budget {
        let intervals = tr.attack().intervals_until(tr.horizon());
        out.push(match check_assumption1(&intervals, budget, tr.horizon()) {
            Ok(()) => CheckResult::new(
                "attack_budget",
                true,
                format!(
                    "{} intervals within (kappa = {}, rho = {})",
                    intervals.len(),
                    budget.kappa,
                    budget.rho
                ),
            ),
            Err(v) => CheckResult::new("attack_budget", false, v.to_string()),
        });
    }
    if let Some(h) = opts.integrator_step {
        let cmp = integrator_oracle(tr, graph, h);
        out.push(CheckResult::new(
            "integrator_oracle",
            cmp.pass(),
            format!(
                "max deviation {:e} vs tolerance {:e} over {} points",
                cmp.max_deviation, cmp.tolerance, cmp.compared_points
            ),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AttackIntervals, DeterministicAttack, PeriodicAttack};
    use crate::engine::{simulate, AttackModel, RunConfig};
    use crate::schedule::ProtocolParams;

    fn ring_config(attack: AttackModel, horizon: f64) -> RunConfig {
        let graph = Graph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        RunConfig {
            graph,
            params: ProtocolParams::uniform(4, 0.002, 1.01, 0.02),
            x0: vec![0.0, 0.4, 0.9, 0.2],
            attack,
            horizon,
            seed: 11,
            stop_at_quiescence: false,
        }
    }

    #[test]
    fn clean_run_passes_everything() {
        let attack = AttackModel::Deterministic {
            attack: DeterministicAttack::Periodic(PeriodicAttack::new(0.5, 10.0).unwrap()),
            budget: None,
        };
        let cfg = ring_config(attack, 4.0);
        let tr = simulate(&cfg).unwrap();
        let opts = VerifyOptions {
            budget: Some(crate::attacks::JamBudget::new(0.05, 0.5).unwrap()),
            expect_consensus: true,
            integrator_step: Some(1e-6),
        };
        for c in verify_trajectory(&tr, &cfg.graph, &opts) {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn budget_violation_is_reported() {
        let blanket = AttackIntervals::from_pairs(&[(0.5, 2.0)], None).unwrap();
        let cfg = ring_config(
            AttackModel::Deterministic {
                attack: DeterministicAttack::Intervals(blanket),
                budget: None,
            },
            3.0,
        );
        let tr = simulate(&cfg).unwrap();
        let opts = VerifyOptions {
            budget: Some(crate::attacks::JamBudget::new(0.2, 0.5).unwrap()),
            expect_consensus: false,
            integrator_step: None,
        };
        let checks = verify_trajectory(&tr, &cfg.graph, &opts);
        let budget = checks.iter().find(|c| c.name == "attack_budget").unwrap();
        assert!(!budget.pass);
        assert!(budget.detail.contains("[0.5, 2.5]"), "{}", budget.detail);
    }

    #[test]
    fn oracle_detects_a_tampered_trajectory() {
        let cfg = ring_config(AttackModel::None, 2.0);
        let mut tr = simulate(&cfg).unwrap();
        let clean = integrator_oracle(&tr, &cfg.graph, 1e-5);
        assert!(clean.pass(), "{clean:?}");
        tr = tamper(tr);
        assert!(!integrator_oracle(&tr, &cfg.graph, 1e-5).pass());
    }

    fn tamper(tr: Trajectory) -> Trajectory {
        // Shift the last stored state by a large amount via the test-only setter.
        let mut tr = tr;
        tr.perturb_last_state(0.5);
        tr
    }
}
