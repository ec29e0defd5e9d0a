//! Analytical bounds under the communication-aware attacker and Monte Carlo
//! statistics over seeded runs.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::engine::{auto_horizon, consensus_times, simulate, RunConfig, SimError, Trajectory};
use crate::parallel::{map_ordered, Execution};
use crate::schedule::uniform_initial_state;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("none of the {runs} runs settled")]
    AllRunsUnsettled { runs: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Block-level quantities for the budget `(kappa, rho)` and slot length `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub kappa: f64,
    pub rho: f64,
    pub delta: f64,
    /// Longest continuous jam `kappa / (1 - rho)`.
    pub delta_low: f64,
    /// Smallest `k` with `k delta > delta_low`.
    pub gamma: u64,
    pub delta_hat: f64,
    pub delta_tilde: f64,
    pub q: f64,
}

impl BoundParams {
    pub fn new(kappa: f64, rho: f64, delta: f64) -> Result<Self, AnalysisError> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(AnalysisError::Domain(format!(
                "kappa must be >= 0, got {kappa}"
            )));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(AnalysisError::Domain(format!(
                "rho must be in (0, 1), got {rho}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(AnalysisError::Domain(format!(
                "delta must be > 0, got {delta}"
            )));
        }
        let delta_low = kappa / (1.0 - rho);
        let mut gamma = ((delta_low / delta).floor() as u64).max(1);
        while gamma > 1 && (gamma - 1) as f64 * delta > delta_low {
            gamma -= 1;
        }
        while gamma as f64 * delta <= delta_low {
            gamma += 1;
        }
        let delta_hat = gamma as f64 * delta;
        let delta_tilde = (1.0 - rho) * (delta_hat - delta_low) / (gamma + 1) as f64;
        Ok(Self {
            kappa,
            rho,
            delta,
            delta_low,
            gamma,
            delta_hat,
            delta_tilde,
            q: delta_tilde / delta,
        })
    }

    /// `ln(2 q^gamma)`; finite even where the bound underflows.
    pub fn ln_block_bound(&self) -> f64 {
        std::f64::consts::LN_2 + self.gamma as f64 * self.q.ln()
    }

    /// Lower bound `2 q^gamma` on the per-block success probability.
    pub fn block_bound(&self) -> f64 {
        if self.gamma == 1 {
            2.0 * self.q
        } else {
            self.ln_block_bound().exp()
        }
    }
}

/// Block success indicators: block `k` succeeds if any of its `gamma` slots did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiHat {
    pub blocks: Vec<bool>,
    /// Slots in the trailing partial block, which is dropped.
    pub dropped: usize,
}

pub fn phi_hat_series(phi: &[bool], gamma: u64) -> Result<PhiHat, AnalysisError> {
    if gamma == 0 {
        return Err(AnalysisError::Domain("gamma must be >= 1".into()));
    }
    let g = gamma as usize;
    let chunks = phi.chunks_exact(g);
    let dropped = chunks.remainder().len();
    Ok(PhiHat {
        blocks: chunks.map(|c| c.iter().any(|&s| s)).collect(),
        dropped,
    })
}

/// Lower bound on `P[sum_{k < n} phi_hat_k >= m]`:
/// `1 - sum_{j < m} C(n, j) (1 - 2 q^gamma)^(n - j)`. Not clamped; it can be negative.
pub fn prop3_lower_bound(n: u64, m: u64, q: f64, gamma: u64) -> Result<f64, AnalysisError> {
    if m > n {
        return Err(AnalysisError::Domain(format!(
            "need m <= n, got m = {m}, n = {n}"
        )));
    }
    if !(q > 0.0 && q < 1.0) || gamma == 0 {
        return Err(AnalysisError::Domain(format!(
            "need q in (0, 1) and gamma >= 1, got q = {q}, gamma = {gamma}"
        )));
    }
    if m == 0 {
        return Ok(1.0);
    }
    let p = if gamma == 1 {
        2.0 * q
    } else {
        (std::f64::consts::LN_2 + gamma as f64 * q.ln()).exp()
    };
    if p > 1.0 {
        return Err(AnalysisError::Domain(format!("2 q^gamma = {p} exceeds 1")));
    }
    if p == 1.0 {
        // Every term has a positive power of 1 - p = 0.
        return Ok(1.0);
    }
    if n == 1 {
        // 1 - (1 - p) without the rounding of the subtraction.
        return Ok(p);
    }
    let ln_miss = (-p).ln_1p();
    // j = 0 term folded in as 1 - (1 - p)^n for accuracy when p is tiny.
    let mut value = -(n as f64 * ln_miss).exp_m1();
    for j in 1..m {
        value -= (ln_binomial(n, j) + (n - j) as f64 * ln_miss).exp();
    }
    Ok(value)
}

/// Per-agent comparison of the block success frequency with `2 q^gamma`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockFrequency {
    pub agent: usize,
    pub blocks: usize,
    pub successes: usize,
    pub frequency: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `frequency >= bound - 3 std_error`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub n_blocks: u64,
    pub m: u64,
    /// Number of (run, agent) samples with at least `n_blocks` blocks.
    pub samples: usize,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub params: BoundParams,
    pub per_agent: Vec<BlockFrequency>,
    pub tails: Vec<TailCheck>,
}

impl BoundReport {
    pub fn pass(&self) -> bool {
        self.per_agent.iter().all(|a| a.pass) && self.tails.iter().all(|t| t.pass)
    }
}

/// Compares observed block successes with the analytical bounds.
///
/// `runs[r][i]` is agent `i`'s per-slot success series in run `r`. Each
/// `(n, m)` in `tails` compares the fraction of (run, agent) samples with at
/// least `m` successful blocks among the first `n` with `prop3_lower_bound`.
pub fn empirical_bound_check(
    runs: &[Vec<Vec<bool>>],
    params: &BoundParams,
    tails: &[(u64, u64)],
    min_blocks: usize,
) -> Result<BoundReport, AnalysisError> {
    let n_agents = runs.first().map_or(0, Vec::len);
    if runs.iter().any(|r| r.len() != n_agents) {
        return Err(AnalysisError::Domain("runs disagree on agent count".into()));
    }
    let bound = params.block_bound();
    let mut blocks_by_run = Vec::with_capacity(runs.len());
    for run in runs {
        let per_agent = run
            .iter()
            .map(|phi| phi_hat_series(phi, params.gamma).map(|p| p.blocks))
            .collect::<Result<Vec<_>, _>>()?;
        blocks_by_run.push(per_agent);
    }

    let mut per_agent = Vec::with_capacity(n_agents);
    for agent in 0..n_agents {
        let (blocks, successes) = blocks_by_run.iter().fold((0, 0), |(b, s), run| {
            let series = &run[agent];
            (b + series.len(), s + series.iter().filter(|&&v| v).count())
        });
        if blocks < min_blocks {
            return Err(AnalysisError::InsufficientSamples {
                need: min_blocks,
                got: blocks,
            });
        }
        let frequency = successes as f64 / blocks as f64;
        let std_error = (frequency * (1.0 - frequency) / blocks as f64).sqrt();
        per_agent.push(BlockFrequency {
            agent,
            blocks,
            successes,
            frequency,
            std_error,
            bound,
            pass: frequency >= bound - 3.0 * std_error,
        });
    }

    let mut tail_checks = Vec::with_capacity(tails.len());
    for &(n, m) in tails {
        let mut samples = 0;
        let mut hits = 0;
        for series in blocks_by_run.iter().flatten() {
            if series.len() as u64 >= n {
                samples += 1;
                let count = series[..n as usize].iter().filter(|&&v| v).count() as u64;
                if count >= m {
                    hits += 1;
                }
            }
        }
        if samples == 0 {
            return Err(AnalysisError::InsufficientSamples { need: 1, got: 0 });
        }
        let empirical = hits as f64 / samples as f64;
        let lower = prop3_lower_bound(n, m, params.q, params.gamma)?;
        tail_checks.push(TailCheck {
            n_blocks: n,
            m,
            samples,
            empirical,
            bound: lower,
            pass: empirical >= lower,
        });
    }

    Ok(BoundReport {
        params: *params,
        per_agent,
        tails: tail_checks,
    })
}

/// How the initial state of each run is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(Vec<f64>),
    /// Uniform in `[low, high)^n`, drawn from each run's own seed.
    PerSeed {
        low: f64,
        high: f64,
    },
}

/// A run configuration minus the per-seed parts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTemplate {
    /// `base.x0` and `base.seed` are replaced per run.
    pub base: RunConfig,
    pub x0: InitialState,
    /// Pick the horizon per run from a pilot (see [`auto_horizon`]).
    pub auto_horizon: bool,
}

/// Doubling pilot horizons start here and stop at the cap.
pub const AUTO_HORIZON_START: f64 = 10.0;
pub const AUTO_HORIZON_CAP: f64 = 10_240.0;

impl RunTemplate {
    pub fn fixed(base: RunConfig) -> Self {
        let x0 = InitialState::Fixed(base.x0.clone());
        Self {
            base,
            x0,
            auto_horizon: false,
        }
    }

    pub fn instantiate(&self, seed: u64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        cfg.x0 = match &self.x0 {
            InitialState::Fixed(x) => x.clone(),
            InitialState::PerSeed { low, high } => {
                uniform_initial_state(seed, cfg.graph.n(), *low, *high)
            }
        };
        if self.auto_horizon {
            if let Some(h) = auto_horizon(&cfg, AUTO_HORIZON_START, AUTO_HORIZON_CAP, 1.0) {
                cfg.horizon = h;
            } else {
                cfg.horizon = AUTO_HORIZON_CAP;
            }
        }
        cfg
    }

    pub fn run(&self, seed: u64) -> Result<Trajectory, SimError> {
        simulate(&self.instantiate(seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMetric {
    #[default]
    Settling,
    FirstEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub metric: TimeMetric,
    /// Per-seed consensus time, in seed order; `None` if the run never settled.
    pub times: Vec<Option<f64>>,
    pub mean: f64,
    /// Sample (n - 1) standard deviation; `None` with fewer than two settled runs.
    pub std_dev: Option<f64>,
    pub runs: usize,
    pub unsettled: usize,
}

impl McSummary {
    pub fn from_times(metric: TimeMetric, times: Vec<Option<f64>>) -> Result<Self, AnalysisError> {
        // Sorted before summation so the statistics do not depend on seed order.
        let mut settled: Vec<f64> = times.iter().flatten().copied().collect();
        settled.sort_by(f64::total_cmp);
        if settled.is_empty() {
            return Err(AnalysisError::AllRunsUnsettled { runs: times.len() });
        }
        let k = settled.len() as f64;
        let mean = settled.iter().sum::<f64>() / k;
        let std_dev = (settled.len() >= 2).then(|| {
            let ss: f64 = settled.iter().map(|t| (t - mean).powi(2)).sum();
            (ss / (k - 1.0)).sqrt()
        });
        Ok(Self {
            metric,
            runs: times.len(),
            unsettled: times.len() - settled.len(),
            times,
            mean,
            std_dev,
        })
    }
}

/// Runs the template once per seed and summarizes the consensus times.
pub fn monte_carlo(
    template: &RunTemplate,
    seeds: &[u64],
    exec: Execution,
    metric: TimeMetric,
) -> Result<McSummary, AnalysisError> {
    if seeds.len() < 2 {
        return Err(AnalysisError::InsufficientSamples {
            need: 2,
            got: seeds.len(),
        });
    }
    let eps = template.base.params.epsilon;
    let results = map_ordered(exec, seeds, |&seed| {
        let tr = template.run(seed)?;
        let ct = consensus_times(&tr, &template.base.graph, eps);
        Ok::<_, SimError>(match metric {
            TimeMetric::Settling => ct.settling,
            TimeMetric::FirstEntry => ct.first_entry,
        })
    });
    let times = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    McSummary::from_times(metric, times)
}
