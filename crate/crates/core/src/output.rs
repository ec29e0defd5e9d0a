//! CSV and JSON artifacts.
//!
//! Floats in CSV files use 17 significant digits so identical runs give
//! byte-identical files.

use std::io::{self, Write};

use serde::Serialize;

use crate::analysis::McSummary;
use crate::config::SweepCell;
use crate::engine::{ConsensusTimes, RunConfig, Trajectory};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per breakpoint: `t, x0..x{n-1}, u0..u{n-1}`.
pub fn write_trajectory_csv<W: Write>(w: &mut W, tr: &Trajectory) -> io::Result<()> {
    let n = tr.n();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("u{i}")));
    writeln!(w, "{}", header.join(","))?;
    for m in 0..tr.len() {
        let mut row = vec![fmt_f64(tr.time(m))];
        row.extend(tr.state(m).iter().map(|&v| fmt_f64(v)));
        row.extend(tr.input(m).iter().map(|u| u.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// `agent, slot, time, phi, ave`; `ave` is empty for blocked attempts.
pub fn write_attempts_csv<W: Write>(w: &mut W, tr: &Trajectory) -> io::Result<()> {
    writeln!(w, "agent,slot,time,phi,ave")?;
    for a in tr.attempts() {
        writeln!(
            w,
            "{},{},{},{},{}",
            a.agent,
            a.slot,
            fmt_f64(a.time),
            u8::from(a.success),
            fmt_opt(a.ave)
        )?;
    }
    Ok(())
}

pub fn write_intervals_csv<W: Write>(w: &mut W, tr: &Trajectory) -> io::Result<()> {
    writeln!(w, "start,duration")?;
    for iv in tr.attack().intervals_until(tr.horizon()) {
        writeln!(w, "{},{}", fmt_f64(iv.start), fmt_f64(iv.duration))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsSummary {
    pub n: usize,
    pub delta: Vec<f64>,
    pub hold: Vec<f64>,
    pub epsilon: f64,
    pub horizon: f64,
    pub kappa: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub first_entry: Option<f64>,
    pub settling: Option<f64>,
    pub num_events: u64,
    pub seed: u64,
    pub attack_kind: String,
    pub quiescent_at: Option<f64>,
    pub attempts: usize,
    pub blocked: usize,
    pub params: ParamsSummary,
}

impl RunSummary {
    pub fn new(cfg: &RunConfig, tr: &Trajectory, times: ConsensusTimes) -> Self {
        let budget = cfg.attack.budget();
        Self {
            first_entry: times.first_entry,
            settling: times.settling,
            num_events: tr.num_events(),
            seed: cfg.seed,
            attack_kind: cfg.attack.kind().to_string(),
            quiescent_at: tr.quiescent_at(),
            attempts: tr.attempts().len(),
            blocked: tr.attempts().iter().filter(|a| !a.success).count(),
            params: ParamsSummary {
                n: cfg.graph.n(),
                delta: cfg.params.delta.clone(),
                hold: cfg.params.hold.clone(),
                epsilon: cfg.params.epsilon,
                horizon: cfg.horizon,
                kappa: budget.map(|b| b.kappa),
                rho: budget.map(|b| b.rho),
            },
        }
    }
}

pub fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

/// `seed, first_entry, settling`.
pub fn write_montecarlo_csv<W: Write>(
    w: &mut W,
    seeds: &[u64],
    times: &[ConsensusTimes],
) -> io::Result<()> {
    writeln!(w, "seed,first_entry,settling")?;
    for (seed, t) in seeds.iter().zip(times) {
        writeln!(
            w,
            "{seed},{},{}",
            fmt_opt(t.first_entry),
            fmt_opt(t.settling)
        )?;
    }
    Ok(())
}

/// `rho, sigma, kappa, m_C, s_C, runs, unsettled`; unused axes and undefined statistics are empty.
pub fn write_sweep_csv<W: Write>(
    w: &mut W,
    rows: &[(SweepCell, Result<McSummary, usize>)],
) -> io::Result<()> {
    writeln!(w, "rho,sigma,kappa,m_C,s_C,runs,unsettled")?;
    for (cell, summary) in rows {
        let (m, s, runs, unsettled) = match summary {
            Ok(s) => (Some(s.mean), s.std_dev, s.runs, s.unsettled),
            Err(runs) => (None, None, *runs, *runs),
        };
        writeln!(
            w,
            "{},{},{},{},{},{runs},{unsettled}",
            fmt_opt(cell.rho),
            fmt_opt(cell.sigma),
            fmt_opt(cell.kappa),
            fmt_opt(m),
            fmt_opt(s),
        )?;
    }
    Ok(())
}
