//! JSON experiment configs.
//!
//! One document describes one experiment: topology, protocol parameters,
//! initial state, attack, horizon, seeds and optional sweep axes. Unknown keys
//! are rejected, and parse errors name the offending key path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{InitialState, RunTemplate, TimeMetric};
use crate::attacks::{
    AttackError, AttackIntervals, DeterministicAttack, JamBudget, PeriodicAttack,
};
use crate::engine::{AttackModel, RunConfig};
use crate::graph::{Graph, GraphError, GraphSpec};
use crate::schedule::{uniform_initial_state, ParamViolation, ProtocolParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("invalid protocol parameters: {0}")]
    Params(#[from] ParamViolation),
    #[error("invalid attack: {0}")]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerAgent {
    fn expand(&self, n: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            Self::Scalar(v) => Ok(vec![*v; n]),
            Self::List(v) if v.len() == n => Ok(v.clone()),
            Self::List(v) => Err(ConfigError::Invalid(format!(
                "protocol.{key} has {} entries for {n} agents",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HoldSpec {
    Values(PerAgent),
    /// `hold_i = delta_i / delta_over`.
    Ratio {
        delta_over: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub delta: PerAgent,
    pub hold: HoldSpec,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Explicit(Vec<f64>),
    Drawn(DrawnInitial),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawnInitial {
    #[serde(default)]
    pub low: Option<f64>,
    #[serde(default)]
    pub high: Option<f64>,
    /// Fixed seed shared by every run; absent means each run draws from its own seed.
    #[serde(default)]
    pub uniform_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttackSpec {
    None,
    Explicit {
        /// `[start, duration]` pairs.
        intervals: Vec<[f64; 2]>,
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        rho: Option<f64>,
    },
    Periodic {
        rho: f64,
        sigma: f64,
        /// Declared budget; defaults to `rho / sigma`.
        #[serde(default)]
        kappa: Option<f64>,
    },
    Aware {
        kappa: f64,
        rho: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonSpec {
    Seconds(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedsSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedsSpec {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, count } => (0..*count).map(|k| start + k).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Step of the fixed-step integrator oracle; absent skips it.
    #[serde(default)]
    pub integrator_step: Option<f64>,
    #[serde(default = "default_true")]
    pub expect_consensus: bool,
    /// Block-success bound check; aware attacks only.
    #[serde(default)]
    pub block_bound: Option<BlockBoundSpec>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            integrator_step: None,
            expect_consensus: true,
            block_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockBoundSpec {
    /// `[n_blocks, m]` pairs for the tail bound.
    #[serde(default)]
    pub tails: Vec<[u64; 2]>,
    #[serde(default)]
    pub min_blocks: usize,
}

fn default_true() -> bool {
    true
}

fn default_horizon() -> HorizonSpec {
    HorizonSpec::Auto(AutoKeyword::Auto)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub graph: GraphSpec,
    pub protocol: ProtocolSpec,
    pub x0: InitialSpec,
    pub attack: AttackSpec,
    #[serde(default = "default_horizon")]
    pub horizon: HorizonSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<SeedsSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_true")]
    pub stop_at_quiescence: bool,
    #[serde(default)]
    pub metric: TimeMetric,
    #[serde(default)]
    pub verify: VerifySpec,
}

/// One sweep cell: attack parameters overriding the base attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub kappa: Option<f64>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub template: RunTemplate,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn budget_from(kappa: Option<f64>, rho: Option<f64>) -> Result<Option<JamBudget>, ConfigError> {
    match (kappa, rho) {
        (None, None) => Ok(None),
        (Some(k), Some(r)) => Ok(Some(JamBudget::new(k, r)?)),
        _ => Err(ConfigError::Invalid(
            "attack: kappa and rho must be given together".into(),
        )),
    }
}

impl AttackSpec {
    pub fn to_model(&self) -> Result<AttackModel, ConfigError> {
        Ok(match self {
            Self::None => AttackModel::None,
            Self::Explicit {
                intervals,
                kappa,
                rho,
            } => {
                let budget = budget_from(*kappa, *rho)?;
                let pairs: Vec<(f64, f64)> = intervals.iter().map(|p| (p[0], p[1])).collect();
                AttackModel::Deterministic {
                    attack: DeterministicAttack::Intervals(AttackIntervals::from_pairs(
                        &pairs, budget,
                    )?),
                    budget,
                }
            }
            Self::Periodic { rho, sigma, kappa } => {
                let attack = PeriodicAttack::new(*rho, *sigma)?;
                let budget = JamBudget::new(kappa.unwrap_or(rho / sigma), *rho)?;
                AttackModel::Deterministic {
                    attack: DeterministicAttack::Periodic(attack),
                    budget: Some(budget),
                }
            }
            Self::Aware { kappa, rho } => AttackModel::Aware(JamBudget::new(*kappa, *rho)?),
        })
    }

    /// Copy with sweep overrides applied.
    pub fn with_cell(&self, cell: &SweepCell) -> Result<Self, ConfigError> {
        match self.clone() {
            Self::Periodic { rho, sigma, kappa } => Ok(Self::Periodic {
                rho: cell.rho.unwrap_or(rho),
                sigma: cell.sigma.unwrap_or(sigma),
                kappa: cell.kappa.or(kappa),
            }),
            Self::Aware { kappa, rho } => {
                if cell.sigma.is_some() {
                    return Err(ConfigError::Invalid(
                        "sweep.sigma only applies to periodic attacks".into(),
                    ));
                }
                Ok(Self::Aware {
                    kappa: cell.kappa.unwrap_or(kappa),
                    rho: cell.rho.unwrap_or(rho),
                })
            }
            _ => Err(ConfigError::Invalid(
                "sweeps need a periodic or aware attack".into(),
            )),
        }
    }
}

impl SweepSpec {
    /// Cartesian product in (rho, sigma, kappa) order; absent axes are not varied.
    pub fn cells(&self) -> Result<Vec<SweepCell>, ConfigError> {
        let mut axes: Vec<(&str, Vec<Option<f64>>)> = Vec::new();
        for (name, axis) in [
            ("rho", &self.rho),
            ("sigma", &self.sigma),
            ("kappa", &self.kappa),
        ] {
            match axis {
                None => axes.push((name, vec![None])),
                Some(v) if v.is_empty() => {
                    return Err(ConfigError::Invalid(format!("sweep.{name} is empty")))
                }
                Some(v) => axes.push((name, v.iter().copied().map(Some).collect())),
            }
        }
        if axes.iter().all(|(_, v)| v == &[None]) {
            return Err(ConfigError::Invalid("sweep declares no axis".into()));
        }
        let mut cells = Vec::new();
        for &rho in &axes[0].1 {
            for &sigma in &axes[1].1 {
                for &kappa in &axes[2].1 {
                    cells.push(SweepCell { rho, sigma, kappa });
                }
            }
        }
        Ok(cells)
    }
}

impl Experiment {
    pub fn from_spec(spec: ExperimentSpec) -> Result<Self, ConfigError> {
        let template = build_template(&spec, &spec.attack)?;
        let seeds = spec
            .seeds
            .as_ref()
            .map_or_else(|| vec![spec.seed], SeedsSpec::expand);
        if seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds is empty".into()));
        }
        if let Some(sweep) = &spec.sweep {
            for cell in sweep.cells()? {
                spec.attack.with_cell(&cell)?.to_model()?;
            }
        }
        Ok(Self {
            spec,
            template,
            seeds,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_spec(ExperimentSpec::from_path(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::from_spec(ExperimentSpec::from_json(text)?)
    }

    pub fn graph(&self) -> &Graph {
        &self.template.base.graph
    }

    /// Template for one sweep cell.
    pub fn cell_template(&self, cell: &SweepCell) -> Result<RunTemplate, ConfigError> {
        build_template(&self.spec, &self.spec.attack.with_cell(cell)?)
    }

    /// Fixed horizon override (disables the automatic horizon).
    pub fn set_horizon(&mut self, horizon: f64) -> Result<(), ConfigError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        self.spec.horizon = HorizonSpec::Seconds(horizon);
        self.template.base.horizon = horizon;
        self.template.auto_horizon = false;
        Ok(())
    }

    /// Single-run configuration for `seed`.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        self.template.instantiate(seed)
    }
}

fn build_template(spec: &ExperimentSpec, attack: &AttackSpec) -> Result<RunTemplate, ConfigError> {
    let graph = Graph::from_spec(&spec.graph)?;
    let n = graph.n();
    let delta = spec.protocol.delta.expand(n, "delta")?;
    let hold = match &spec.protocol.hold {
        HoldSpec::Values(v) => v.expand(n, "hold")?,
        HoldSpec::Ratio { delta_over } => {
            if !(*delta_over > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "protocol.hold.delta_over must be positive, got {delta_over}"
                )));
            }
            delta.iter().map(|d| d / delta_over).collect()
        }
    };
    let params = ProtocolParams::new(delta, hold, spec.protocol.epsilon);
    params.validate(&graph)?;

    let x0 = match &spec.x0 {
        InitialSpec::Explicit(v) => {
            if v.len() != n {
                return Err(ConfigError::Invalid(format!(
                    "x0 has {} entries for {n} agents",
                    v.len()
                )));
            }
            InitialState::Fixed(v.clone())
        }
        InitialSpec::Drawn(d) => {
            let (low, high) = (d.low.unwrap_or(0.0), d.high.unwrap_or(1.0));
            if !(low < high) {
                return Err(ConfigError::Invalid(format!(
                    "x0: need low < high, got [{low}, {high})"
                )));
            }
            match d.uniform_seed {
                Some(s) => InitialState::Fixed(uniform_initial_state(s, n, low, high)),
                None => InitialState::PerSeed { low, high },
            }
        }
    };

    let model = attack.to_model()?;
    if matches!(model, AttackModel::Aware(_)) && params.common_delta().is_none() {
        return Err(AttackError::NonuniformDelta.into());
    }
    let (horizon, auto) = match spec.horizon {
        HorizonSpec::Seconds(h) if h > 0.0 && h.is_finite() => (h, false),
        HorizonSpec::Seconds(h) => {
            return Err(ConfigError::Invalid(format!(
                "horizon must be positive, got {h}"
            )))
        }
        HorizonSpec::Auto(_) => (crate::analysis::AUTO_HORIZON_START, true),
    };
    let base = RunConfig {
        graph,
        params,
        x0: match &x0 {
            InitialState::Fixed(v) => v.clone(),
            InitialState::PerSeed { .. } => vec![0.0; n],
        },
        attack: model,
        horizon,
        seed: spec.seed,
        stop_at_quiescence: spec.stop_at_quiescence,
    };
    Ok(RunTemplate {
        base,
        x0,
        auto_horizon: auto,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "t",
        "graph": {"n": 3, "edges": [[0, 1], [1, 2]]},
        "protocol": {"delta": 0.001, "hold": {"delta_over": 1.01}, "epsilon": 0.02},
        "x0": [0.0, 0.5, 1.0],
        "attack": {"kind": "periodic", "rho": 0.5, "sigma": 10},
        "horizon": 5,
        "seeds": {"start": 3, "count": 4},
        "sweep": {"rho": [0.2, 0.5], "sigma": [10, 1000]}
    }"#;

    #[test]
    fn parses_a_complete_config() {
        let e = Experiment::from_json(BASE).unwrap();
        assert_eq!(e.seeds, vec![3, 4, 5, 6]);
        assert_eq!(e.template.base.horizon, 5.0);
        assert_eq!(e.template.base.params.hold[0], 0.001 / 1.01);
        let cells = e.spec.sweep.as_ref().unwrap().cells().unwrap();
        assert_eq!(cells.len(), 4);
        let t = e.cell_template(&cells[3]).unwrap();
        match t.base.attack {
            AttackModel::Deterministic {
                attack: DeterministicAttack::Periodic(p),
                budget,
            } => {
                assert_eq!((p.rho, p.sigma), (0.5, 1000.0));
                assert_eq!(budget.unwrap().kappa, 0.5 / 1000.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = BASE.replace("\"epsilon\"", "\"epsilom\"");
        let err = ExperimentSpec::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("protocol"), "{err}");
        assert!(err.contains("epsilom"), "{err}");
    }

    #[test]
    fn wrong_type_is_named() {
        let bad = BASE.replace("\"horizon\": 5", "\"horizon\": \"soon\"");
        assert!(ExperimentSpec::from_json(&bad)
            .unwrap_err()
            .to_string()
            .contains("horizon"));
        let bad = BASE.replace("\"sigma\": 10}", "\"sigma\": \"ten\"}");
        let err = ExperimentSpec::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("attack"), "{err}");
    }

    #[test]
    fn empty_sweep_axis_is_rejected() {
        let bad = BASE.replace("\"rho\": [0.2, 0.5]", "\"rho\": []");
        assert!(
            matches!(Experiment::from_json(&bad), Err(ConfigError::Invalid(m)) if m.contains("sweep.rho"))
        );
    }

    #[test]
    fn semantic_errors() {
        let bad = BASE.replace("\"delta_over\": 1.01", "\"delta_over\": 0.5");
        assert!(matches!(
            Experiment::from_json(&bad),
            Err(ConfigError::Params(_))
        ));
        let bad = BASE.replace("[[0, 1], [1, 2]]", "[[0, 1]]");
        assert!(matches!(
            Experiment::from_json(&bad),
            Err(ConfigError::Graph(_))
        ));
        let bad = BASE.replace("[0.0, 0.5, 1.0]", "[0.0, 0.5]");
        assert!(matches!(
            Experiment::from_json(&bad),
            Err(ConfigError::Invalid(_))
        ));
        let bad = BASE
            .replace("\"delta\": 0.001", "\"delta\": [0.001, 0.0011, 0.001]")
            .replace(
                r#"{"kind": "periodic", "rho": 0.5, "sigma": 10}"#,
                r#"{"kind": "aware", "rho": 0.5, "kappa": 0.1}"#,
            );
        let bad = bad.replace(", \"sigma\": [10, 1000]", "");
        assert!(matches!(
            Experiment::from_json(&bad),
            Err(ConfigError::Attack(AttackError::NonuniformDelta))
        ));
    }

    #[test]
    fn initial_state_forms() {
        let drawn = BASE.replace("[0.0, 0.5, 1.0]", r#"{"uniform_seed": 9}"#);
        let e = Experiment::from_json(&drawn).unwrap();
        assert_eq!(e.run_config(1).x0, e.run_config(2).x0);
        let per_seed = BASE.replace("[0.0, 0.5, 1.0]", r#"{"low": -1, "high": 1}"#);
        let e = Experiment::from_json(&per_seed).unwrap();
        assert_ne!(e.run_config(1).x0, e.run_config(2).x0);
        assert!(e.run_config(1).x0.iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn horizon_defaults_to_auto() {
        let auto = BASE.replace("\"horizon\": 5,", "");
        let e = Experiment::from_json(&auto).unwrap();
        assert!(e.template.auto_horizon);
        let mut e = e;
        e.set_horizon(2.0).unwrap();
        assert!(!e.template.auto_horizon);
    }
}
