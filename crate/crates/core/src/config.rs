//! Experiment configuration files and the bundled presets.
//!
//! A configuration is TOML with a `scenario` key, one parameter table named
//! after the scenario and optional `[vi]`, `[simopt]` and `[evaluation]`
//! tables. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ConvergenceTest;
use crate::scenario::a::ScenarioAParams;
use crate::scenario::b::ScenarioBParams;
use crate::scenario::c::ScenarioCParams;
use crate::sim::RolloutConfig;
use crate::simopt::GaConfig;
use crate::vi::{Precision, ViConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    A,
    B,
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViSection {
    pub epsilon: f64,
    pub gamma: Option<f64>,
    pub max_batch_size: usize,
    pub max_iterations: u64,
    pub fixed_iterations: Option<u64>,
    pub convergence_test: Option<ConvergenceTest>,
    /// Sweeps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub precision: Precision,
}

impl Default for ViSection {
    fn default() -> Self {
        let vi = ViConfig::default();
        ViSection {
            epsilon: vi.epsilon,
            gamma: None,
            max_batch_size: vi.max_batch_size,
            max_iterations: vi.max_iterations,
            fixed_iterations: None,
            convergence_test: None,
            checkpoint_every: 0,
            precision: Precision::F64,
        }
    }
}

impl ViSection {
    pub fn to_vi_config(&self, checkpoint_dir: Option<PathBuf>) -> ViConfig {
        ViConfig {
            epsilon: self.epsilon,
            gamma: self.gamma,
            max_batch_size: self.max_batch_size,
            max_iterations: self.max_iterations,
            fixed_iterations: self.fixed_iterations,
            convergence_test: self.convergence_test,
            checkpoint_every: if checkpoint_dir.is_some() { self.checkpoint_every } else { 0 },
            checkpoint_dir,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimoptSection {
    /// Rollouts per candidate.
    pub rollouts: usize,
    /// Base seed shared by every candidate.
    pub base_seed: u64,
    pub ga: GaConfig,
}

impl Default for SimoptSection {
    fn default() -> Self {
        SimoptSection {
            rollouts: 4000,
            base_seed: 0,
            ga: GaConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    /// Label used in reports.
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<ScenarioAParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<ScenarioBParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<ScenarioCParams>,
    #[serde(default)]
    pub vi: ViSection,
    #[serde(default)]
    pub simopt: SimoptSection,
    #[serde(default)]
    pub evaluation: RolloutConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let present = [self.a.is_some(), self.b.is_some(), self.c.is_some()];
        let wanted = match self.scenario {
            ScenarioKind::A => 0,
            ScenarioKind::B => 1,
            ScenarioKind::C => 2,
        };
        if present.iter().enumerate().any(|(i, &p)| p && i != wanted) {
            return Err(Error::Config(format!(
                "parameters given for a scenario other than {:?}",
                self.scenario
            )));
        }
        self.vi.to_vi_config(None).validate()?;
        self.simopt.ga.validate()?;
        if self.evaluation.n_rollouts == 0 || self.simopt.rollouts == 0 {
            return Err(Error::Config("rollout counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Loads a bundled preset such as `a/m2/exp1`, `b/m2/p3` or `c/m8/exp2`.
    pub fn preset(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split('/').collect();
        let bad = || Error::Config(format!("unknown preset {name:?}; run `perishable presets` for the list"));
        let [scenario, m, exp] = parts[..] else {
            return Err(bad());
        };
        let m: usize = m.strip_prefix('m').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let mut cfg = ExperimentConfig {
            scenario: ScenarioKind::A,
            name: name.to_string(),
            a: None,
            b: None,
            c: None,
            vi: ViSection::default(),
            simopt: SimoptSection::default(),
            evaluation: RolloutConfig::default(),
            output: None,
        };
        match scenario {
            "a" => {
                let k: usize = exp.strip_prefix("exp").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                if !(2..=5).contains(&m) {
                    return Err(bad());
                }
                cfg.a = Some(ScenarioAParams::experiment(m, k).map_err(|_| bad())?);
            }
            "b" => {
                if exp.starts_with('p') && m != 2 {
                    return Err(bad());
                }
                if !(2..=3).contains(&m) {
                    return Err(bad());
                }
                cfg.scenario = ScenarioKind::B;
                cfg.b = Some(ScenarioBParams::preset(m, exp).map_err(|_| bad())?);
                if exp.starts_with('p') {
                    cfg.vi.fixed_iterations = Some(100);
                }
            }
            "c" => {
                let k: usize = exp.strip_prefix("exp").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                cfg.scenario = ScenarioKind::C;
                cfg.c = Some(ScenarioCParams::experiment(m, k).map_err(|_| bad())?);
                cfg.vi.checkpoint_every = 1;
            }
            _ => return Err(bad()),
        }
        Ok(cfg)
    }

    /// Every bundled preset name.
    pub fn preset_names() -> Vec<String> {
        let mut names = Vec::new();
        for m in 2..=5 {
            for k in 1..=8 {
                names.push(format!("a/m{m}/exp{k}"));
            }
        }
        for k in ["exp1", "exp2"] {
            names.push(format!("b/m2/{k}"));
        }
        for k in ["exp1", "exp2", "exp3", "exp4"] {
            names.push(format!("b/m3/{k}"));
        }
        for k in 1..=4 {
            names.push(format!("b/m2/p{k}"));
        }
        for m in [3, 5, 8] {
            for k in 1..=2 {
                names.push(format!("c/m{m}/exp{k}"));
            }
        }
        names
    }

    pub fn scenario_a(&self) -> ScenarioAParams {
        self.a.clone().unwrap_or_default()
    }

    pub fn scenario_b(&self) -> ScenarioBParams {
        self.b.clone().unwrap_or_default()
    }

    pub fn scenario_c(&self) -> ScenarioCParams {
        self.c.clone().unwrap_or_default()
    }
}
