//! One configured experiment: the scenario model plus the operations the
//! command line exposes (solve, heuristic search, evaluation).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScenarioKind, SimoptSection, ViSection};
use crate::error::{Error, Result};
use crate::mdp::{Cardinality, MdpModel};
use crate::policy_io::{read_policy_csv, write_policy_csv};
use crate::scenario::a::ScenarioA;
use crate::scenario::b::ScenarioB;
use crate::scenario::c::{ScenarioC, ScenarioCMdp, WEEKDAYS};
use crate::sim::{evaluate_policy, Evaluation, RolloutConfig, SimState, Simulator, TabularPolicy};
use crate::simopt::{ga_search, grid_search, Param, SearchResult, SearchSpace};
use crate::vi::{checkpoint_path, list_checkpoints, save_checkpoint, Precision, Real, ValueIteration, ViResult};

const WEEKDAY_NAMES: [&str; WEEKDAYS] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

pub enum Experiment {
    A(ScenarioA),
    B(ScenarioB),
    C(ScenarioC),
}

/// Fitted heuristic parameters as written by the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicFile {
    pub scenario: ScenarioKind,
    pub kind: String,
    pub description: String,
    pub names: Vec<String>,
    pub values: Vec<usize>,
    pub return_mean: f64,
    pub return_sd: f64,
    pub rollouts: usize,
}

impl HeuristicFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        crate::io::atomic_write_string(path, &(text + "\n"))
    }
}

/// Runs value iteration, resuming from `checkpoint_dir` when asked, and
/// writes the final value function there.
pub fn solve_model<M: MdpModel>(
    model: &M,
    vi: &ViSection,
    checkpoint_dir: Option<&Path>,
    resume: bool,
) -> Result<ViResult> {
    fn run<M: MdpModel, T: Real>(model: &M, vi: &ViSection, dir: Option<&Path>, resume: bool) -> Result<ViResult> {
        let config = vi.to_vi_config(dir.map(Path::to_path_buf));
        let engine = if resume {
            ValueIteration::<M, T>::resume(model, config)?
        } else {
            if let Some(dir) = dir {
                for it in list_checkpoints(dir)? {
                    let path = checkpoint_path(dir, it);
                    std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                }
            }
            ValueIteration::<M, T>::new(model, config)?
        };
        let result = engine.run()?;
        if let Some(dir) = dir {
            save_checkpoint(&result.value_function, &checkpoint_path(dir, result.iterations))?;
        }
        Ok(result)
    }
    if resume && checkpoint_dir.is_none() {
        return Err(Error::Config("resume needs a checkpoint directory".into()));
    }
    match vi.precision {
        Precision::F64 => run::<M, f64>(model, vi, checkpoint_dir, resume),
        Precision::F32 => run::<M, f32>(model, vi, checkpoint_dir, resume),
    }
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        Ok(match config.scenario {
            ScenarioKind::A => Experiment::A(ScenarioA::new(config.scenario_a())?),
            ScenarioKind::B => Experiment::B(ScenarioB::new(config.scenario_b())?),
            ScenarioKind::C => Experiment::C(ScenarioC::new(config.scenario_c())?),
        })
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            Experiment::A(_) => ScenarioKind::A,
            Experiment::B(_) => ScenarioKind::B,
            Experiment::C(_) => ScenarioKind::C,
        }
    }

    pub fn products(&self) -> &'static [&'static str] {
        match self {
            Experiment::A(m) => m.products(),
            Experiment::B(m) => m.products(),
            Experiment::C(m) => m.products(),
        }
    }

    pub fn cardinality(&self) -> Cardinality {
        match self {
            Experiment::A(m) => m.cardinality(),
            Experiment::B(m) => m.cardinality(),
            Experiment::C(m) => m.params().cardinality(),
        }
    }

    /// Canonical parameter string of the scenario.
    pub fn description(&self) -> String {
        match self {
            Experiment::A(m) => m.description(),
            Experiment::B(m) => m.description(),
            Experiment::C(m) => m.params().description(),
        }
    }

    /// Scenario C's MDP, which fails with a capacity error when too large.
    fn c_mdp(sim: &ScenarioC) -> Result<ScenarioCMdp> {
        ScenarioCMdp::new(sim.params().clone())
    }

    pub fn solve(&self, vi: &ViSection, checkpoint_dir: Option<&Path>, resume: bool) -> Result<ViResult> {
        match self {
            Experiment::A(m) => solve_model(m, vi, checkpoint_dir, resume),
            Experiment::B(m) => solve_model(m, vi, checkpoint_dir, resume),
            Experiment::C(sim) => solve_model(&Self::c_mdp(sim)?, vi, checkpoint_dir, resume),
        }
    }

    pub fn write_policy(&self, path: &Path, policy: &crate::vi::Policy) -> Result<()> {
        match self {
            Experiment::A(m) => write_policy_csv(path, m, policy),
            Experiment::B(m) => write_policy_csv(path, m, policy),
            Experiment::C(sim) => write_policy_csv(path, &Self::c_mdp(sim)?, policy),
        }
    }

    /// Reads a policy CSV and evaluates it by simulation.
    pub fn evaluate_policy_file(&self, path: &Path, rollouts: &RolloutConfig) -> Result<Evaluation> {
        match self {
            Experiment::A(m) => {
                let policy = read_policy_csv(path, m)?;
                evaluate_policy(m, &TabularPolicy::new(m, m, &policy)?, rollouts)
            }
            Experiment::B(m) => {
                let policy = read_policy_csv(path, m)?;
                evaluate_policy(m, &TabularPolicy::new(m, m, &policy)?, rollouts)
            }
            Experiment::C(sim) => {
                let mdp = Self::c_mdp(sim)?;
                let policy = read_policy_csv(path, &mdp)?;
                evaluate_policy(sim, &TabularPolicy::new(&mdp, sim, &policy)?, rollouts)
            }
        }
    }

    /// Evaluates a solved policy without going through a file.
    pub fn evaluate_solved(&self, policy: &crate::vi::Policy, rollouts: &RolloutConfig) -> Result<Evaluation> {
        match self {
            Experiment::A(m) => evaluate_policy(m, &TabularPolicy::new(m, m, policy)?, rollouts),
            Experiment::B(m) => evaluate_policy(m, &TabularPolicy::new(m, m, policy)?, rollouts),
            Experiment::C(sim) => {
                let mdp = Self::c_mdp(sim)?;
                evaluate_policy(sim, &TabularPolicy::new(&mdp, sim, policy)?, rollouts)
            }
        }
    }

    pub fn heuristic_kind(&self) -> &'static str {
        match self {
            Experiment::A(_) => "base-stock",
            Experiment::B(_) => "modified-base-stock",
            Experiment::C(_) => "weekday-ss",
        }
    }

    /// Parameters of the scenario's heuristic: `S` in `0..=A_max` for A,
    /// `(S^a, S^b)` up to twice the order caps for B, and weekday order-up-to
    /// levels then reorder points in `0..=A_max` for C.
    pub fn heuristic_space(&self) -> SearchSpace {
        let param = |name: String, hi: usize| Param { name, lo: 0, hi };
        let params = match self {
            Experiment::A(m) => vec![param("S".into(), m.params().a_max)],
            Experiment::B(m) => {
                let (a, b) = m.a_max();
                vec![param("S_a".into(), 2 * a), param("S_b".into(), 2 * b)]
            }
            Experiment::C(m) => {
                let hi = m.params().a_max;
                WEEKDAY_NAMES
                    .iter()
                    .map(|d| param(format!("S_{d}"), hi))
                    .chain(WEEKDAY_NAMES.iter().map(|d| param(format!("s_{d}"), hi)))
                    .collect()
            }
        };
        SearchSpace::new(params).expect("non-empty with valid bounds")
    }

    /// Simulates the heuristic with the given parameters. For C, weekdays
    /// whose reorder point is not below the order-up-to level never order.
    pub fn evaluate_heuristic(&self, params: &[usize], rollouts: &RolloutConfig) -> Result<Evaluation> {
        let space = self.heuristic_space();
        if !space.contains(params) {
            return Err(Error::Parameter(format!(
                "heuristic parameters {params:?} outside the search space {:?}",
                space.params
            )));
        }
        match self {
            Experiment::A(m) => {
                let level = params[0];
                evaluate_policy(m, &|s: &SimState| Some(m.base_stock_action(level, s)), rollouts)
            }
            Experiment::B(m) => {
                let levels = (params[0], params[1]);
                evaluate_policy(m, &|s: &SimState| Some(m.modified_base_stock_action(levels, s)), rollouts)
            }
            Experiment::C(m) => {
                let (big_s, s) = split_weekday_params(params);
                evaluate_policy(m, &|st: &SimState| Some(m.weekday_ss_action(&s, &big_s, st)), rollouts)
            }
        }
    }

    /// Fits the heuristic: a full grid for one parameter, otherwise the GA.
    pub fn search(&self, simopt: &SimoptSection) -> Result<SearchResult> {
        let space = self.heuristic_space();
        let rollouts = RolloutConfig {
            n_rollouts: simopt.rollouts,
            base_seed: simopt.base_seed,
            ..Default::default()
        };
        let objective = |p: &[usize]| Ok(self.evaluate_heuristic(p, &rollouts)?.ret);
        if space.dim() == 1 {
            grid_search(&space, &objective)
        } else {
            ga_search(&space, &objective, &simopt.ga)
        }
    }

    pub fn heuristic_file(&self, result: &SearchResult, rollouts: usize) -> HeuristicFile {
        let space = self.heuristic_space();
        HeuristicFile {
            scenario: self.kind(),
            kind: self.heuristic_kind().into(),
            description: self.description(),
            names: space.names().iter().map(|s| s.to_string()).collect(),
            values: result.best.params.clone(),
            return_mean: result.best.mean,
            return_sd: result.best.sd,
            rollouts,
        }
    }

    /// Checks that a heuristic file was fitted for this experiment.
    pub fn check_heuristic_file(&self, file: &HeuristicFile, path: &Path) -> Result<()> {
        if file.kind != self.heuristic_kind() || file.scenario != self.kind() {
            return Err(Error::format(
                path,
                format!("heuristic {:?} does not match scenario {:?}", file.kind, self.kind()),
            ));
        }
        if file.description != self.description() {
            return Err(Error::Fingerprint {
                expected: self.description(),
                found: file.description.clone(),
            });
        }
        let space = self.heuristic_space();
        if file.names != space.names() || !space.contains(&file.values) {
            return Err(Error::format(path, "parameter names or values do not fit the search space"));
        }
        Ok(())
    }
}

/// Weekday `(S, s)` arrays from the flat parameter vector.
pub fn split_weekday_params(params: &[usize]) -> ([usize; WEEKDAYS], [usize; WEEKDAYS]) {
    let mut big_s = [0; WEEKDAYS];
    let mut s = [0; WEEKDAYS];
    big_s.copy_from_slice(&params[..WEEKDAYS]);
    s.copy_from_slice(&params[WEEKDAYS..2 * WEEKDAYS]);
    (big_s, s)
}

/// Optimality gap in percent, positive when the heuristic does worse.
pub fn optimality_gap(vi_mean: f64, heuristic_mean: f64) -> f64 {
    100.0 * (vi_mean - heuristic_mean) / vi_mean.abs()
}
