use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::checkpoint::{
    checkpoint_path, list_checkpoints, load_checkpoint_for, save_checkpoint, ValueFunction,
};
use super::convergence::check_convergence;
use super::Real;
use crate::error::{Error, Result};
use crate::mdp::{ConvergenceTest, MdpModel, MAX_STATES};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViConfig {
    pub epsilon: f64,
    /// Overrides the model's discount factor.
    pub gamma: Option<f64>,
    pub max_batch_size: usize,
    pub max_iterations: u64,
    /// Run exactly this many sweeps and skip the convergence test.
    pub fixed_iterations: Option<u64>,
    /// Overrides the model's stopping rule.
    pub convergence_test: Option<ConvergenceTest>,
    /// Sweeps between checkpoints; 0 disables checkpointing.
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            epsilon: 1e-4,
            gamma: None,
            max_batch_size: 65_536,
            max_iterations: 10_000,
            fixed_iterations: None,
            convergence_test: None,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl ViConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("gamma must lie in [0, 1], got {g}")));
            }
        }
        if self.max_batch_size == 0 {
            return Err(Error::Config("max_batch_size must be at least 1".into()));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::Config("checkpoint_every is set but checkpoint_dir is not".into()));
        }
        Ok(())
    }
}

/// One action index per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub actions: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    FixedIterations,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct ViResult {
    pub value_function: ValueFunction,
    pub policy: Policy,
    pub iterations: u64,
    pub stop_reason: StopReason,
    pub elapsed: Duration,
}

impl ViResult {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }
}

/// Best value and action for one state. Ties go to the smallest action index.
#[inline]
pub fn backup_state<M: MdpModel, T: Real>(model: &M, gamma: T, state: usize, values: &[T]) -> (T, u32) {
    let mut best = T::neg_infinity();
    let mut best_action = 0u32;
    for a in 0..model.num_actions() {
        let mut q = T::zero();
        model.for_each_outcome(state, a, |p, next, r| {
            q = q + T::from_f64(p) * (T::from_f64(r) + gamma * values[next]);
        });
        // NaN never compares greater, so it can only win as action 0.
        if q > best || a == 0 {
            best = q;
            best_action = a as u32;
        }
    }
    (best, best_action)
}

/// Backs up `states` against `values`, writing into the aligned output slices.
pub fn bellman_backup_batch<M: MdpModel, T: Real>(
    model: &M,
    gamma: T,
    values: &[T],
    states: &[usize],
    out_values: &mut [T],
    out_actions: &mut [u32],
) {
    assert_eq!(states.len(), out_values.len());
    assert_eq!(states.len(), out_actions.len());
    states
        .par_iter()
        .zip(out_values.par_iter_mut().zip(out_actions.par_iter_mut()))
        .for_each(|(&s, (v, a))| {
            let (best, action) = backup_state(model, gamma, s, values);
            *v = best;
            *a = action;
        });
}

/// One synchronous sweep over all states in padded batches.
fn sweep<M: MdpModel, T: Real>(
    model: &M,
    gamma: T,
    values: &[T],
    batch_size: usize,
    mut actions: Option<&mut [u32]>,
) -> Vec<T> {
    let n = values.len();
    let batch = batch_size.min(n.max(1));
    let mut next = vec![T::zero(); n];
    let mut idx = vec![0usize; batch];
    let mut out_v = vec![T::zero(); batch];
    let mut out_a = vec![0u32; batch];
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let real = end - start;
        for (k, slot) in idx.iter_mut().enumerate() {
            // Padding slots recompute state 0 and are dropped below.
            *slot = if k < real { start + k } else { 0 };
        }
        bellman_backup_batch(model, gamma, values, &idx, &mut out_v, &mut out_a);
        next[start..end].copy_from_slice(&out_v[..real]);
        if let Some(acts) = actions.as_deref_mut() {
            acts[start..end].copy_from_slice(&out_a[..real]);
        }
        start = end;
    }
    next
}

/// Greedy policy with respect to `values`.
pub fn extract_policy<M: MdpModel, T: Real>(model: &M, gamma: f64, values: &[T], batch_size: usize) -> Policy {
    let mut actions = vec![0u32; values.len()];
    sweep(model, T::from_f64(gamma), values, batch_size, Some(&mut actions));
    Policy { actions }
}

/// Value-iteration driver holding the recent value history.
pub struct ValueIteration<'m, M: MdpModel, T: Real = f64> {
    model: &'m M,
    config: ViConfig,
    gamma: f64,
    test: ConvergenceTest,
    history: VecDeque<Vec<T>>,
    iteration: u64,
    /// Highest iteration known to be on disk.
    saved_through: Option<u64>,
}

impl<'m, M: MdpModel, T: Real> ValueIteration<'m, M, T> {
    pub fn new(model: &'m M, config: ViConfig) -> Result<Self> {
        config.validate()?;
        let n = model.num_states();
        if n as u128 > MAX_STATES {
            return Err(Error::Capacity {
                required: n as u128,
                limit: MAX_STATES,
            });
        }
        let v0: Vec<T> = (0..n).map(|s| T::from_f64(model.initial_value(s))).collect();
        let mut history = VecDeque::with_capacity(9);
        history.push_back(v0);
        Ok(ValueIteration {
            gamma: config.gamma.unwrap_or_else(|| model.gamma()),
            test: config.convergence_test.unwrap_or_else(|| model.convergence_test()),
            model,
            config,
            history,
            iteration: 0,
            saved_through: None,
        })
    }

    /// Restores the newest checkpoints in the configured directory, or starts
    /// fresh when there are none.
    pub fn resume(model: &'m M, config: ViConfig) -> Result<Self> {
        let mut vi = Self::new(model, config)?;
        let Some(dir) = vi.config.checkpoint_dir.clone() else {
            return Err(Error::Config("resume requires checkpoint_dir".into()));
        };
        let found = list_checkpoints(&dir)?;
        let Some(&latest) = found.last() else {
            return Ok(vi);
        };
        let fingerprint = model.fingerprint();
        let keep = vi.test.history_len() as u64;
        let mut history = VecDeque::new();
        // Consecutive run of iterations ending at the newest file.
        let mut it = latest;
        loop {
            if !found.contains(&it) || history.len() as u64 == keep {
                break;
            }
            let vf = load_checkpoint_for(&checkpoint_path(&dir, it), fingerprint)?;
            if vf.values.len() != model.num_states() {
                return Err(Error::format(
                    checkpoint_path(&dir, it),
                    format!("holds {} states, model has {}", vf.values.len(), model.num_states()),
                ));
            }
            history.push_front(vf.values.into_iter().map(T::from_f64).collect());
            if it == 0 {
                break;
            }
            it -= 1;
        }
        vi.history = history;
        vi.iteration = latest;
        vi.saved_through = Some(latest);
        Ok(vi)
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn convergence_test(&self) -> ConvergenceTest {
        self.test
    }

    pub fn values(&self) -> &[T] {
        self.history.back().expect("history is never empty")
    }

    /// Performs one sweep. The new vector is kept even if writing the
    /// checkpoint afterwards fails.
    pub fn step(&mut self) -> Result<()> {
        let next = sweep(
            self.model,
            T::from_f64(self.gamma),
            self.values(),
            self.config.max_batch_size,
            None,
        );
        self.iteration += 1;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: self.iteration,
            });
        }
        self.history.push_back(next);
        while self.history.len() > self.test.history_len() {
            self.history.pop_front();
        }
        let every = self.config.checkpoint_every;
        if every > 0 && self.iteration % every == 0 {
            self.checkpoint()?;
        }
        Ok(())
    }

    /// Writes every vector in the history window not yet on disk and prunes
    /// files that fall outside it.
    pub fn checkpoint(&mut self) -> Result<()> {
        let Some(dir) = self.config.checkpoint_dir.clone() else {
            return Err(Error::Config("checkpoint requires checkpoint_dir".into()));
        };
        let fingerprint = self.model.fingerprint();
        let oldest = self.iteration + 1 - self.history.len() as u64;
        for (k, values) in self.history.iter().enumerate() {
            let it = oldest + k as u64;
            if self.saved_through.is_some_and(|s| it <= s) {
                continue;
            }
            let vf = ValueFunction {
                values: values.iter().map(|v| v.as_f64()).collect(),
                iteration: it,
                fingerprint,
            };
            save_checkpoint(&vf, &checkpoint_path(&dir, it))?;
        }
        self.saved_through = Some(self.iteration);
        for it in list_checkpoints(&dir)? {
            if it < oldest {
                let path = checkpoint_path(&dir, it);
                std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }

    fn converged(&self) -> Result<bool> {
        if self.history.len() < self.test.history_len() {
            return Ok(false);
        }
        let window: Vec<&[T]> = self.history.iter().map(|v| v.as_slice()).collect();
        check_convergence(self.test, &window, self.gamma, self.config.epsilon, self.iteration)
    }

    /// Sweeps until the stopping rule fires, then extracts the greedy policy.
    pub fn run(mut self) -> Result<ViResult> {
        let started = Instant::now();
        let stop_reason = loop {
            if let Some(fixed) = self.config.fixed_iterations {
                if self.iteration >= fixed {
                    break StopReason::FixedIterations;
                }
            } else if self.iteration > 0 && self.converged()? {
                break StopReason::Converged;
            } else if self.iteration >= self.config.max_iterations {
                break StopReason::MaxIterations;
            }
            self.step()?;
        };
        let policy = extract_policy(self.model, self.gamma, self.values(), self.config.max_batch_size);
        let value_function = ValueFunction {
            values: self.values().iter().map(|v| v.as_f64()).collect(),
            iteration: self.iteration,
            fingerprint: self.model.fingerprint(),
        };
        Ok(ViResult {
            value_function,
            policy,
            iterations: self.iteration,
            stop_reason,
            elapsed: started.elapsed(),
        })
    }
}
