//! Explicit table-driven MDP, mainly for small instances and cross-checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Cardinality, ConvergenceTest, MdpModel};

/// Every `(state, action, outcome)` triple has a probability, a successor and
/// a reward. Outcomes are plain indices.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    states: usize,
    actions: usize,
    outcomes: usize,
    probs: Vec<f64>,
    next: Vec<usize>,
    rewards: Vec<f64>,
    gamma: f64,
    test: ConvergenceTest,
}

impl TabularMdp {
    /// `probs`, `next` and `rewards` are laid out `[state][action][outcome]`.
    pub fn new(
        states: usize,
        actions: usize,
        outcomes: usize,
        probs: Vec<f64>,
        next: Vec<usize>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let len = states * actions * outcomes;
        if states == 0 || actions == 0 || outcomes == 0 {
            return Err(Error::Parameter("tabular MDP needs at least one state, action and outcome".into()));
        }
        if probs.len() != len || next.len() != len || rewards.len() != len {
            return Err(Error::Parameter(format!("tables must have {len} entries")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Parameter(format!("gamma {gamma} outside [0, 1]")));
        }
        if let Some(&bad) = next.iter().find(|&&n| n >= states) {
            return Err(Error::Parameter(format!("successor {bad} out of range")));
        }
        for (k, row) in probs.chunks(outcomes).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Parameter(format!("row {k} has an invalid probability")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!("row {k} sums to {total}")));
            }
        }
        Ok(TabularMdp {
            states,
            actions,
            outcomes,
            probs,
            next,
            rewards,
            gamma,
            test: ConvergenceTest::ValueSpan,
        })
    }

    /// Random instance with Dirichlet-like probability rows and rewards in [-1, 1).
    pub fn random(seed: u64, states: usize, actions: usize, outcomes: usize, gamma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = states * actions * outcomes;
        let mut probs = Vec::with_capacity(len);
        for _ in 0..states * actions {
            let w: Vec<f64> = (0..outcomes).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            probs.extend(w.iter().map(|x| x / total));
        }
        let next = (0..len).map(|_| rng.gen_range(0..states)).collect();
        let rewards = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(states, actions, outcomes, probs, next, rewards, gamma).expect("valid by construction")
    }

    pub fn with_convergence_test(mut self, test: ConvergenceTest) -> Self {
        self.test = test;
        self
    }

    #[inline]
    fn offset(&self, state: usize, action: usize) -> usize {
        (state * self.actions + action) * self.outcomes
    }

    pub fn probability(&self, state: usize, action: usize, outcome: usize) -> f64 {
        self.probs[self.offset(state, action) + outcome]
    }
}

impl MdpModel for TabularMdp {
    type Outcome = usize;

    fn cardinality(&self) -> Cardinality {
        Cardinality {
            states: self.states as u128,
            actions: self.actions as u128,
            outcomes: self.outcomes as u128,
        }
    }

    fn num_states(&self) -> usize {
        self.states
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn state_components(&self, state: usize) -> Vec<usize> {
        vec![state]
    }

    fn state_index(&self, components: &[usize]) -> Result<usize> {
        match components {
            [s] if *s < self.states => Ok(*s),
            _ => Err(Error::Index(format!("bad state {components:?}"))),
        }
    }

    fn state_labels(&self) -> Vec<String> {
        vec!["state".into()]
    }

    fn action_components(&self, action: usize) -> Vec<usize> {
        vec![action]
    }

    fn action_index(&self, components: &[usize]) -> Result<usize> {
        match components {
            [a] if *a < self.actions => Ok(*a),
            _ => Err(Error::Index(format!("bad action {components:?}"))),
        }
    }

    fn action_labels(&self) -> Vec<String> {
        vec!["action".into()]
    }

    fn enumerate_outcomes(&self) -> Result<Vec<usize>> {
        Ok((0..self.outcomes).collect())
    }

    fn outcome_probabilities(&self, state: usize, action: usize) -> Vec<f64> {
        let o = self.offset(state, action);
        self.probs[o..o + self.outcomes].to_vec()
    }

    fn transition(&self, state: usize, action: usize, outcome: &usize) -> (usize, f64) {
        let k = self.offset(state, action) + outcome;
        (self.next[k], self.rewards[k])
    }

    #[inline]
    fn for_each_outcome<F: FnMut(f64, usize, f64)>(&self, state: usize, action: usize, mut visit: F) {
        let o = self.offset(state, action);
        for k in o..o + self.outcomes {
            let p = self.probs[k];
            if p > 0.0 {
                visit(p, self.next[k], self.rewards[k]);
            }
        }
    }

    fn initial_value(&self, _state: usize) -> f64 {
        0.0
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn convergence_test(&self) -> ConvergenceTest {
        self.test
    }

    fn description(&self) -> String {
        let mut s = format!(
            "tabular;states={};actions={};outcomes={};gamma={:?};",
            self.states, self.actions, self.outcomes, self.gamma
        );
        for k in 0..self.probs.len() {
            s.push_str(&format!("{:?},{},{:?};", self.probs[k], self.next[k], self.rewards[k]));
        }
        s
    }
}
