//! Single perishable product with a lead time of one or more days.
//!
//! State: `[O_{L-1}, .., O_1, X_m, .., X_1]`, orders in transit then stock by
//! remaining life, freshest first. The order placed today becomes `O_{L-1}`
//! (or `X_m` when `L = 1`). The only randomness is daily demand.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pos, Issuing};
use crate::dist::{truncated_gamma_demand_pmf, CdfSampler, DiscretePmf};
use crate::error::{Error, Result};
use crate::mdp::{Cardinality, ConvergenceTest, MdpModel, MixedRadix};
use crate::rng::DayStream;
use crate::sim::{ProductStep, SimState, Simulator, StepStats, MAX_COMPONENTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioAParams {
    /// Useful life in days.
    pub m: usize,
    #[serde(alias = "L")]
    pub lead_time: usize,
    pub a_max: usize,
    pub d_max: usize,
    pub c_v: f64,
    pub c_h: f64,
    pub c_s: f64,
    pub c_w: f64,
    pub mu: f64,
    /// Coefficient of variation of demand, `sigma / mu`.
    pub cv: f64,
    pub gamma: f64,
    pub issuing: Issuing,
}

impl Default for ScenarioAParams {
    fn default() -> Self {
        ScenarioAParams {
            m: 2,
            lead_time: 1,
            a_max: 10,
            d_max: 100,
            c_v: 3.0,
            c_h: 1.0,
            c_s: 5.0,
            c_w: 7.0,
            mu: 4.0,
            cv: 0.5,
            gamma: 0.99,
            issuing: Issuing::Lifo,
        }
    }
}

impl ScenarioAParams {
    /// Experiments 1..=8: lead time 1 then 2, wastage cost 7 then 10, LIFO
    /// then FIFO, varying fastest in that reverse order.
    pub fn experiment(m: usize, exp: usize) -> Result<Self> {
        if !(1..=8).contains(&exp) {
            return Err(Error::Parameter(format!("experiment {exp} outside 1..=8")));
        }
        let k = exp - 1;
        Ok(ScenarioAParams {
            m,
            lead_time: 1 + k / 4,
            c_w: if k % 4 < 2 { 7.0 } else { 10.0 },
            issuing: if k % 2 == 0 { Issuing::Lifo } else { Issuing::Fifo },
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.lead_time < 1 {
            return Err(Error::Parameter("m and lead_time must be at least 1".into()));
        }
        if self.m + self.lead_time - 1 > MAX_COMPONENTS {
            return Err(Error::Parameter(format!(
                "m + lead_time - 1 must not exceed {MAX_COMPONENTS}"
            )));
        }
        if self.a_max == 0 || self.a_max > u16::MAX as usize / 2 {
            return Err(Error::Parameter(format!("a_max {} out of range", self.a_max)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        for (name, c) in [("c_v", self.c_v), ("c_h", self.c_h), ("c_s", self.c_s), ("c_w", self.c_w)] {
            if !c.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.m + self.lead_time - 1
    }

    pub fn cardinality(&self) -> Cardinality {
        let base = self.a_max as u128 + 1;
        Cardinality {
            states: base.checked_pow(self.width() as u32).unwrap_or(u128::MAX),
            actions: base,
            outcomes: self.d_max as u128 + 1,
        }
    }
}

/// Result of filling demand `d` from stock `x` (oldest first).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Issue {
    pub expired: usize,
    pub filled: usize,
    /// Remaining stock after ageing, `X'_1..X'_{m-1}`, oldest first.
    pub aged: [usize; MAX_COMPONENTS],
}

/// Applies the FIFO or LIFO update to stock `x` given oldest first.
pub fn issue(x: &[usize], d: usize, issuing: Issuing) -> Issue {
    let m = x.len();
    let d = d as i64;
    let xi = |j: usize| x[j - 1] as i64; // 1-based
    let mut aged = [0usize; MAX_COMPONENTS];
    let expired = match issuing {
        Issuing::Fifo => {
            let mut cum = 0i64;
            for j in 1..m {
                cum += xi(j);
                aged[j - 1] = pos(xi(j + 1) - pos(d - cum)) as usize;
            }
            pos(xi(1) - d)
        }
        Issuing::Lifo => {
            // suffix[j] = sum_{k=j}^{m} X_k
            let mut suffix = [0i64; MAX_COMPONENTS + 2];
            for j in (1..=m).rev() {
                suffix[j] = suffix[j + 1] + xi(j);
            }
            for j in 1..m {
                aged[j - 1] = pos(xi(j + 1) - pos(d - suffix[j + 2])) as usize;
            }
            pos(xi(1) - pos(d - suffix[2]))
        }
    };
    let total: usize = x.iter().sum();
    Issue {
        expired: expired as usize,
        filled: total.min(d as usize),
        aged,
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    prob: f64,
    /// Successor index with the newest slot still empty.
    next: u32,
    /// Reward excluding the ordering cost.
    reward: f64,
}

/// Per-state outcome lists in compressed rows.
struct OutcomeTable {
    offsets: Vec<u32>,
    entries: Vec<Entry>,
}

pub struct ScenarioA {
    params: ScenarioAParams,
    demand: DiscretePmf,
    sampler: CdfSampler,
    radix: MixedRadix,
    /// `P(D >= x)` and `E[(D - x)^+]` for `x in 0..=d_max`.
    tail_prob: Vec<f64>,
    tail_excess: Vec<f64>,
    table: OnceLock<OutcomeTable>,
}

impl ScenarioA {
    pub fn new(params: ScenarioAParams) -> Result<Self> {
        params.validate()?;
        let demand = truncated_gamma_demand_pmf(params.mu, params.cv, params.d_max)?;
        let radix = MixedRadix::new(vec![params.a_max + 1; params.width()])?;
        let probs = demand.probs();
        let mut tail_prob = vec![0.0; params.d_max + 2];
        let mut tail_excess = vec![0.0; params.d_max + 2];
        for x in (0..=params.d_max).rev() {
            tail_prob[x] = tail_prob[x + 1] + probs[x];
            // E[(D - x)^+] = E[(D - (x+1))^+] + P(D >= x+1)
            tail_excess[x] = tail_excess[x + 1] + tail_prob[x + 1];
        }
        Ok(ScenarioA {
            sampler: demand.sampler(),
            demand,
            radix,
            tail_prob,
            tail_excess,
            params,
            table: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &ScenarioAParams {
        &self.params
    }

    pub fn demand(&self) -> &DiscretePmf {
        &self.demand
    }

    /// Splits a state into in-transit orders and stock (oldest first).
    fn stock_oldest_first(&self, comps: &[usize], out: &mut [usize; MAX_COMPONENTS]) {
        let l = self.params.lead_time;
        let m = self.params.m;
        for j in 0..m {
            out[j] = comps[l - 1 + m - 1 - j];
        }
    }

    /// Next state components and reward for order `a` and demand `d`.
    pub fn step_components(&self, comps: &[usize], a: usize, d: usize) -> (Vec<usize>, f64, Issue) {
        let (m, l) = (self.params.m, self.params.lead_time);
        let mut x = [0usize; MAX_COMPONENTS];
        self.stock_oldest_first(comps, &mut x);
        let iss = issue(&x[..m], d, self.params.issuing);
        let mut next = vec![0usize; self.params.width()];
        next[0] = a;
        next[1..l].copy_from_slice(&comps[..l - 1]);
        // Newest remaining slot X'_{m-1} comes right after the pipeline.
        for j in 1..m {
            next[l - 1 + m - j] = iss.aged[j - 1];
        }
        let reward = self.reward(x[..m].iter().sum(), a, d, iss.expired);
        (next, reward, iss)
    }

    fn reward(&self, stock: usize, a: usize, d: usize, expired: usize) -> f64 {
        let p = &self.params;
        let (x, d, w) = (stock as i64, d as i64, expired as i64);
        -p.c_v * a as f64 - p.c_h * pos(x - d - w) as f64 - p.c_s * pos(d - x) as f64 - p.c_w * w as f64
    }

    /// Order-up-to rule `[S - I]^+` with `I` the stock on hand plus in transit.
    pub fn base_stock_action(&self, level: usize, state: &SimState) -> usize {
        level.saturating_sub(state.sum(0..state.len()))
    }

    fn table(&self) -> &OutcomeTable {
        self.table.get_or_init(|| self.build_table())
    }

    /// Demand values below the stock level are listed one by one; all demand
    /// at or above it empties the shelf and is merged into one entry.
    fn build_table(&self) -> OutcomeTable {
        let (m, d_max) = (self.params.m, self.params.d_max);
        let probs = self.demand.probs();
        let rows: Vec<Vec<Entry>> = (0..self.radix.len())
            .into_par_iter()
            .map(|s| {
                let comps = self.radix.decode(s);
                let mut x = [0usize; MAX_COMPONENTS];
                self.stock_oldest_first(&comps, &mut x);
                let stock: usize = x[..m].iter().sum();
                let mut row = Vec::with_capacity(stock.min(d_max) + 1);
                for d in 0..stock.min(d_max + 1) {
                    if probs[d] > 0.0 {
                        let (next, reward, _) = self.step_components(&comps, 0, d);
                        row.push(Entry {
                            prob: probs[d],
                            next: self.radix.index_unchecked(&next) as u32,
                            reward,
                        });
                    }
                }
                if stock <= d_max && self.tail_prob[stock] > 0.0 {
                    let (next, _, _) = self.step_components(&comps, 0, stock);
                    let p = self.tail_prob[stock];
                    row.push(Entry {
                        prob: p,
                        next: self.radix.index_unchecked(&next) as u32,
                        reward: -self.params.c_s * self.tail_excess[stock] / p,
                    });
                }
                row
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut entries = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0u32);
        for row in rows {
            entries.extend(row);
            offsets.push(entries.len() as u32);
        }
        OutcomeTable { offsets, entries }
    }
}

impl MdpModel for ScenarioA {
    type Outcome = usize;

    fn cardinality(&self) -> Cardinality {
        self.params.cardinality()
    }

    fn num_states(&self) -> usize {
        self.radix.len()
    }

    fn num_actions(&self) -> usize {
        self.params.a_max + 1
    }

    fn state_components(&self, state: usize) -> Vec<usize> {
        self.radix.decode(state)
    }

    fn state_index(&self, components: &[usize]) -> Result<usize> {
        self.radix.index(components)
    }

    fn state_labels(&self) -> Vec<String> {
        let (m, l) = (self.params.m, self.params.lead_time);
        (1..l)
            .rev()
            .map(|k| format!("o{k}"))
            .chain((1..=m).rev().map(|j| format!("x{j}")))
            .collect()
    }

    fn action_components(&self, action: usize) -> Vec<usize> {
        vec![action]
    }

    fn action_index(&self, components: &[usize]) -> Result<usize> {
        match components {
            [a] if *a <= self.params.a_max => Ok(*a),
            _ => Err(Error::Index(format!("bad action {components:?}"))),
        }
    }

    fn action_labels(&self) -> Vec<String> {
        vec!["order".into()]
    }

    fn enumerate_outcomes(&self) -> Result<Vec<usize>> {
        Ok((0..=self.params.d_max).collect())
    }

    fn outcome_probabilities(&self, _state: usize, _action: usize) -> Vec<f64> {
        self.demand.probs().to_vec()
    }

    fn transition(&self, state: usize, action: usize, demand: &usize) -> (usize, f64) {
        let comps = self.radix.decode(state);
        let (next, reward, _) = self.step_components(&comps, action, *demand);
        (self.radix.index_unchecked(&next), reward)
    }

    #[inline]
    fn for_each_outcome<F: FnMut(f64, usize, f64)>(&self, state: usize, action: usize, mut visit: F) {
        let t = self.table();
        let shift = action * self.radix.strides()[0];
        let order_cost = self.params.c_v * action as f64;
        let (lo, hi) = (t.offsets[state] as usize, t.offsets[state + 1] as usize);
        for e in &t.entries[lo..hi] {
            visit(e.prob, e.next as usize + shift, e.reward - order_cost);
        }
    }

    fn initial_value(&self, _state: usize) -> f64 {
        0.0
    }

    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    fn convergence_test(&self) -> ConvergenceTest {
        ConvergenceTest::ValueSpan
    }

    fn description(&self) -> String {
        let p = &self.params;
        format!(
            "scenario-a;m={};L={};a_max={};d_max={};c_v={:?};c_h={:?};c_s={:?};c_w={:?};mu={:?};cv={:?};gamma={:?};issuing={:?}",
            p.m, p.lead_time, p.a_max, p.d_max, p.c_v, p.c_h, p.c_s, p.c_w, p.mu, p.cv, p.gamma, p.issuing
        )
    }
}

impl Simulator for ScenarioA {
    type Action = usize;

    fn products(&self) -> &'static [&'static str] {
        &["product"]
    }

    fn initial_state(&self) -> SimState {
        SimState::zeros(self.params.width())
    }

    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    fn action_in_range(&self, action: &usize) -> bool {
        *action <= self.params.a_max
    }

    fn action_from_components(&self, components: &[usize]) -> usize {
        components[0]
    }

    fn sample_step(&self, state: &SimState, action: usize, rng: DayStream) -> (SimState, f64, StepStats) {
        let (m, l) = (self.params.m, self.params.lead_time);
        let d = self.sampler.sample(rng.uniform(0));
        let comps = state.to_vec();
        let (next, reward, iss) = self.step_components(&comps, action, d);
        let fresh = comps[l - 1];
        let stock: usize = comps[l - 1..].iter().sum();
        let closing: usize = next[l..].iter().sum();
        let mut stats = StepStats::default();
        stats.products[0] = ProductStep {
            demanded: d as u32,
            filled: iss.filled as u32,
            issued: iss.filled as u32,
            expired: iss.expired as u32,
            received: fresh as u32,
            rejected: 0,
            opening: (stock - fresh) as u32,
            closing: closing as u32,
            held: closing as u32,
        };
        debug_assert_eq!(next.len(), l + m - 1);
        (SimState::from_slice(&next), reward, stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(m: usize, l: usize, issuing: Issuing, c_w: f64) -> ScenarioA {
        ScenarioA::new(ScenarioAParams {
            m,
            lead_time: l,
            issuing,
            c_w,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn fifo_worked_example() {
        let a = model(2, 1, Issuing::Fifo, 7.0);
        let (next, reward, iss) = a.step_components(&[3, 2], 4, 1);
        assert_eq!(iss.expired, 1);
        assert_eq!(next, vec![4, 3]);
        assert_eq!(reward, -22.0);
    }

    #[test]
    fn lifo_worked_example() {
        let a = model(2, 1, Issuing::Lifo, 7.0);
        let (next, reward, iss) = a.step_components(&[3, 2], 4, 1);
        assert_eq!(iss.expired, 2);
        assert_eq!(next, vec![4, 2]);
        assert_eq!(reward, -28.0);
    }

    #[test]
    fn empty_idle_day_costs_nothing() {
        let a = model(3, 2, Issuing::Fifo, 10.0);
        let (next, reward, _) = a.step_components(&[0, 0, 0, 0], 0, 0);
        assert_eq!(next, vec![0; 4]);
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn pipeline_shifts_into_stock() {
        // L = 3: [O2, O1, X2, X1]
        let a = model(2, 3, Issuing::Fifo, 7.0);
        let (next, _, _) = a.step_components(&[5, 6, 1, 0], 2, 0);
        assert_eq!(next, vec![2, 5, 6, 1]);
    }

    #[test]
    fn zero_demand_expires_oldest_under_both_rules() {
        for issuing in [Issuing::Fifo, Issuing::Lifo] {
            let iss = issue(&[4, 2, 7], 0, issuing);
            assert_eq!(iss.expired, 4);
            assert_eq!(&iss.aged[..2], &[2, 7]);
        }
    }

    #[test]
    fn cardinalities() {
        assert_eq!(model(2, 1, Issuing::Fifo, 7.0).num_states(), 121);
        assert_eq!(model(3, 2, Issuing::Fifo, 7.0).num_states(), 14_641);
        let c = ScenarioAParams { m: 5, lead_time: 2, ..Default::default() }.cardinality();
        assert_eq!((c.states, c.actions, c.outcomes), (1_771_561, 11, 101));
    }

    #[test]
    fn experiment_grid() {
        let p = ScenarioAParams::experiment(2, 1).unwrap();
        assert_eq!((p.lead_time, p.c_w, p.issuing), (1, 7.0, Issuing::Lifo));
        let p = ScenarioAParams::experiment(2, 4).unwrap();
        assert_eq!((p.lead_time, p.c_w, p.issuing), (1, 10.0, Issuing::Fifo));
        let p = ScenarioAParams::experiment(3, 6).unwrap();
        assert_eq!((p.lead_time, p.c_w, p.issuing), (2, 7.0, Issuing::Fifo));
        assert!(ScenarioAParams::experiment(2, 9).is_err());
    }

    #[test]
    fn base_stock_examples() {
        let a = model(2, 2, Issuing::Fifo, 7.0);
        assert_eq!(a.base_stock_action(5, &SimState::zeros(3)), 5);
        assert_eq!(a.base_stock_action(5, &SimState::from_slice(&[2, 2, 1])), 0);
        assert_eq!(a.base_stock_action(5, &SimState::from_slice(&[3, 2, 4])), 0);
        assert_eq!(a.base_stock_action(7, &SimState::from_slice(&[1, 0, 2])), 4);
    }

    #[test]
    fn merged_outcomes_agree_with_literal_backup() {
        for (m, l, issuing) in [(2, 1, Issuing::Fifo), (2, 2, Issuing::Lifo), (3, 1, Issuing::Lifo)] {
            let a = model(m, l, issuing, 10.0);
            let values: Vec<f64> = (0..a.num_states()).map(|s| ((s * 7919) % 1000) as f64 * -0.37).collect();
            let outcomes = a.enumerate_outcomes().unwrap();
            for s in (0..a.num_states()).step_by(17) {
                for act in [0, 3, 10] {
                    let probs = a.outcome_probabilities(s, act);
                    let literal: f64 = outcomes
                        .iter()
                        .zip(&probs)
                        .map(|(d, p)| {
                            let (n, r) = a.transition(s, act, d);
                            p * (r + 0.99 * values[n])
                        })
                        .sum();
                    let mut fast = 0.0;
                    let mut mass = 0.0;
                    a.for_each_outcome(s, act, |p, n, r| {
                        fast += p * (r + 0.99 * values[n]);
                        mass += p;
                    });
                    assert!((literal - fast).abs() < 1e-9 * literal.abs().max(1.0), "{literal} vs {fast}");
                    assert!((mass - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
