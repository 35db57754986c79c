//! Platelet bank with weekday demand and uncertain remaining life on arrival.
//!
//! Orders arrive before the same day's demand. Each unit's remaining useful
//! life on arrival is drawn from a multinomial whose log-odds may depend on
//! the order quantity. Stock per age is capped at `A_max`; units over the cap
//! are rejected at delivery. Demand is filled oldest unit first.
//!
//! State: `[tau, X_{m-1}, .., X_1]` with `tau` the weekday (0 = Monday) and
//! `X_i` the stock with `i` days of life left. Outcome: demand and receipts
//! `(d, y)` with `y` indexed by remaining life.

use serde::{Deserialize, Serialize};

use super::pos;
use crate::dist::{binomial_inverse_cdf, multinomial_pmf, truncated_negbinom_pmf, CdfSampler, DiscretePmf};
use crate::error::{Error, Result};
use crate::mdp::{binomial_coefficient, compositions, Cardinality, ConvergenceTest, MdpModel, MixedRadix};
use crate::rng::DayStream;
use crate::sim::{ProductStep, SimState, Simulator, StepStats, MAX_COMPONENTS};

pub const WEEKDAYS: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioCParams {
    pub m: usize,
    pub d_max: usize,
    pub a_max: usize,
    pub c_f: f64,
    pub c_h: f64,
    pub c_s: f64,
    pub c_w: f64,
    pub gamma: f64,
    /// Negative binomial target successes per weekday.
    pub demand_n: [f64; WEEKDAYS],
    /// Negative binomial mean per weekday.
    pub demand_delta: [f64; WEEKDAYS],
    /// Log-odds intercepts `c_0^k` for `k = 2..=m`, relative to one day left.
    pub c0: Vec<f64>,
    /// Log-odds slopes `c_1^k` on the order quantity; all zero when the
    /// remaining life does not depend on the order.
    pub c1: Vec<f64>,
}

impl Default for ScenarioCParams {
    fn default() -> Self {
        ScenarioCParams {
            m: 3,
            d_max: 20,
            a_max: 20,
            c_f: 10.0,
            c_h: 1.0,
            c_s: 20.0,
            c_w: 5.0,
            gamma: 0.95,
            demand_n: [3.5, 11.0, 7.2, 11.1, 5.9, 5.5, 2.2],
            demand_delta: [5.7, 6.9, 6.5, 6.2, 5.8, 3.3, 3.4],
            c0: vec![1.0, 0.5],
            c1: vec![0.0, 0.0],
        }
    }
}

impl ScenarioCParams {
    /// Experiment 1 has exogenous remaining life, experiment 2 endogenous.
    pub fn experiment(m: usize, exp: usize) -> Result<Self> {
        let (c0, c1): (Vec<f64>, Vec<f64>) = match (m, exp) {
            (3, 1) => (vec![1.0, 0.5], vec![0.0; 2]),
            (3, 2) => (vec![1.0, 0.5], vec![0.4, 0.8]),
            (5, 1) => (vec![1.6, 2.6, 2.8, 1.6], vec![0.0; 4]),
            (5, 2) => (vec![1.9, 3.1, 3.1, 2.5], vec![-0.03, -0.06, -0.03, -0.09]),
            (8, 1) => (vec![0.8, 1.4, 1.9, 2.3, 1.7, 1.2, 0.8], vec![0.0; 7]),
            (8, 2) => (
                vec![0.8, 1.4, 1.9, 2.3, 1.7, 1.2, 0.8],
                vec![-0.03, -0.04, -0.05, -0.06, -0.07, -0.08, -0.09],
            ),
            _ => return Err(Error::Parameter(format!("no scenario C experiment {exp} for m={m}"))),
        };
        Ok(ScenarioCParams {
            m,
            c0,
            c1,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.m > MAX_COMPONENTS {
            return Err(Error::Parameter(format!("m must lie in 2..={MAX_COMPONENTS}")));
        }
        if self.c0.len() != self.m - 1 || self.c1.len() != self.m - 1 {
            return Err(Error::Parameter(format!(
                "c0 and c1 need {} entries each, got {} and {}",
                self.m - 1,
                self.c0.len(),
                self.c1.len()
            )));
        }
        if self.a_max == 0 || self.a_max > u16::MAX as usize {
            return Err(Error::Parameter(format!("a_max {} out of range", self.a_max)));
        }
        if self.d_max == 0 {
            return Err(Error::Parameter("d_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        let finite = [self.c_f, self.c_h, self.c_s, self.c_w]
            .iter()
            .chain(&self.c0)
            .chain(&self.c1)
            .all(|c| c.is_finite());
        if !finite {
            return Err(Error::Parameter("costs and coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> Cardinality {
        let base = self.a_max as u128 + 1;
        let states = base
            .checked_pow(self.m as u32 - 1)
            .and_then(|x| x.checked_mul(WEEKDAYS as u128))
            .unwrap_or(u128::MAX);
        Cardinality {
            states,
            actions: base,
            outcomes: (self.d_max as u128 + 1)
                .saturating_mul(binomial_coefficient((self.a_max + self.m) as u64, self.m as u64)),
        }
    }

    /// Canonical parameter string, also the MDP's fingerprint source.
    pub fn description(&self) -> String {
        format!(
            "scenario-c;m={};d_max={};a_max={};c_f={:?};c_h={:?};c_s={:?};c_w={:?};gamma={:?};n={:?};delta={:?};c0={:?};c1={:?}",
            self.m, self.d_max, self.a_max, self.c_f, self.c_h, self.c_s, self.c_w, self.gamma, self.demand_n,
            self.demand_delta, self.c0, self.c1
        )
    }

    /// Probabilities of each remaining life `1..=m` for an order of `a` units.
    pub fn receipt_category_probs(&self, a: usize) -> Vec<f64> {
        let odds: Vec<f64> = self
            .c0
            .iter()
            .zip(&self.c1)
            .map(|(c0, c1)| (c0 + c1 * a as f64).exp())
            .collect();
        let p1 = 1.0 / (1.0 + odds.iter().sum::<f64>());
        std::iter::once(p1).chain(odds.iter().map(|o| p1 * o)).collect()
    }
}

/// Result of one day given receipts and demand, everything by remaining life
/// (index 0 = one day left).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DayOutcome {
    /// Stock carried into tomorrow, `X'_1..X'_{m-1}`.
    pub next: [usize; MAX_COMPONENTS],
    pub reward: f64,
    pub filled: usize,
    pub expired: usize,
    pub accepted: usize,
    /// Stock left after demand, including units about to expire.
    pub held: usize,
}

/// A receipt vector and its probability.
#[derive(Clone, Debug)]
struct Receipt {
    prob: f64,
    y: Vec<usize>,
}

pub struct ScenarioC {
    params: ScenarioCParams,
    demand: Vec<DiscretePmf>,
    samplers: Vec<CdfSampler>,
    /// Per weekday, `P(D >= x)` and `E[(D - x)^+]` for `x in 0..=d_max + 1`.
    tail_prob: Vec<Vec<f64>>,
    tail_excess: Vec<Vec<f64>>,
    /// Receipt category probabilities per order quantity.
    receipt_probs: Vec<Vec<f64>>,
}

impl ScenarioC {
    pub fn new(params: ScenarioCParams) -> Result<Self> {
        params.validate()?;
        let demand = (0..WEEKDAYS)
            .map(|t| truncated_negbinom_pmf(params.demand_n[t], params.demand_delta[t], params.d_max))
            .collect::<Result<Vec<_>>>()?;
        let mut tail_prob = Vec::with_capacity(WEEKDAYS);
        let mut tail_excess = Vec::with_capacity(WEEKDAYS);
        for pmf in &demand {
            let probs = pmf.probs();
            let mut tp = vec![0.0; params.d_max + 2];
            let mut te = vec![0.0; params.d_max + 2];
            for x in (0..=params.d_max).rev() {
                tp[x] = tp[x + 1] + probs[x];
                te[x] = te[x + 1] + tp[x + 1];
            }
            tail_prob.push(tp);
            tail_excess.push(te);
        }
        let receipt_probs = (0..=params.a_max).map(|a| params.receipt_category_probs(a)).collect();
        Ok(ScenarioC {
            samplers: demand.iter().map(DiscretePmf::sampler).collect(),
            demand,
            tail_prob,
            tail_excess,
            receipt_probs,
            params,
        })
    }

    pub fn params(&self) -> &ScenarioCParams {
        &self.params
    }

    pub fn weekday_demand_pmf(&self, tau: usize) -> &DiscretePmf {
        &self.demand[tau]
    }

    pub fn receipt_category_probs(&self, a: usize) -> &[f64] {
        &self.receipt_probs[a]
    }

    /// Stock by remaining life (index 0 = one day left) from state components.
    fn stock_by_life(&self, comps: &[usize], out: &mut [usize; MAX_COMPONENTS]) {
        let m = self.params.m;
        for i in 0..m - 1 {
            out[i] = comps[m - 1 - i];
        }
    }

    /// Delivers `y`, fills `d` oldest first and ages the stock. `x` and `y`
    /// are indexed by remaining life; `x` has `m - 1` entries, `y` has `m`.
    pub fn apply(&self, x: &[usize], y: &[usize], d: usize) -> DayOutcome {
        let p = &self.params;
        let m = p.m;
        let a: usize = y.iter().sum();
        let mut z = [0usize; MAX_COMPONENTS];
        for i in 0..m - 1 {
            z[i] = (x[i] + y[i]).min(p.a_max);
        }
        z[m - 1] = y[m - 1];
        let total: usize = z[..m].iter().sum();
        let accepted = total - x.iter().sum::<usize>();
        let (total_i, d_i) = (total as i64, d as i64);
        let expired = pos(z[0] as i64 - d_i) as usize;
        let fixed = if a > 0 { p.c_f } else { 0.0 };
        let reward = -fixed
            - p.c_h * pos(total_i - d_i) as f64
            - p.c_s * pos(d_i - total_i) as f64
            - p.c_w * expired as f64;
        let mut next = [0usize; MAX_COMPONENTS];
        let mut cum = 0i64;
        for j in 0..m - 1 {
            cum += z[j] as i64;
            next[j] = pos(z[j + 1] as i64 - pos(d_i - cum)) as usize;
        }
        DayOutcome {
            next,
            reward,
            filled: d.min(total),
            expired,
            accepted,
            held: pos(total_i - d_i) as usize,
        }
    }

    /// Next-state components `[tau', X'_{m-1}, .., X'_1]`.
    fn next_components(&self, tau: usize, next_by_life: &[usize]) -> Vec<usize> {
        let m = self.params.m;
        std::iter::once((tau + 1) % WEEKDAYS)
            .chain((0..m - 1).rev().map(|i| next_by_life[i]))
            .collect()
    }

    /// Weekday `(s, S)` rule: order up to `S^tau` when stock is at or below
    /// `s^tau`, and never when `s^tau >= S^tau`.
    pub fn weekday_ss_action(&self, s: &[usize; WEEKDAYS], big_s: &[usize; WEEKDAYS], state: &SimState) -> usize {
        let tau = state.get(0);
        let stock = state.sum(1..state.len());
        if s[tau] < big_s[tau] && stock <= s[tau] {
            big_s[tau].saturating_sub(stock)
        } else {
            0
        }
    }

    /// Draws remaining lives for `a` units by sequential binomials, using
    /// draws `1..m` of the day's stream.
    pub fn sample_receipts(&self, a: usize, rng: &DayStream) -> [usize; MAX_COMPONENTS] {
        let m = self.params.m;
        let probs = &self.receipt_probs[a];
        let mut y = [0usize; MAX_COMPONENTS];
        let mut left = a;
        let mut rest = 1.0;
        for k in 0..m - 1 {
            if left == 0 {
                break;
            }
            let q = (probs[k] / rest).clamp(0.0, 1.0);
            let n = binomial_inverse_cdf(left as u64, q, rng.uniform(1 + k as u64)) as usize;
            y[k] = n;
            left -= n;
            rest -= probs[k];
        }
        y[m - 1] += left;
        y
    }
}

impl Simulator for ScenarioC {
    type Action = usize;

    fn products(&self) -> &'static [&'static str] {
        &["platelets"]
    }

    fn initial_state(&self) -> SimState {
        SimState::zeros(self.params.m)
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
        let m = self.params.m;
        let comps = state.to_vec();
        let tau = comps[0];
        let d = self.samplers[tau].sample(rng.uniform(0));
        let y = self.sample_receipts(action, &rng);
        let mut x = [0usize; MAX_COMPONENTS];
        self.stock_by_life(&comps, &mut x);
        let out = self.apply(&x[..m - 1], &y[..m], d);
        let next = self.next_components(tau, &out.next);
        let mut stats = StepStats::default();
        stats.products[0] = ProductStep {
            demanded: d as u32,
            filled: out.filled as u32,
            issued: out.filled as u32,
            expired: out.expired as u32,
            received: out.accepted as u32,
            rejected: (action - out.accepted) as u32,
            opening: x[..m - 1].iter().sum::<usize>() as u32,
            closing: out.next[..m - 1].iter().sum::<usize>() as u32,
            held: out.held as u32,
        };
        (SimState::from_slice(&next), out.reward, stats)
    }
}

/// The scenario as an MDP. Construction fails with a capacity error when the
/// state space is too large to enumerate.
pub struct ScenarioCMdp {
    sim: ScenarioC,
    radix: MixedRadix,
    /// Positive-probability receipt vectors per order quantity.
    receipts: Vec<Vec<Receipt>>,
}

impl ScenarioCMdp {
    pub fn new(params: ScenarioCParams) -> Result<Self> {
        let sim = ScenarioC::new(params)?;
        let p = sim.params();
        let radix = MixedRadix::new(
            std::iter::once(WEEKDAYS)
                .chain(std::iter::repeat_n(p.a_max + 1, p.m - 1))
                .collect(),
        )?;
        let receipts = (0..=p.a_max)
            .map(|a| {
                let probs = sim.receipt_category_probs(a);
                let mut list = Vec::new();
                for y in compositions(a, p.m) {
                    let counts: Vec<u64> = y.iter().map(|&v| v as u64).collect();
                    let prob = multinomial_pmf(&counts, probs)?;
                    if prob > 0.0 {
                        list.push(Receipt { prob, y });
                    }
                }
                Ok(list)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScenarioCMdp { sim, radix, receipts })
    }

    pub fn simulator(&self) -> &ScenarioC {
        &self.sim
    }

    pub fn params(&self) -> &ScenarioCParams {
        self.sim.params()
    }

    /// Receipt vectors and probabilities for an order of `a` units.
    pub fn receipt_distribution(&self, a: usize) -> impl Iterator<Item = (&[usize], f64)> {
        self.receipts[a].iter().map(|r| (r.y.as_slice(), r.prob))
    }
}

impl MdpModel for ScenarioCMdp {
    type Outcome = (usize, Vec<usize>);

    fn cardinality(&self) -> Cardinality {
        self.params().cardinality()
    }

    fn num_states(&self) -> usize {
        self.radix.len()
    }

    fn num_actions(&self) -> usize {
        self.params().a_max + 1
    }

    fn state_components(&self, state: usize) -> Vec<usize> {
        self.radix.decode(state)
    }

    fn state_index(&self, components: &[usize]) -> Result<usize> {
        self.radix.index(components)
    }

    fn state_labels(&self) -> Vec<String> {
        std::iter::once("weekday".to_string())
            .chain((1..self.params().m).rev().map(|i| format!("x{i}")))
            .collect()
    }

    fn action_components(&self, action: usize) -> Vec<usize> {
        vec![action]
    }

    fn action_index(&self, components: &[usize]) -> Result<usize> {
        match components {
            [a] if *a <= self.params().a_max => Ok(*a),
            _ => Err(Error::Index(format!("bad action {components:?}"))),
        }
    }

    fn action_labels(&self) -> Vec<String> {
        vec!["order".into()]
    }

    /// Demand outer, then every receipt vector with total at most `A_max`.
    fn enumerate_outcomes(&self) -> Result<Vec<(usize, Vec<usize>)>> {
        let p = self.params();
        let count = p.cardinality().outcomes;
        if count > 50_000_000 {
            return Err(Error::Capacity {
                required: count,
                limit: 50_000_000,
            });
        }
        let ys: Vec<Vec<usize>> = (0..=p.a_max).flat_map(|a| compositions(a, p.m)).collect();
        Ok((0..=p.d_max)
            .flat_map(|d| ys.iter().map(move |y| (d, y.clone())))
            .collect())
    }

    fn outcome_probabilities(&self, state: usize, action: usize) -> Vec<f64> {
        let p = self.params();
        let tau = self.radix.decode(state)[0];
        let pd = self.sim.demand[tau].probs();
        let mut py = Vec::new();
        for a in 0..=p.a_max {
            if a == action {
                py.extend(self.receipts[a].iter().map(|r| r.prob));
            } else {
                py.extend(std::iter::repeat_n(0.0, self.receipts[a].len()));
            }
        }
        (0..=p.d_max).flat_map(|d| py.iter().map(move |q| pd[d] * q)).collect()
    }

    /// The fixed cost follows the receipts; outcomes whose receipts do not
    /// add up to the order have zero probability.
    fn transition(&self, state: usize, _action: usize, outcome: &(usize, Vec<usize>)) -> (usize, f64) {
        let (d, y) = outcome;
        let comps = self.radix.decode(state);
        let mut x = [0usize; MAX_COMPONENTS];
        self.sim.stock_by_life(&comps, &mut x);
        let out = self.sim.apply(&x[..self.params().m - 1], y, *d);
        let next = self.sim.next_components(comps[0], &out.next);
        (self.radix.index_unchecked(&next), out.reward)
    }

    /// Demand at or above the delivered stock empties the shelf, so those
    /// values are merged into one outcome per receipt vector.
    #[inline]
    fn for_each_outcome<F: FnMut(f64, usize, f64)>(&self, state: usize, action: usize, mut visit: F) {
        let p = self.params();
        let m = p.m;
        let mut comps = [0usize; MAX_COMPONENTS];
        self.radix.decode_into(state, &mut comps[..m]);
        let tau = comps[0];
        let mut x = [0usize; MAX_COMPONENTS];
        self.sim.stock_by_life(&comps, &mut x);
        let pd = self.sim.demand[tau].probs();
        let strides = self.radix.strides();
        let next_tau = ((tau + 1) % WEEKDAYS) * strides[0];
        let empty_reward_base = if action > 0 { -p.c_f } else { 0.0 };
        for r in &self.receipts[action] {
            let total: usize = (0..m - 1).map(|i| (x[i] + r.y[i]).min(p.a_max)).sum::<usize>() + r.y[m - 1];
            for (d, &pdd) in pd.iter().enumerate().take(total.min(p.d_max + 1)) {
                if pdd > 0.0 {
                    let out = self.sim.apply(&x[..m - 1], &r.y, d);
                    let mut index = next_tau;
                    for j in 0..m - 1 {
                        // Component 1 + k holds X'_{m-1-k}.
                        index += out.next[j] * strides[m - 1 - j];
                    }
                    visit(r.prob * pdd, index, out.reward);
                }
            }
            if total <= p.d_max {
                let tail = self.sim.tail_prob[tau][total];
                if tail > 0.0 {
                    let shortage = self.sim.tail_excess[tau][total] / tail;
                    visit(r.prob * tail, next_tau, empty_reward_base - p.c_s * shortage);
                }
            }
        }
    }

    fn initial_value(&self, _state: usize) -> f64 {
        0.0
    }

    fn gamma(&self) -> f64 {
        self.params().gamma
    }

    fn convergence_test(&self) -> ConvergenceTest {
        ConvergenceTest::PeriodicSpan
    }

    fn period(&self) -> usize {
        WEEKDAYS
    }

    fn description(&self) -> String {
        self.params().description()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receipt_probs_match_closed_form() {
        let p = ScenarioCParams::experiment(3, 1).unwrap();
        let probs = p.receipt_category_probs(7);
        assert!((probs[0] - 0.186_323_723_225_847_58).abs() < 1e-15);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(probs, p.receipt_category_probs(0));
        let flat = ScenarioCParams {
            c0: vec![0.0; 2],
            ..Default::default()
        };
        for q in flat.receipt_category_probs(5) {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        let endo = ScenarioCParams::experiment(3, 2).unwrap();
        assert_ne!(endo.receipt_category_probs(0), endo.receipt_category_probs(5));
    }

    #[test]
    fn cardinalities() {
        let c = ScenarioCParams::experiment(3, 1).unwrap().cardinality();
        assert_eq!((c.states, c.actions, c.outcomes), (3_087, 21, 37_191));
        let c = ScenarioCParams::experiment(5, 2).unwrap().cardinality();
        assert_eq!((c.states, c.outcomes), (1_361_367, 1_115_730));
        let c = ScenarioCParams::experiment(8, 1).unwrap().cardinality();
        assert_eq!(c.states, 12_607_619_787);
    }

    #[test]
    fn m8_is_too_large_to_enumerate() {
        match ScenarioCMdp::new(ScenarioCParams::experiment(8, 1).unwrap()) {
            Err(Error::Capacity { required, .. }) => assert_eq!(required, 12_607_619_787),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("m=8 should not build"),
        }
        assert!(ScenarioC::new(ScenarioCParams::experiment(8, 2).unwrap()).is_ok());
    }

    #[test]
    fn fresh_delivery_example() {
        let c = ScenarioC::new(ScenarioCParams::experiment(3, 1).unwrap()).unwrap();
        let out = c.apply(&[0, 0], &[0, 0, 2], 1);
        assert_eq!(out.reward, -11.0);
        assert_eq!(&out.next[..2], &[0, 1]);
        assert_eq!((out.filled, out.expired, out.held), (1, 0, 1));
    }

    #[test]
    fn idle_day_costs_nothing() {
        let c = ScenarioC::new(ScenarioCParams::default()).unwrap();
        let out = c.apply(&[0, 0], &[0, 0, 0], 0);
        assert_eq!(out.reward, 0.0);
        assert_eq!(c.next_components(6, &out.next), vec![0, 0, 0]);
    }

    #[test]
    fn capacity_clamp_rejects_excess() {
        let c = ScenarioC::new(ScenarioCParams::default()).unwrap();
        let out = c.apply(&[20, 0], &[3, 0, 0], 0);
        assert_eq!(out.accepted, 0);
        assert_eq!(out.expired, 20);
        assert_eq!(out.reward, -10.0 - 20.0 - 100.0);
    }

    #[test]
    fn oldest_units_are_issued_first() {
        let c = ScenarioC::new(ScenarioCParams::default()).unwrap();
        // X_1 = 2, X_2 = 3, fresh 4; demand 4 takes both old units and 2 of X_2.
        let out = c.apply(&[2, 3], &[0, 0, 4], 4);
        assert_eq!(&out.next[..2], &[1, 4]);
        assert_eq!(out.expired, 0);
    }

    #[test]
    fn ss_rule() {
        let c = ScenarioC::new(ScenarioCParams::default()).unwrap();
        let s = [6, 7, 7, 6, 6, 3, 3];
        let big = [13, 12, 14, 11, 11, 8, 7];
        assert_eq!(c.weekday_ss_action(&s, &big, &SimState::from_slice(&[0, 2, 3])), 8);
        assert_eq!(c.weekday_ss_action(&s, &big, &SimState::from_slice(&[0, 4, 3])), 0);
        let never = [9; 7];
        assert_eq!(c.weekday_ss_action(&never, &[9; 7], &SimState::from_slice(&[2, 0, 0])), 0);
    }

    #[test]
    fn receipts_sum_to_one_for_every_action() {
        let mdp = ScenarioCMdp::new(ScenarioCParams::experiment(3, 2).unwrap()).unwrap();
        for a in 0..=20 {
            let mass: f64 = mdp.receipt_distribution(a).map(|(_, p)| p).sum();
            assert!((mass - 1.0).abs() < 1e-9, "a={a} {mass}");
        }
    }

    #[test]
    fn merged_outcomes_agree_with_literal_backup() {
        let mdp = ScenarioCMdp::new(ScenarioCParams::experiment(3, 2).unwrap()).unwrap();
        let outcomes = mdp.enumerate_outcomes().unwrap();
        assert_eq!(outcomes.len(), 37_191);
        let values: Vec<f64> = (0..mdp.num_states()).map(|s| ((s * 31) % 97) as f64 - 40.0).collect();
        for s in (0..mdp.num_states()).step_by(211) {
            for a in [0, 1, 9, 20] {
                let probs = mdp.outcome_probabilities(s, a);
                let literal: f64 = outcomes
                    .iter()
                    .zip(&probs)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(o, p)| {
                        let (n, r) = mdp.transition(s, a, o);
                        p * (r + 0.95 * values[n])
                    })
                    .sum();
                let mut fast = 0.0;
                let mut mass = 0.0;
                mdp.for_each_outcome(s, a, |p, n, r| {
                    fast += p * (r + 0.95 * values[n]);
                    mass += p;
                });
                assert!((literal - fast).abs() < 1e-9 * literal.abs().max(1.0), "{literal} vs {fast}");
                assert!((mass - 1.0).abs() < 1e-9);
            }
        }
    }
}
