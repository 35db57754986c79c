//! Two perishable products with one-way substitution: unmet demand for B may
//! be filled from A's stock, accepted by each customer independently with
//! probability `rho`. Both products are issued FIFO and have the same useful
//! life `m`; orders arrive before the next day's demand.
//!
//! State: `[X^a_m, .., X^a_1, X^b_m, .., X^b_1]`. Outcome: the issued pair
//! `(h^a, h^b)`. Rewards are sales revenue minus ordering cost, undiscounted.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{binomial_inverse_cdf, binomial_pmf, poisson_pmf_cdf, poisson_quantile, CdfSampler, PoissonTable};
use crate::error::{Error, Result};
use crate::mdp::{Cardinality, ConvergenceTest, MdpModel, MixedRadix};
use crate::rng::DayStream;
use crate::sim::{ProductStep, SimState, Simulator, StepStats, MAX_COMPONENTS};

/// Tail mass below which infinite Poisson sums are cut off.
const TAIL_CUTOFF: f64 = 1e-12;

/// Above this many precomputed outcome entries the model computes outcomes
/// on the fly instead.
const TABLE_ENTRY_BUDGET: u128 = 32_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBParams {
    pub m: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    /// Explicit order caps; derived from the newsvendor quantile when absent.
    pub a_max_a: Option<usize>,
    pub a_max_b: Option<usize>,
    pub c_v_a: f64,
    pub c_v_b: f64,
    pub c_r_a: f64,
    pub c_r_b: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl Default for ScenarioBParams {
    fn default() -> Self {
        ScenarioBParams {
            m: 2,
            mu_a: 5.0,
            mu_b: 5.0,
            a_max_a: None,
            a_max_b: None,
            c_v_a: 0.5,
            c_v_b: 0.5,
            c_r_a: 1.0,
            c_r_b: 1.0,
            rho: 0.5,
            gamma: 1.0,
        }
    }
}

/// Order cap from the newsvendor critical ratio `(C_r - C_v) / C_r` applied
/// to demand over the useful life.
pub fn newsvendor_max_order(m: usize, mu: f64, c_r: f64, c_v: f64) -> Result<usize> {
    if !(c_r > 0.0) {
        return Err(Error::Parameter(format!("revenue must be positive, got {c_r}")));
    }
    let q = ((c_r - c_v) / c_r).clamp(0.0, 1.0);
    poisson_quantile(m as f64 * mu, q)
}

impl ScenarioBParams {
    /// Named experiments: `exp1`..`exp4` for `m = 2, 3` (`exp3`, `exp4` only
    /// for `m = 3`) and `p1`..`p4`, which always use `m = 2`.
    pub fn preset(m: usize, name: &str) -> Result<Self> {
        let base = |mu_a: f64, mu_b: f64| ScenarioBParams {
            m,
            mu_a,
            mu_b,
            ..Default::default()
        };
        let capped = |mu_a, mu_b, a, b| ScenarioBParams {
            a_max_a: Some(a),
            a_max_b: Some(b),
            ..base(mu_a, mu_b)
        };
        let p = match (m, name) {
            (_, "exp1") => base(5.0, 5.0),
            (_, "exp2") => base(7.0, 3.0),
            (3, "exp3") => capped(5.0, 5.0, 13, 13),
            (3, "exp4") => capped(7.0, 3.0, 20, 4),
            (_, "p1") => ScenarioBParams { m: 2, ..base(5.0, 5.0) },
            (_, "p2") => ScenarioBParams { m: 2, ..base(5.0, 6.0) },
            (_, "p3") => ScenarioBParams { m: 2, ..base(6.0, 6.0) },
            (_, "p4") => ScenarioBParams { m: 2, ..capped(7.0, 7.0, 13, 13) },
            _ => return Err(Error::Parameter(format!("no scenario B experiment {name:?} for m={m}"))),
        };
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || 2 * self.m > MAX_COMPONENTS {
            return Err(Error::Parameter(format!("m must lie in 1..={}", MAX_COMPONENTS / 2)));
        }
        for (name, mu) in [("mu_a", self.mu_a), ("mu_b", self.mu_b)] {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Parameter(format!("rho {} outside [0, 1]", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        for (name, c) in [
            ("c_v_a", self.c_v_a),
            ("c_v_b", self.c_v_b),
            ("c_r_a", self.c_r_a),
            ("c_r_b", self.c_r_b),
        ] {
            if !c.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite")));
            }
        }
        let (a, b) = self.a_max()?;
        // Heuristic orders go up to twice the cap and must fit in u16 stock.
        if a.max(b) * 2 * self.m > u16::MAX as usize {
            return Err(Error::Parameter(format!("order caps ({a}, {b}) too large")));
        }
        Ok(())
    }

    /// Resolved order caps `(A^a_max, A^b_max)`.
    pub fn a_max(&self) -> Result<(usize, usize)> {
        let a = match self.a_max_a {
            Some(a) => a,
            None => newsvendor_max_order(self.m, self.mu_a, self.c_r_a, self.c_v_a)?,
        };
        let b = match self.a_max_b {
            Some(b) => b,
            None => newsvendor_max_order(self.m, self.mu_b, self.c_r_b, self.c_v_b)?,
        };
        Ok((a, b))
    }

    pub fn cardinality(&self) -> Result<Cardinality> {
        let (a, b) = self.a_max()?;
        let (a, b) = (a as u128, b as u128);
        let m = self.m as u32;
        let states = (a + 1)
            .checked_pow(m)
            .and_then(|x| x.checked_mul((b + 1).checked_pow(m)?))
            .unwrap_or(u128::MAX);
        Ok(Cardinality {
            states,
            actions: (a + 1) * (b + 1),
            outcomes: (self.m as u128 * a + 1) * (self.m as u128 * b + 1),
        })
    }
}

/// Distribution of substitution demand.
///
/// `pu[y][d]` is `P(D^u = d | D^b >= y)`, the number of B customers that
/// accept A when B's stock is `y`; `pz[y][d]` is `P(D^z = d | D^b >= y)` for
/// the total demand `D^z = D^a + D^u` on A's stock. Both cover
/// `d in 0..=d_max` and `y in 0..=m * A^b_max`.
#[derive(Clone, Debug)]
pub struct SubstitutionTables {
    pub d_max: usize,
    pub pu: Vec<Vec<f64>>,
    pub pz: Vec<Vec<f64>>,
}

impl SubstitutionTables {
    pub fn build(mu_a: f64, mu_b: f64, rho: f64, y_max: usize, d_max: usize) -> Result<Self> {
        // B demand beyond the cutoff is treated as impossible, so stock
        // levels past it never see substitution.
        let demand_b = poisson_pmf_cdf(mu_b, poisson_upper(mu_b, 0))?;
        let demand_a = poisson_pmf_cdf(mu_a, poisson_upper(mu_a, d_max))?;
        let pb = &demand_b.probs;
        // Tail sums from the top keep small survival values accurate.
        let mut tail = vec![0.0; pb.len().max(y_max) + 1];
        for k in (0..pb.len()).rev() {
            tail[k] = tail[k + 1] + pb[k];
        }
        let pu: Vec<Vec<f64>> = (0..=y_max)
            .into_par_iter()
            .map(|y| {
                let mut row = vec![0.0; d_max + 1];
                if tail[y] <= 0.0 {
                    row[0] = 1.0;
                    return row;
                }
                // c is the excess B demand D^b - y.
                for c in 0..pb.len().saturating_sub(y) {
                    let w = pb[y + c];
                    if w == 0.0 {
                        continue;
                    }
                    for (d, slot) in row.iter_mut().enumerate().take(c.min(d_max) + 1) {
                        *slot += w * binomial_pmf(d as u64, c as u64, rho);
                    }
                }
                row.iter_mut().for_each(|p| *p /= tail[y]);
                row
            })
            .collect();
        let pa = &demand_a.probs;
        let pz = pu
            .iter()
            .map(|u| {
                (0..=d_max)
                    .map(|d| (0..=d.min(pa.len() - 1)).map(|k| pa[k] * u[d - k]).sum())
                    .collect()
            })
            .collect();
        Ok(SubstitutionTables { d_max, pu, pz })
    }
}

/// Smallest `n >= at_least` with Poisson mass beyond `n` below the cutoff.
fn poisson_upper(mean: f64, at_least: usize) -> usize {
    let mut n = mean.ceil() as usize;
    while poisson_ln_tail_bound(mean, n) > TAIL_CUTOFF.ln() {
        n += 1;
    }
    n.max(at_least)
}

/// Chernoff bound on `ln P(D > n)`.
fn poisson_ln_tail_bound(mean: f64, n: usize) -> f64 {
    let x = n as f64 + 1.0;
    if mean == 0.0 || x <= mean {
        return 0.0;
    }
    -mean + x - x * (x / mean).ln()
}

/// Joint pmf of issued quantities for fixed stock totals, row-major over
/// `h^a in 0..=i_a`, `h^b in 0..=i_b`.
#[derive(Clone, Debug)]
pub struct IssuedPmf {
    pub i_a: usize,
    pub i_b: usize,
    pub probs: Vec<f64>,
}

impl IssuedPmf {
    #[inline]
    pub fn prob(&self, h_a: usize, h_b: usize) -> f64 {
        if h_a > self.i_a || h_b > self.i_b {
            0.0
        } else {
            self.probs[h_a * (self.i_b + 1) + h_b]
        }
    }
}

/// Per-product FIFO issue: takes `h` units oldest first from `x` (freshest
/// first, `x[m-1]` oldest). Returns the aged stock shifted one slot older
/// with the freshest slot set to `order`, and the expired count.
#[inline]
fn fifo_issue(x: &[usize], h: usize, order: usize, out: &mut [usize]) -> usize {
    let m = x.len();
    let mut left = h;
    let mut remaining = [0usize; MAX_COMPONENTS];
    for j in (0..m).rev() {
        let take = left.min(x[j]);
        remaining[j] = x[j] - take;
        left -= take;
    }
    // remaining[m-1] is the leftover oldest stock, which expires.
    out[0] = order;
    out[1..m].copy_from_slice(&remaining[..m - 1]);
    remaining[m - 1]
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    prob: f64,
    /// Successor index with both fresh slots empty.
    next: u32,
    revenue: f64,
}

struct OutcomeTable {
    offsets: Vec<u64>,
    entries: Vec<Entry>,
}

pub struct ScenarioB {
    params: ScenarioBParams,
    a_max: (usize, usize),
    radix: MixedRadix,
    tables: SubstitutionTables,
    demand_a: PoissonTable,
    demand_b: PoissonTable,
    sampler_a: CdfSampler,
    sampler_b: CdfSampler,
    /// Issued pmf per stock-total pair, built on first use.
    issued: Vec<OnceLock<IssuedPmf>>,
    table: OnceLock<Option<OutcomeTable>>,
}

impl ScenarioB {
    pub fn new(params: ScenarioBParams) -> Result<Self> {
        params.validate()?;
        let (a_max_a, a_max_b) = params.a_max()?;
        let m = params.m;
        let radix = MixedRadix::new(
            std::iter::repeat_n(a_max_a + 1, m)
                .chain(std::iter::repeat_n(a_max_b + 1, m))
                .collect(),
        )?;
        let d_max = m * a_max_a.max(a_max_b) + 2;
        let tables = SubstitutionTables::build(params.mu_a, params.mu_b, params.rho, m * a_max_b, d_max)?;
        let demand_a = poisson_pmf_cdf(params.mu_a, poisson_upper(params.mu_a, d_max))?;
        let demand_b = poisson_pmf_cdf(params.mu_b, poisson_upper(params.mu_b, d_max))?;
        let pairs = (m * a_max_a + 1) * (m * a_max_b + 1);
        Ok(ScenarioB {
            sampler_a: CdfSampler::new(&demand_a.probs),
            sampler_b: CdfSampler::new(&demand_b.probs),
            demand_a,
            demand_b,
            tables,
            radix,
            a_max: (a_max_a, a_max_b),
            issued: (0..pairs).map(|_| OnceLock::new()).collect(),
            table: OnceLock::new(),
            params,
        })
    }

    pub fn params(&self) -> &ScenarioBParams {
        &self.params
    }

    /// Resolved order caps.
    pub fn a_max(&self) -> (usize, usize) {
        self.a_max
    }

    pub fn tables(&self) -> &SubstitutionTables {
        &self.tables
    }

    /// Stock totals `(I^a, I^b)` of a component vector.
    pub fn stock_totals(&self, comps: &[usize]) -> (usize, usize) {
        let m = self.params.m;
        (comps[..m].iter().sum(), comps[m..2 * m].iter().sum())
    }

    /// Joint pmf of `(h^a, h^b)` given stock totals. Only totals up to
    /// `m * A_max` per product are supported.
    pub fn issued_joint_pmf(&self, i_a: usize, i_b: usize) -> &IssuedPmf {
        let m = self.params.m;
        assert!(i_a <= m * self.a_max.0 && i_b <= m * self.a_max.1, "stock totals beyond the state space");
        self.issued[i_a * (m * self.a_max.1 + 1) + i_b].get_or_init(|| self.compute_issued(i_a, i_b))
    }

    fn compute_issued(&self, i_a: usize, i_b: usize) -> IssuedPmf {
        let pa = |k: usize| self.demand_a.prob(k);
        let pb = |k: usize| self.demand_b.prob(k);
        let surv_a: f64 = 1.0 - (0..i_a).map(pa).sum::<f64>();
        let surv_b: f64 = 1.0 - (0..i_b).map(pb).sum::<f64>();
        let pz = &self.tables.pz[i_b];
        let mut probs = vec![0.0; (i_a + 1) * (i_b + 1)];
        let w = i_b + 1;
        // B demand below its stock: no substitution, products independent.
        for hb in 0..i_b {
            for ha in 0..i_a {
                probs[ha * w + hb] = pa(ha) * pb(hb);
            }
            probs[i_a * w + hb] = surv_a.max(0.0) * pb(hb);
        }
        // B sold out: A faces its own demand plus accepted substitutes.
        let mut below = 0.0;
        for ha in 0..i_a {
            probs[ha * w + i_b] = pz[ha] * surv_b.max(0.0);
            below += pz[ha];
        }
        probs[i_a * w + i_b] = (1.0 - below).max(0.0) * surv_b.max(0.0);
        IssuedPmf { i_a, i_b, probs }
    }

    /// Successor components and revenue for issued pair `h` and order pair `a`.
    pub fn step_components(
        &self,
        comps: &[usize],
        action: (usize, usize),
        issued: (usize, usize),
    ) -> Result<(Vec<usize>, f64, [usize; 2])> {
        let m = self.params.m;
        let (i_a, i_b) = self.stock_totals(comps);
        if issued.0 > i_a || issued.1 > i_b {
            return Err(Error::Contract(format!(
                "issued {issued:?} exceeds stock ({i_a}, {i_b})"
            )));
        }
        let mut next = vec![0usize; 2 * m];
        let w_a = fifo_issue(&comps[..m], issued.0, action.0, &mut next[..m]);
        let w_b = fifo_issue(&comps[m..2 * m], issued.1, action.1, &mut next[m..]);
        Ok((next, self.reward(action, issued), [w_a, w_b]))
    }

    fn revenue(&self, issued: (usize, usize)) -> f64 {
        self.params.c_r_a * issued.0 as f64 + self.params.c_r_b * issued.1 as f64
    }

    fn order_cost(&self, action: (usize, usize)) -> f64 {
        self.params.c_v_a * action.0 as f64 + self.params.c_v_b * action.1 as f64
    }

    fn reward(&self, action: (usize, usize), issued: (usize, usize)) -> f64 {
        self.revenue(issued) - self.order_cost(action)
    }

    /// Waste-adjusted base stock `[S - I + [X_1 - mu]^+]^+` per product.
    pub fn modified_base_stock_action(&self, levels: (usize, usize), state: &SimState) -> (usize, usize) {
        let m = self.params.m;
        let one = |level: usize, range: std::ops::Range<usize>, mu: f64| {
            let stock = state.sum(range.clone()) as f64;
            let oldest = state.get(range.end - 1) as f64;
            let q = level as f64 - stock + (oldest - mu).max(0.0);
            q.max(0.0).round() as usize
        };
        (
            one(levels.0, 0..m, self.params.mu_a),
            one(levels.1, m..2 * m, self.params.mu_b),
        )
    }

    fn table(&self) -> Option<&OutcomeTable> {
        self.table.get_or_init(|| self.build_table()).as_ref()
    }

    /// Expected entry count, assuming per-product totals are spread evenly.
    fn table_entries_estimate(&self) -> u128 {
        let m = self.params.m as u128;
        let states = self.radix.len() as u128;
        let (a, b) = (self.a_max.0 as u128, self.a_max.1 as u128);
        states * (m * a / 2 + 1) * (m * b / 2 + 1)
    }

    fn build_table(&self) -> Option<OutcomeTable> {
        if self.table_entries_estimate() > TABLE_ENTRY_BUDGET {
            return None;
        }
        let rows: Vec<Vec<Entry>> = (0..self.radix.len())
            .into_par_iter()
            .map(|s| {
                let mut row = Vec::new();
                self.visit_outcomes(s, |prob, next, revenue| row.push(Entry { prob, next: next as u32, revenue }));
                row
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut entries = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0u64);
        for row in rows {
            entries.extend(row);
            offsets.push(entries.len() as u64);
        }
        Some(OutcomeTable { offsets, entries })
    }

    /// Visits issued pairs with positive probability as
    /// `(prob, successor with empty fresh slots, revenue)`.
    #[inline]
    fn visit_outcomes<F: FnMut(f64, usize, f64)>(&self, state: usize, mut visit: F) {
        let m = self.params.m;
        let mut comps = [0usize; MAX_COMPONENTS];
        self.radix.decode_into(state, &mut comps[..2 * m]);
        let (i_a, i_b) = self.stock_totals(&comps);
        let pmf = self.issued_joint_pmf(i_a, i_b);
        let mut next = [0usize; MAX_COMPONENTS];
        for ha in 0..=i_a {
            fifo_issue(&comps[..m], ha, 0, &mut next[..m]);
            for hb in 0..=i_b {
                let p = pmf.probs[ha * (i_b + 1) + hb];
                if p > 0.0 {
                    fifo_issue(&comps[m..2 * m], hb, 0, &mut next[m..2 * m]);
                    visit(p, self.radix.index_unchecked(&next[..2 * m]), self.revenue((ha, hb)));
                }
            }
        }
    }

    fn action_pair(&self, action: usize) -> (usize, usize) {
        let w = self.a_max.1 + 1;
        (action / w, action % w)
    }
}

impl MdpModel for ScenarioB {
    type Outcome = (usize, usize);

    fn cardinality(&self) -> Cardinality {
        self.params.cardinality().expect("validated at construction")
    }

    fn num_states(&self) -> usize {
        self.radix.len()
    }

    fn num_actions(&self) -> usize {
        (self.a_max.0 + 1) * (self.a_max.1 + 1)
    }

    fn state_components(&self, state: usize) -> Vec<usize> {
        self.radix.decode(state)
    }

    fn state_index(&self, components: &[usize]) -> Result<usize> {
        self.radix.index(components)
    }

    fn state_labels(&self) -> Vec<String> {
        let m = self.params.m;
        ["a", "b"]
            .iter()
            .flat_map(|p| (1..=m).rev().map(move |j| format!("{p}_x{j}")))
            .collect()
    }

    fn action_components(&self, action: usize) -> Vec<usize> {
        let (a, b) = self.action_pair(action);
        vec![a, b]
    }

    fn action_index(&self, components: &[usize]) -> Result<usize> {
        match components {
            [a, b] if *a <= self.a_max.0 && *b <= self.a_max.1 => Ok(a * (self.a_max.1 + 1) + b),
            _ => Err(Error::Index(format!("bad action {components:?}"))),
        }
    }

    fn action_labels(&self) -> Vec<String> {
        vec!["order_a".into(), "order_b".into()]
    }

    fn enumerate_outcomes(&self) -> Result<Vec<(usize, usize)>> {
        let m = self.params.m;
        Ok((0..=m * self.a_max.0)
            .flat_map(|a| (0..=m * self.a_max.1).map(move |b| (a, b)))
            .collect())
    }

    fn outcome_probabilities(&self, state: usize, _action: usize) -> Vec<f64> {
        let (i_a, i_b) = self.stock_totals(&self.radix.decode(state));
        let pmf = self.issued_joint_pmf(i_a, i_b);
        let m = self.params.m;
        (0..=m * self.a_max.0)
            .flat_map(|a| (0..=m * self.a_max.1).map(move |b| pmf.prob(a, b)))
            .collect()
    }

    fn transition(&self, state: usize, action: usize, issued: &(usize, usize)) -> (usize, f64) {
        let comps = self.radix.decode(state);
        let (i_a, i_b) = self.stock_totals(&comps);
        // Impossible outcomes carry zero probability; clamp so they map to a
        // valid state.
        let h = (issued.0.min(i_a), issued.1.min(i_b));
        let (next, reward, _) = self
            .step_components(&comps, self.action_pair(action), h)
            .expect("issued clamped to stock");
        (self.radix.index_unchecked(&next), reward)
    }

    #[inline]
    fn for_each_outcome<F: FnMut(f64, usize, f64)>(&self, state: usize, action: usize, mut visit: F) {
        let pair = self.action_pair(action);
        let strides = self.radix.strides();
        let m = self.params.m;
        let shift = pair.0 * strides[0] + pair.1 * strides[m];
        let cost = self.order_cost(pair);
        match self.table() {
            Some(t) => {
                let (lo, hi) = (t.offsets[state] as usize, t.offsets[state + 1] as usize);
                for e in &t.entries[lo..hi] {
                    visit(e.prob, e.next as usize + shift, e.revenue - cost);
                }
            }
            None => self.visit_outcomes(state, |p, next, revenue| visit(p, next + shift, revenue - cost)),
        }
    }

    /// Expected revenue of the next day.
    fn initial_value(&self, state: usize) -> f64 {
        let mut v = 0.0;
        self.visit_outcomes(state, |p, _, revenue| v += p * revenue);
        v
    }

    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    fn convergence_test(&self) -> ConvergenceTest {
        ConvergenceTest::ChangeSpan
    }

    fn description(&self) -> String {
        let p = &self.params;
        format!(
            "scenario-b;m={};mu_a={:?};mu_b={:?};a_max=({},{});c_v=({:?},{:?});c_r=({:?},{:?});rho={:?};gamma={:?}",
            p.m, p.mu_a, p.mu_b, self.a_max.0, self.a_max.1, p.c_v_a, p.c_v_b, p.c_r_a, p.c_r_b, p.rho, p.gamma
        )
    }
}

impl Simulator for ScenarioB {
    type Action = (usize, usize);

    fn products(&self) -> &'static [&'static str] {
        &["a", "b"]
    }

    fn initial_state(&self) -> SimState {
        SimState::zeros(2 * self.params.m)
    }

    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    /// Heuristic searches go up to twice the VI order cap.
    fn action_in_range(&self, action: &(usize, usize)) -> bool {
        action.0 <= 2 * self.a_max.0 && action.1 <= 2 * self.a_max.1
    }

    fn action_from_components(&self, components: &[usize]) -> (usize, usize) {
        (components[0], components[1])
    }

    fn sample_step(&self, state: &SimState, action: (usize, usize), rng: DayStream) -> (SimState, f64, StepStats) {
        let m = self.params.m;
        let d_a = self.sampler_a.sample(rng.uniform(0));
        let d_b = self.sampler_b.sample(rng.uniform(1));
        let comps = state.to_vec();
        let (i_a, i_b) = self.stock_totals(&comps);
        let own_a = d_a.min(i_a);
        let own_b = d_b.min(i_b);
        let accepted = binomial_inverse_cdf((d_b - own_b) as u64, self.params.rho, rng.uniform(2)) as usize;
        let sub = accepted.min(i_a - own_a);
        let issued = (own_a + sub, own_b);
        let (next, reward, waste) = self
            .step_components(&comps, action, issued)
            .expect("issued never exceeds stock");
        let mut stats = StepStats::default();
        for (k, p) in stats.products.iter_mut().enumerate() {
            let range = k * m..(k + 1) * m;
            let closing: usize = next[range.start + 1..range.end].iter().sum();
            *p = ProductStep {
                demanded: [d_a, d_b][k] as u32,
                filled: [own_a, own_b + sub][k] as u32,
                issued: [issued.0, issued.1][k] as u32,
                expired: waste[k] as u32,
                received: comps[range.start] as u32,
                rejected: 0,
                opening: comps[range.start + 1..range.end].iter().sum::<usize>() as u32,
                closing: closing as u32,
                held: closing as u32,
            };
        }
        (SimState::from_slice(&next), reward, stats)
    }
}

/// Issued-pair frequencies from simulating one state, keyed by `(h^a, h^b)`.
pub fn sample_issued_frequencies(model: &ScenarioB, comps: &[usize], n: u64, seed: u64) -> HashMap<(usize, usize), u64> {
    let state = SimState::from_slice(comps);
    let mut counts = HashMap::new();
    for day in 0..n {
        let (_, _, stats) = model.sample_step(&state, (0, 0), DayStream::new(seed, day));
        let [a, b] = stats.products;
        *counts.entry((a.issued as usize, b.issued as usize)).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rho: f64, cap: usize) -> ScenarioB {
        ScenarioB::new(ScenarioBParams {
            m: 2,
            mu_a: 1.0,
            mu_b: 1.5,
            a_max_a: Some(cap),
            a_max_b: Some(cap),
            rho,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn newsvendor_caps() {
        assert_eq!(newsvendor_max_order(2, 5.0, 1.0, 0.5).unwrap(), 10);
        assert_eq!(newsvendor_max_order(3, 7.0, 1.0, 0.5).unwrap(), 21);
        assert_eq!(newsvendor_max_order(2, 5.0, 1.0, 1.0).unwrap(), 0);
        assert!(newsvendor_max_order(2, 5.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn preset_caps_and_sizes() {
        for (m, name, caps, states, outcomes) in [
            (2, "exp1", (10, 10), 14_641u128, 441u128),
            (2, "exp2", (14, 6), 11_025, 377),
            (3, "exp1", (15, 15), 16_777_216, 2_116),
            (3, "exp4", (20, 4), 1_157_625, 793),
            (2, "p4", (13, 13), 38_416, 729),
        ] {
            let p = ScenarioBParams::preset(m, name).unwrap();
            assert_eq!(p.a_max().unwrap(), caps, "{m} {name}");
            let c = p.cardinality().unwrap();
            assert_eq!((c.states, c.outcomes), (states, outcomes), "{m} {name}");
        }
    }

    #[test]
    fn no_substitution_when_rho_is_zero() {
        let t = SubstitutionTables::build(2.0, 3.0, 0.0, 12, 20).unwrap();
        for row in &t.pu {
            assert!((row[0] - 1.0).abs() < 1e-15);
            assert!(row[1..].iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn columns_sum_to_one() {
        let t = SubstitutionTables::build(5.0, 5.0, 0.5, 20, 22).unwrap();
        for y in 0..=20 {
            // Columns are truncated at d_max, so compare against the head.
            let mass: f64 = t.pz[y].iter().sum();
            assert!(mass <= 1.0 + 1e-12 && mass > 0.97, "y={y} {mass}");
            assert!(t.pu[y].iter().all(|&p| p >= 0.0));
        }
        let t = SubstitutionTables::build(1.0, 1.0, 0.5, 4, 40).unwrap();
        for y in 0..=4 {
            assert!((t.pz[y].iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn large_stock_leaves_plain_demand() {
        let t = SubstitutionTables::build(2.0, 1.0, 0.5, 40, 30).unwrap();
        let pa = poisson_pmf_cdf(2.0, 30).unwrap();
        for d in 0..=30 {
            assert!((t.pz[40][d] - pa.probs[d]).abs() < 1e-9);
        }
    }

    #[test]
    fn issued_pmf_sums_to_one_everywhere() {
        let b = ScenarioB::new(ScenarioBParams::preset(2, "exp1").unwrap()).unwrap();
        for i_a in 0..=20 {
            for i_b in 0..=20 {
                let p = b.issued_joint_pmf(i_a, i_b);
                let mass: f64 = p.probs.iter().sum();
                assert!((mass - 1.0).abs() < 1e-6, "({i_a},{i_b}) {mass}");
                assert!(p.probs.iter().all(|&x| x >= 0.0));
                assert_eq!(p.prob(i_a + 1, 0), 0.0);
            }
        }
        assert_eq!(b.issued_joint_pmf(0, 0).probs, vec![1.0]);
    }

    #[test]
    fn fifo_example() {
        let b = small(0.5, 4);
        // X^a = (X_2, X_1) = (2, 1); issuing 2 takes the old unit then one fresh.
        let (next, reward, waste) = b.step_components(&[2, 1, 0, 0], (3, 0), (2, 0)).unwrap();
        assert_eq!(&next[..2], &[3, 1]);
        assert_eq!(waste, [0, 0]);
        assert_eq!(reward, 2.0 - 1.5);
        let (next, reward, waste) = b.step_components(&[0, 3, 2, 4], (0, 0), (0, 0)).unwrap();
        assert_eq!(next, vec![0, 0, 0, 2]);
        assert_eq!(waste, [3, 4]);
        assert_eq!(reward, 0.0);
        assert!(b.step_components(&[1, 0, 0, 0], (0, 0), (2, 0)).is_err());
    }

    #[test]
    fn initial_value_limits() {
        let b = small(0.5, 10);
        assert_eq!(b.initial_value(0), 0.0);
        let s = b.state_index(&[10, 10, 0, 0]).unwrap();
        // Plenty of A: every A customer and every accepting B customer buys.
        let expected = 1.0 + 0.5 * 1.5;
        assert!((b.initial_value(s) - expected).abs() < 1e-6, "{}", b.initial_value(s));
    }

    #[test]
    fn table_matches_on_the_fly() {
        let b = small(0.5, 3);
        for s in 0..b.num_states() {
            for a in [0, 5, 15] {
                let mut from_table = Vec::new();
                b.for_each_outcome(s, a, |p, n, r| from_table.push((p, n, r)));
                let mut direct = Vec::new();
                let outcomes = b.enumerate_outcomes().unwrap();
                for (o, p) in outcomes.iter().zip(b.outcome_probabilities(s, a)) {
                    if p > 0.0 {
                        let (n, r) = b.transition(s, a, o);
                        direct.push((p, n, r));
                    }
                }
                assert_eq!(from_table, direct);
            }
        }
    }

    #[test]
    fn heuristic_adjusts_for_waste() {
        let b = ScenarioB::new(ScenarioBParams::preset(2, "exp1").unwrap()).unwrap();
        assert_eq!(b.modified_base_stock_action((13, 12), &SimState::zeros(4)), (13, 12));
        // X_1 = 3 <= mu: plain base stock.
        assert_eq!(b.modified_base_stock_action((13, 12), &SimState::from_slice(&[4, 3, 2, 1])), (6, 9));
        // X^a_1 = 8 exceeds mu = 5 by 3.
        assert_eq!(b.modified_base_stock_action((13, 12), &SimState::from_slice(&[4, 8, 0, 0])), (4, 12));
        assert_eq!(b.modified_base_stock_action((2, 2), &SimState::from_slice(&[9, 1, 9, 1])), (0, 0));
    }

    #[test]
    fn simulator_never_substitutes_without_acceptance() {
        let b = small(0.0, 4);
        let state = SimState::from_slice(&[4, 4, 0, 1]);
        for day in 0..2000 {
            let (_, _, stats) = b.sample_step(&state, (1, 1), DayStream::new(3, day));
            let [a, bb] = stats.products;
            assert_eq!(a.issued, a.filled);
            assert_eq!(bb.filled, bb.issued);
            assert!(a.is_conserved() && bb.is_conserved());
        }
    }
}
