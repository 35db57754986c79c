//! Monte-Carlo policy evaluation.
//!
//! Each rollout starts from empty stock, runs a warm-up whose rewards are
//! discarded, then accumulates a discounted return with weight 1 on the first
//! post-warm-up day. Rollouts are independent and reduced in index order.

use std::fmt::Debug;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::mdp::MdpModel;
use crate::rng::DayStream;
use crate::vi::Policy;

/// Largest number of state components a simulated state may carry.
pub const MAX_COMPONENTS: usize = 16;

/// Compact state vector, ordered exactly like the matching MDP's components.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimState {
    len: u8,
    c: [u16; MAX_COMPONENTS],
}

impl SimState {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_COMPONENTS, "at most {MAX_COMPONENTS} components");
        SimState {
            len: len as u8,
            c: [0; MAX_COMPONENTS],
        }
    }

    pub fn from_slice(values: &[usize]) -> Self {
        let mut s = Self::zeros(values.len());
        for (slot, &v) in s.c.iter_mut().zip(values) {
            *slot = u16::try_from(v).expect("component fits in u16");
        }
        s
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        debug_assert!(i < self.len());
        self.c[i] as usize
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: usize) {
        debug_assert!(i < self.len());
        self.c[i] = v as u16;
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.c[..self.len()]
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.as_slice().iter().map(|&v| v as usize).collect()
    }

    pub fn sum(&self, range: std::ops::Range<usize>) -> usize {
        self.c[range].iter().map(|&v| v as usize).sum()
    }
}

impl Debug for SimState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// Unit flows of one product over one simulated day.
///
/// `opening + received - issued - expired == closing` always holds. `filled`
/// is demand for this product that was met, possibly from another product's
/// stock, while `issued` counts units that left this product's shelf. `held`
/// is the quantity the holding KPI averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProductStep {
    pub demanded: u32,
    pub filled: u32,
    pub issued: u32,
    pub expired: u32,
    pub received: u32,
    pub rejected: u32,
    pub opening: u32,
    pub closing: u32,
    pub held: u32,
}

impl ProductStep {
    pub fn is_conserved(&self) -> bool {
        self.opening + self.received == self.issued + self.expired + self.closing
            && self.filled <= self.demanded
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub products: [ProductStep; 2],
}

/// A scenario that can be stepped forward with sampled randomness.
pub trait Simulator: Sync {
    type Action: Copy + Debug + Send + Sync;

    /// Product names; one or two entries.
    fn products(&self) -> &'static [&'static str];

    fn initial_state(&self) -> SimState;

    fn gamma(&self) -> f64;

    fn action_in_range(&self, action: &Self::Action) -> bool;

    /// Builds an action from per-product order quantities.
    fn action_from_components(&self, components: &[usize]) -> Self::Action;

    fn sample_step(&self, state: &SimState, action: Self::Action, rng: DayStream) -> (SimState, f64, StepStats);
}

/// Anything that picks an action for a simulated state. `None` means the
/// policy is undefined there.
pub trait PolicyFn<A>: Sync {
    fn act(&self, state: &SimState) -> Option<A>;
}

impl<A, F> PolicyFn<A> for F
where
    F: Fn(&SimState) -> Option<A> + Sync,
{
    fn act(&self, state: &SimState) -> Option<A> {
        self(state)
    }
}

/// Looks up a solved MDP policy.
pub struct TabularPolicy<'m, M: MdpModel, A> {
    model: &'m M,
    actions: Vec<A>,
}

impl<'m, M: MdpModel, A: Copy> TabularPolicy<'m, M, A> {
    pub fn new<S: Simulator<Action = A>>(model: &'m M, sim: &S, policy: &Policy) -> Result<Self> {
        if policy.actions.len() != model.num_states() {
            return Err(Error::Contract(format!(
                "policy has {} entries, model has {} states",
                policy.actions.len(),
                model.num_states()
            )));
        }
        let by_index: Vec<A> = (0..model.num_actions())
            .map(|a| sim.action_from_components(&model.action_components(a)))
            .collect();
        let actions = policy
            .actions
            .iter()
            .map(|&a| {
                by_index.get(a as usize).copied().ok_or_else(|| {
                    Error::Contract(format!("policy action {a} out of range"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(TabularPolicy { model, actions })
    }
}

impl<M: MdpModel, A: Copy + Send + Sync> PolicyFn<A> for TabularPolicy<'_, M, A> {
    fn act(&self, state: &SimState) -> Option<A> {
        let mut buf = [0usize; MAX_COMPONENTS];
        for (slot, &v) in buf.iter_mut().zip(state.as_slice()) {
            *slot = v as usize;
        }
        let s = self.model.state_index(&buf[..state.len()]).ok()?;
        Some(self.actions[s])
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon_days: u32,
    pub warmup_days: u32,
    pub n_rollouts: usize,
    pub base_seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon_days: 365,
            warmup_days: 100,
            n_rollouts: 10_000,
            base_seed: 0,
        }
    }
}

/// Per-rollout return and KPIs. Percentages are in `[0, 100]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutSummary {
    pub ret: f64,
    pub service_level: [f64; 2],
    pub wastage: [f64; 2],
    pub holding: [f64; 2],
}

fn ratio_pct(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Runs one rollout with seed `base_seed + index`.
pub fn rollout<S, P>(sim: &S, policy: &P, config: &RolloutConfig, index: u64) -> Result<RolloutSummary>
where
    S: Simulator,
    P: PolicyFn<S::Action> + ?Sized,
{
    let seed = config.base_seed.wrapping_add(index);
    let gamma = sim.gamma();
    let mut state = sim.initial_state();
    let mut ret = 0.0;
    let mut weight = 1.0;
    let mut demanded = [0u64; 2];
    let mut filled = [0u64; 2];
    let mut expired = [0u64; 2];
    let mut received = [0u64; 2];
    let mut held = [0u64; 2];
    let total_days = config.warmup_days as u64 + config.horizon_days as u64;
    for day in 0..total_days {
        let action = policy
            .act(&state)
            .filter(|a| sim.action_in_range(a))
            .ok_or_else(|| Error::Contract(format!("policy gives no valid action for state {state:?}")))?;
        let (next, reward, stats) = sim.sample_step(&state, action, DayStream::new(seed, day));
        if day >= config.warmup_days as u64 {
            ret += weight * reward;
            weight *= gamma;
            for (k, p) in stats.products.iter().enumerate() {
                demanded[k] += p.demanded as u64;
                filled[k] += p.filled as u64;
                expired[k] += p.expired as u64;
                received[k] += p.received as u64;
                held[k] += p.held as u64;
            }
        }
        state = next;
    }
    let days = config.horizon_days as f64;
    let mut summary = RolloutSummary {
        ret,
        service_level: [100.0; 2],
        wastage: [0.0; 2],
        holding: [0.0; 2],
    };
    for k in 0..2 {
        summary.service_level[k] = ratio_pct(filled[k], demanded[k], 100.0);
        summary.wastage[k] = ratio_pct(expired[k], received[k], 0.0);
        summary.holding[k] = if days > 0.0 { held[k] as f64 / days } else { 0.0 };
    }
    Ok(summary)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator, 0 when `n = 1`).
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanSd::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd, n }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sd / (self.n as f64).sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub products: Vec<&'static str>,
    pub returns: Vec<f64>,
    pub ret: MeanSd,
    pub service_level: Vec<MeanSd>,
    pub wastage: Vec<MeanSd>,
    pub holding: Vec<MeanSd>,
}

/// Evaluates `policy` on `n_rollouts` rollouts in parallel.
pub fn evaluate_policy<S, P>(sim: &S, policy: &P, config: &RolloutConfig) -> Result<Evaluation>
where
    S: Simulator,
    P: PolicyFn<S::Action> + ?Sized,
{
    if config.n_rollouts == 0 {
        return Err(Error::Config("n_rollouts must be at least 1".into()));
    }
    let summaries: Vec<RolloutSummary> = (0..config.n_rollouts as u64)
        .into_par_iter()
        .map(|i| rollout(sim, policy, config, i))
        .collect::<Result<_>>()?;
    Ok(aggregate(sim.products(), &summaries))
}

pub fn aggregate(products: &[&'static str], summaries: &[RolloutSummary]) -> Evaluation {
    let column = |f: &dyn Fn(&RolloutSummary) -> f64| MeanSd::of(&summaries.iter().map(f).collect::<Vec<_>>());
    let returns: Vec<f64> = summaries.iter().map(|s| s.ret).collect();
    let per_product = |pick: fn(&RolloutSummary) -> [f64; 2]| {
        (0..products.len()).map(|k| column(&|s| pick(s)[k])).collect::<Vec<_>>()
    };
    Evaluation {
        products: products.to_vec(),
        ret: MeanSd::of(&returns),
        returns,
        service_level: per_product(|s| s.service_level),
        wastage: per_product(|s| s.wastage),
        holding: per_product(|s| s.holding),
    }
}

/// One line of a KPI report.
pub struct KpiRow<'a> {
    pub policy: &'a str,
    pub experiment: &'a str,
    pub evaluation: &'a Evaluation,
    /// Optimality gap in percent, for heuristic rows compared against VI.
    pub gap_pct: Option<f64>,
}

/// Writes KPI rows as CSV. Per-product columns carry a `_<product>` suffix
/// when there is more than one product. A `gap_pct` column is added when any
/// row has a gap.
pub fn write_kpi_csv(path: &Path, rows: &[KpiRow<'_>]) -> Result<()> {
    let products = rows.first().map(|r| r.evaluation.products.clone()).unwrap_or_default();
    if rows.iter().any(|r| r.evaluation.products != products) {
        return Err(Error::Contract("KPI rows mix scenarios with different products".into()));
    }
    let mut header = vec![
        "policy".to_string(),
        "experiment".into(),
        "n_rollouts".into(),
        "return_mean".into(),
        "return_sd".into(),
    ];
    for kpi in ["service_level", "wastage", "holding"] {
        for p in &products {
            let name = if products.len() > 1 { format!("{kpi}_{p}") } else { kpi.to_string() };
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_sd"));
        }
    }
    let with_gap = rows.iter().any(|r| r.gap_pct.is_some());
    if with_gap {
        header.push("gap_pct".into());
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    out.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let e = row.evaluation;
        let mut rec = vec![
            row.policy.to_string(),
            row.experiment.to_string(),
            e.ret.n.to_string(),
            e.ret.mean.to_string(),
            e.ret.sd.to_string(),
        ];
        for kpi in [&e.service_level, &e.wastage, &e.holding] {
            for m in kpi {
                rec.push(m.mean.to_string());
                rec.push(m.sd.to_string());
            }
        }
        if with_gap {
            rec.push(row.gap_pct.map(|g| g.to_string()).unwrap_or_default());
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    atomic_write(path, |w| std::io::Write::write_all(w, &bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_state_round_trip() {
        let s = SimState::from_slice(&[3, 0, 20]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.to_vec(), vec![3, 0, 20]);
        assert_eq!(s.sum(0..3), 23);
        assert_eq!(format!("{s:?}"), "[3, 0, 20]");
    }

    #[test]
    fn mean_sd_conventions() {
        let one = MeanSd::of(&[4.0]);
        assert_eq!((one.mean, one.sd), (4.0, 0.0));
        let m = MeanSd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.se() - m.sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn conservation_check() {
        let p = ProductStep {
            demanded: 4,
            filled: 3,
            issued: 3,
            expired: 1,
            received: 2,
            opening: 5,
            closing: 3,
            ..Default::default()
        };
        assert!(p.is_conserved());
        assert!(!ProductStep { closing: 4, ..p }.is_conserved());
    }
}
