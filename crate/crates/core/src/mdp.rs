//! Scenario-agnostic MDP contract and state-space indexing.
//!
//! A model exposes its dynamics as a deterministic transition
//! `(s', r) = T(s, a, omega)` together with `P(omega | s, a)`. States and
//! actions are addressed by dense integer indices; the mapping from a state's
//! component vector to its index is a mixed-radix encoding with the first
//! component most significant, so enumeration order is lexicographic.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest state space value iteration will allocate.
pub const MAX_STATES: u128 = 1 << 32;

/// Closed-form sizes of a model's state, action and outcome sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cardinality {
    pub states: u128,
    pub actions: u128,
    pub outcomes: u128,
}

/// Which stopping rule value iteration applies after each sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceTest {
    /// `max_s |V_i - V_{i-1}| < eps`
    ValueSpan,
    /// `max_s (V_i - V_{i-1}) - min_s (V_i - V_{i-1}) < eps`
    ChangeSpan,
    /// Discount-corrected change over one 7-day cycle is uniform across states.
    PeriodicSpan,
}

impl ConvergenceTest {
    /// Number of value vectors the test needs (current plus predecessors).
    pub fn history_len(self) -> usize {
        match self {
            ConvergenceTest::ValueSpan | ConvergenceTest::ChangeSpan => 2,
            ConvergenceTest::PeriodicSpan => 8,
        }
    }
}

/// SHA-256 digest of a model's canonical parameter description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(description: &str) -> Self {
        let digest = Sha256::digest(description.as_bytes());
        Fingerprint(digest.into())
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        Some(Fingerprint(out))
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Product of radices, or `None` on `u128` overflow.
pub fn checked_count(radices: &[u128]) -> Option<u128> {
    radices.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r))
}

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial_coefficient(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Mixed-radix positional encoding of bounded integer vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedRadix {
    radices: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl MixedRadix {
    /// Fails with [`Error::Capacity`] when the product exceeds [`MAX_STATES`].
    pub fn new(radices: Vec<usize>) -> Result<Self> {
        let wide: Vec<u128> = radices.iter().map(|&r| r as u128).collect();
        let required = checked_count(&wide).unwrap_or(u128::MAX);
        if required > MAX_STATES {
            return Err(Error::Capacity {
                required,
                limit: MAX_STATES,
            });
        }
        let mut strides = vec![1usize; radices.len()];
        for i in (0..radices.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * radices[i + 1];
        }
        Ok(MixedRadix {
            len: required as usize,
            radices,
            strides,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn width(&self) -> usize {
        self.radices.len()
    }

    pub fn index(&self, components: &[usize]) -> Result<usize> {
        if components.len() != self.radices.len() {
            return Err(Error::Index(format!(
                "expected {} components, got {}",
                self.radices.len(),
                components.len()
            )));
        }
        for (pos, (&c, &r)) in components.iter().zip(&self.radices).enumerate() {
            if c >= r {
                return Err(Error::Index(format!(
                    "component {pos} = {c} out of range 0..{r}"
                )));
            }
        }
        Ok(self.index_unchecked(components))
    }

    #[inline]
    pub fn index_unchecked(&self, components: &[usize]) -> usize {
        components
            .iter()
            .zip(&self.strides)
            .map(|(c, s)| c * s)
            .sum()
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &stride) in out.iter_mut().zip(&self.strides) {
            *slot = index / stride;
            index %= stride;
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        self.decode_into(index, &mut out);
        out
    }

    /// All vectors in index order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len).map(move |i| self.decode(i))
    }
}

/// The capabilities value iteration needs from a scenario.
///
/// `transition`, `outcome_probabilities` and `enumerate_outcomes` are the
/// literal definition of the dynamics. `for_each_outcome` is the hot path: it
/// visits the positive-probability outcomes of `(s, a)` in a fixed order.
/// Outcomes that share a successor and differ only in reward may be merged
/// into one visit carrying their total probability and probability-weighted
/// mean reward, which leaves every Bellman backup unchanged up to rounding.
pub trait MdpModel: Sync {
    type Outcome: Clone + std::fmt::Debug;

    fn cardinality(&self) -> Cardinality;

    fn num_states(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Component vector of a state (see [`MdpModel::state_labels`]).
    fn state_components(&self, state: usize) -> Vec<usize>;

    fn state_index(&self, components: &[usize]) -> Result<usize>;

    /// Column names for state components in policy files.
    fn state_labels(&self) -> Vec<String>;

    /// Per-product order quantities of an action index.
    fn action_components(&self, action: usize) -> Vec<usize>;

    fn action_index(&self, components: &[usize]) -> Result<usize>;

    fn action_labels(&self) -> Vec<String>;

    /// All random outcomes, in canonical order.
    fn enumerate_outcomes(&self) -> Result<Vec<Self::Outcome>>;

    /// `P(omega | s, a)` aligned with [`MdpModel::enumerate_outcomes`].
    fn outcome_probabilities(&self, state: usize, action: usize) -> Vec<f64>;

    /// Deterministic transition: next state index and reward.
    fn transition(&self, state: usize, action: usize, outcome: &Self::Outcome) -> (usize, f64);

    /// Calls `visit(probability, next_state, reward)` for every outcome with
    /// positive probability.
    fn for_each_outcome<F: FnMut(f64, usize, f64)>(&self, state: usize, action: usize, visit: F);

    fn initial_value(&self, state: usize) -> f64;

    fn gamma(&self) -> f64;

    fn convergence_test(&self) -> ConvergenceTest;

    /// Periodicity of the dynamics (1, or 7 for weekday models).
    fn period(&self) -> usize {
        1
    }

    /// Canonical parameter string hashed into the fingerprint.
    fn description(&self) -> String;

    fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of(&self.description())
    }
}

/// Lists every state's component vector in index order.
pub fn enumerate_states<M: MdpModel>(model: &M) -> Vec<Vec<usize>> {
    (0..model.num_states()).map(|s| model.state_components(s)).collect()
}

/// Iterates all length-`parts` vectors of non-negative integers whose sum is
/// exactly `total`, in lexicographic order (first component most significant).
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            go(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    go(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_radix_round_trip() {
        let mr = MixedRadix::new(vec![3, 4, 5]).unwrap();
        assert_eq!(mr.len(), 60);
        assert_eq!(mr.index(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(mr.index(&[2, 3, 4]).unwrap(), 59);
        for (i, v) in mr.iter().enumerate() {
            assert_eq!(mr.index(&v).unwrap(), i);
        }
        assert!(mr.index(&[3, 0, 0]).is_err());
        assert!(mr.index(&[0, 0]).is_err());
    }

    #[test]
    fn mixed_radix_is_lexicographic() {
        let mr = MixedRadix::new(vec![2, 3]).unwrap();
        let all: Vec<_> = mr.iter().collect();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
    }

    #[test]
    fn capacity_error_reports_count() {
        let err = MixedRadix::new(vec![7, 21, 21, 21, 21, 21, 21, 21]).unwrap_err();
        match err {
            Error::Capacity { required, .. } => assert_eq!(required, 12_607_619_787),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compositions_match_stars_and_bars() {
        for parts in 1..5 {
            for total in 0..8 {
                let c = compositions(total, parts);
                assert_eq!(
                    c.len() as u128,
                    binomial_coefficient((total + parts - 1) as u64, (parts - 1) as u64)
                );
                assert!(c.iter().all(|v| v.iter().sum::<usize>() == total));
            }
        }
        // Sum over totals 0..=20 for 3 parts equals C(23, 3).
        let n: usize = (0..=20).map(|t| compositions(t, 3).len()).sum();
        assert_eq!(n as u128, binomial_coefficient(23, 3));
    }

    #[test]
    fn fingerprint_hex_round_trip() {
        let f = Fingerprint::of("scenario");
        assert_eq!(Fingerprint::from_hex(&f.to_hex()), Some(f));
        assert_ne!(Fingerprint::of("a"), Fingerprint::of("b"));
        assert_eq!(Fingerprint::from_hex("zz"), None);
    }
}
