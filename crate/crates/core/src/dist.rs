//! Discrete probability primitives shared by the scenario models.
//!
//! Everything here is a pure function of its arguments. Masses with large
//! arguments are evaluated in log space so they do not overflow.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscretePmf`].
pub const PMF_SUM_TOLERANCE: f64 = 1e-9;

/// Probability mass function over `0..=support_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePmf {
    probs: Vec<f64>,
}

impl DiscretePmf {
    /// Wraps a probability vector, checking non-negativity and total mass.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("pmf must have at least one entry".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::Parameter(format!("pmf entry {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(Error::Parameter(format!("pmf sums to {total}, expected 1")));
        }
        Ok(DiscretePmf { probs })
    }

    pub fn support_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self) -> Vec<f64> {
        prefix_sum(&self.probs)
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Inverse-CDF sampler over this pmf.
    pub fn sampler(&self) -> CdfSampler {
        CdfSampler::new(&self.probs)
    }
}

fn prefix_sum(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Inverse-CDF lookup table: maps a uniform draw on `[0, 1)` to an outcome.
///
/// The last bucket absorbs any rounding shortfall in the cumulative sum.
#[derive(Clone, Debug)]
pub struct CdfSampler {
    cdf: Vec<f64>,
}

impl CdfSampler {
    pub fn new(probs: &[f64]) -> Self {
        let mut cdf = prefix_sum(probs);
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        CdfSampler { cdf }
    }

    #[inline]
    pub fn sample(&self, u: f64) -> usize {
        // Supports are short (at most a few hundred entries) and mass is
        // concentrated near the start, so a linear scan beats bisection.
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1)
    }

    pub fn support_max(&self) -> usize {
        self.cdf.len() - 1
    }
}

/// Discretized truncated gamma demand.
///
/// `probs[d] = F(d + 1/2) - F(d - 1/2)` for `d < d_max` and the remaining tail
/// mass at `d_max`, where `F` is the gamma CDF with mean `mu` and coefficient of
/// variation `cv` (shape `1/cv^2`, scale `mu * cv^2`), zero for `x <= 0`.
pub fn truncated_gamma_demand_pmf(mu: f64, cv: f64, d_max: usize) -> Result<DiscretePmf> {
    if !(mu > 0.0) || !(cv > 0.0) {
        return Err(Error::Parameter(format!(
            "gamma demand needs mu > 0 and cv > 0, got mu={mu}, cv={cv}"
        )));
    }
    if d_max < 1 {
        return Err(Error::Parameter("gamma demand needs d_max >= 1".into()));
    }
    let shape = 1.0 / (cv * cv);
    let scale = mu * cv * cv;
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else { gamma_lr(shape, x / scale) };

    let mut probs = Vec::with_capacity(d_max + 1);
    let mut lower = 0.0;
    for d in 0..d_max {
        let upper = cdf(d as f64 + 0.5);
        probs.push((upper - lower).max(0.0));
        lower = upper;
    }
    probs.push((1.0 - lower).max(0.0));
    DiscretePmf::new(probs)
}

/// Untruncated Poisson masses and cumulative sums over `0..=upper`.
#[derive(Clone, Debug)]
pub struct PoissonTable {
    pub mean: f64,
    pub probs: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl PoissonTable {
    /// `P(D >= k)`, exact complement for `k = 0`.
    pub fn survival(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else if k - 1 < self.cdf.len() {
            (1.0 - self.cdf[k - 1]).max(0.0)
        } else {
            0.0
        }
    }

    pub fn prob(&self, k: usize) -> f64 {
        if k < self.probs.len() {
            self.probs[k]
        } else {
            poisson_ln_pmf(self.mean, k).exp()
        }
    }

    /// The same masses with the tail beyond `upper` lumped into the last entry.
    pub fn to_truncated_pmf(&self) -> Result<DiscretePmf> {
        let mut probs = self.probs.clone();
        let head: f64 = probs[..probs.len() - 1].iter().sum();
        *probs.last_mut().expect("non-empty") = (1.0 - head).max(0.0);
        DiscretePmf::new(probs)
    }
}

fn poisson_ln_pmf(mean: f64, k: usize) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let k = k as f64;
    -mean + k * mean.ln() - ln_gamma(k + 1.0)
}

/// Poisson pmf `e^{-mean} mean^k / k!` and its prefix sums for `k in 0..=upper`.
pub fn poisson_pmf_cdf(mean: f64, upper: usize) -> Result<PoissonTable> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::Parameter(format!("Poisson mean must be >= 0, got {mean}")));
    }
    let probs: Vec<f64> = (0..=upper).map(|k| poisson_ln_pmf(mean, k).exp()).collect();
    let cdf = prefix_sum(&probs);
    Ok(PoissonTable { mean, probs, cdf })
}

/// Smallest `k` with `P(D <= k) >= q` for `D ~ Poisson(mean)`; `q = 0` gives 0.
pub fn poisson_quantile(mean: f64, q: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("quantile level {q} outside [0, 1]")));
    }
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::Parameter(format!("Poisson mean must be >= 0, got {mean}")));
    }
    if q == 0.0 || mean == 0.0 {
        return Ok(0);
    }
    let mut cdf = 0.0;
    let mut k = 0usize;
    let limit = (mean + 40.0 * mean.sqrt() + 100.0) as usize;
    loop {
        let p = poisson_ln_pmf(mean, k).exp();
        cdf += p;
        // q = 1 is reached only up to rounding; stop once the remaining mass
        // is below double precision past the mode.
        if cdf >= q || (k as f64 > mean && p < f64::EPSILON * 1e-3) || k >= limit {
            return Ok(k);
        }
        k += 1;
    }
}

/// Generalized negative binomial: failures before `n` successes with mean
/// `delta`, success probability `p = n / (n + delta)`; the tail from `d_max`
/// upwards is lumped into `probs[d_max]`.
pub fn truncated_negbinom_pmf(n: f64, delta: f64, d_max: usize) -> Result<DiscretePmf> {
    if !(n > 0.0) || !(delta > 0.0) {
        return Err(Error::Parameter(format!(
            "negative binomial needs n > 0 and delta > 0, got n={n}, delta={delta}"
        )));
    }
    let p = n / (n + delta);
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let ln_gamma_n = ln_gamma(n);
    let mut probs: Vec<f64> = (0..d_max)
        .map(|d| {
            let d = d as f64;
            (ln_gamma(d + n) - ln_gamma_n - ln_gamma(d + 1.0) + n * ln_p + d * ln_q).exp()
        })
        .collect();
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));
    DiscretePmf::new(probs)
}

/// `ln C(n, k)`.
pub fn ln_binomial_coefficient(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial mass `C(trials, k) rho^k (1 - rho)^(trials - k)`; zero when
/// `k > trials`.
pub fn binomial_pmf(k: u64, trials: u64, rho: f64) -> f64 {
    if k > trials {
        return 0.0;
    }
    if rho <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if rho >= 1.0 {
        return if k == trials { 1.0 } else { 0.0 };
    }
    if trials > 1000 {
        let ln = ln_binomial_coefficient(trials, k)
            + k as f64 * rho.ln()
            + (trials - k) as f64 * (1.0 - rho).ln();
        return ln.exp();
    }
    binomial_coefficient_f64(trials, k) * rho.powi(k as i32) * (1.0 - rho).powi((trials - k) as i32)
}

/// Smallest `k` with `P(Bin(trials, rho) <= k) > u`, i.e. an inverse-cdf draw.
pub fn binomial_inverse_cdf(trials: u64, rho: f64, u: f64) -> u64 {
    if rho <= 0.0 || trials == 0 {
        return 0;
    }
    if rho >= 1.0 {
        return trials;
    }
    let mut cdf = 0.0;
    for k in 0..trials {
        cdf += binomial_pmf(k, trials, rho);
        if u < cdf {
            return k;
        }
    }
    trials
}

/// `C(n, k)` by the multiplicative formula; exact while the result fits in 53 bits.
fn binomial_coefficient_f64(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Multinomial mass of `counts` under category probabilities `probs`.
pub fn multinomial_pmf(counts: &[u64], probs: &[f64]) -> Result<f64> {
    if counts.len() != probs.len() {
        return Err(Error::Parameter(format!(
            "multinomial counts ({}) and probabilities ({}) differ in length",
            counts.len(),
            probs.len()
        )));
    }
    let trials: u64 = counts.iter().sum();
    if trials > 1000 {
        let mut ln = ln_gamma(trials as f64 + 1.0);
        for (&c, &p) in counts.iter().zip(probs) {
            if c == 0 {
                continue;
            }
            if p <= 0.0 {
                return Ok(0.0);
            }
            ln += c as f64 * p.ln() - ln_gamma(c as f64 + 1.0);
        }
        return Ok(ln.exp());
    }
    // Product of binomial coefficients C(c1, c1) C(c1 + c2, c2) ...
    let mut mass = 1.0;
    let mut seen = 0u64;
    for (&c, &p) in counts.iter().zip(probs) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return Ok(0.0);
        }
        seen += c;
        mass *= binomial_coefficient_f64(seen, c) * p.powi(c as i32);
    }
    Ok(mass)
}
