//! Independent oracles shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use std::collections::HashMap;

use perishable_core::dist::multinomial_pmf;
use perishable_core::mdp::MdpModel;
use perishable_core::rng::DayStream;
use perishable_core::scenario::b::{sample_issued_frequencies, ScenarioB, ScenarioBParams};
use perishable_core::scenario::c::ScenarioC;
use perishable_core::sim::{SimState, Simulator};
use perishable_core::tabular::TabularMdp;
use perishable_core::vi::bellman_backup_batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn poisson(mu: f64, k: usize) -> f64 {
    let mut p = (-mu).exp();
    for j in 1..=k {
        p *= mu / j as f64;
    }
    p
}

/// Distance of an observed frequency from `p` in binomial standard errors,
/// after a 1e-4 allowance for cells too rare to have a useful SE.
pub fn z_score(count: u64, n: u64, p: f64) -> f64 {
    let freq = count as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let excess = ((freq - p).abs() - 1e-4).max(0.0);
    if excess == 0.0 {
        0.0
    } else {
        excess / se
    }
}

/// Solves `(I - gamma P) v = r` by Gaussian elimination with partial pivoting.
pub fn policy_value(m: &TabularMdp, policy: &[usize]) -> Vec<f64> {
    let n = m.num_states();
    let mut a = vec![vec![0.0; n + 1]; n];
    for s in 0..n {
        a[s][s] += 1.0;
        let probs = m.outcome_probabilities(s, policy[s]);
        for (o, p) in probs.iter().enumerate() {
            let (next, r) = m.transition(s, policy[s], &o);
            a[s][next] -= m.gamma() * p;
            a[s][n] += p * r;
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|s| a[s][n] / a[s][s]).collect()
}

/// Enumerates every deterministic policy and keeps the one with the largest
/// total value (the optimal policy dominates in every state).
pub fn brute_force_policy(m: &TabularMdp) -> Vec<u32> {
    let (n, k) = (m.num_states(), m.num_actions());
    let total = k.pow(n as u32);
    let mut best = (f64::NEG_INFINITY, vec![]);
    for code in 0..total {
        let mut c = code;
        let policy: Vec<usize> = (0..n)
            .map(|_| {
                let a = c % k;
                c /= k;
                a
            })
            .collect();
        let score: f64 = policy_value(m, &policy).iter().sum();
        if score > best.0 + 1e-12 {
            best = (score, policy);
        }
    }
    best.1.into_iter().map(|a| a as u32).collect()
}

pub fn scenario_b(mu_a: f64, mu_b: f64, rho: f64, cap: usize) -> ScenarioB {
    ScenarioB::new(ScenarioBParams {
        m: 2,
        mu_a,
        mu_b,
        a_max_a: Some(cap),
        a_max_b: Some(cap),
        rho,
        ..Default::default()
    })
    .unwrap()
}

/// Single-product FIFO model built from scratch: state `[x_fresh, x_old]`,
/// Poisson demand, reward `c_r * issued - c_v * order`.
pub fn single_product(mu: f64, cap: usize, c_r: f64, c_v: f64) -> TabularMdp {
    let side = cap + 1;
    let states = side * side;
    let outcomes = 2 * cap + 1;
    let mut probs = Vec::new();
    let mut next = Vec::new();
    let mut rewards = Vec::new();
    for s in 0..states {
        let (fresh, old) = (s / side, s % side);
        let stock = fresh + old;
        for a in 0..side {
            for h in 0..outcomes {
                let p = if h < stock {
                    poisson(mu, h)
                } else if h == stock {
                    1.0 - (0..stock).map(|k| poisson(mu, k)).sum::<f64>()
                } else {
                    0.0
                };
                let h = h.min(stock);
                let from_old = h.min(old);
                let fresh_left = fresh - (h - from_old);
                probs.push(p);
                next.push(a * side + fresh_left);
                rewards.push(c_r * h as f64 - c_v * a as f64);
            }
        }
    }
    TabularMdp::new(states, side, outcomes, probs, next, rewards, 1.0).unwrap()
}

fn sweep<M: MdpModel>(model: &M, values: &[f64]) -> Vec<f64> {
    let states: Vec<usize> = (0..model.num_states()).collect();
    let mut out = vec![0.0; states.len()];
    let mut acts = vec![0u32; states.len()];
    bellman_backup_batch(model, 1.0, values, &states, &mut out, &mut acts);
    out
}

/// Largest difference between the two-product model without substitution
/// and the sum of two single-product oracles after `sweeps` undiscounted
/// sweeps from zero.
pub fn rho_zero_decomposition_error(cap: usize, sweeps: usize) -> f64 {
    let b = scenario_b(1.0, 1.5, 0.0, cap);
    let pa = single_product(1.0, cap, 1.0, 0.5);
    let pb = single_product(1.5, cap, 1.0, 0.5);
    let side = cap + 1;
    let mut v = vec![0.0; b.num_states()];
    let mut va = vec![0.0; pa.num_states()];
    let mut vb = vec![0.0; pb.num_states()];
    for _ in 0..sweeps {
        v = sweep(&b, &v);
        va = sweep(&pa, &va);
        vb = sweep(&pb, &vb);
    }
    (0..b.num_states())
        .map(|s| {
            let c = b.state_components(s);
            (v[s] - va[c[0] * side + c[1]] - vb[c[2] * side + c[3]]).abs()
        })
        .fold(0.0, f64::max)
}

/// Worst z-score between simulated and analytic issued pmfs at one state.
/// Fails outright if the simulator issues beyond stock.
pub fn issued_pmf_z_at(b: &ScenarioB, comps: &[usize], n: u64, seed: u64) -> Result<f64, String> {
    let (i_a, i_b) = b.stock_totals(comps);
    let pmf = b.issued_joint_pmf(i_a, i_b);
    let counts = sample_issued_frequencies(b, comps, n, seed);
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for ha in 0..=i_a {
        for hb in 0..=i_b {
            let c = counts.get(&(ha, hb)).copied().unwrap_or(0);
            total += c;
            worst = worst.max(z_score(c, n, pmf.prob(ha, hb)));
        }
    }
    if total != n {
        return Err(format!("issued beyond stock at {comps:?}"));
    }
    Ok(worst)
}

/// [`issued_pmf_z_at`] over `n_states` random states.
pub fn issued_pmf_max_z(b: &ScenarioB, n_states: usize, n: u64, seed: u64) -> Result<f64, String> {
    let (cap_a, cap_b) = b.a_max();
    let m = b.params().m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..n_states {
        let mut comps: Vec<usize> = (0..m).map(|_| rng.gen_range(0..=cap_a)).collect();
        comps.extend((0..m).map(|_| rng.gen_range(0..=cap_b)));
        worst = worst.max(issued_pmf_z_at(b, &comps, n, seed * 1000 + k as u64)?);
    }
    Ok(worst)
}

/// Worst z-score of sampled receipt vectors against the multinomial pmf,
/// over every cell with probability above 0.005 and the per-category means.
pub fn receipt_max_z(sim: &ScenarioC, a: usize, n: u64, seed: u64) -> f64 {
    let m = sim.params().m;
    let probs = sim.receipt_category_probs(a).to_vec();
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    let mut sums = vec![0.0f64; m];
    for day in 0..n {
        let y = sim.sample_receipts(a, &DayStream::new(seed, day));
        assert_eq!(y[..m].iter().sum::<usize>(), a, "receipts must account for the order");
        for k in 0..m {
            sums[k] += y[k] as f64;
        }
        *counts.entry(y[..m].to_vec()).or_insert(0) += 1;
    }
    let mut worst: f64 = 0.0;
    for k in 0..m {
        let se = (a as f64 * probs[k] * (1.0 - probs[k]) / n as f64).sqrt();
        let dev = (sums[k] / n as f64 - a as f64 * probs[k]).abs();
        if dev > 1e-12 {
            worst = worst.max(dev / se);
        }
    }
    for (y, c) in counts {
        let y: Vec<u64> = y.iter().map(|&v| v as u64).collect();
        let p = multinomial_pmf(&y, &probs).unwrap();
        if p > 0.005 {
            worst = worst.max(z_score(c, n, p));
        }
    }
    worst
}

/// Random orders for `days` days; every product's units must balance and the
/// closing stock must be the next day's opening stock.
pub fn check_conservation<S: Simulator>(
    sim: &S,
    days: u64,
    action: impl Fn(&mut ChaCha8Rng) -> S::Action,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut state: SimState = sim.initial_state();
    let mut prev_closing: Option<Vec<u32>> = None;
    for day in 0..days {
        let a = action(&mut rng);
        let (next, reward, stats) = sim.sample_step(&state, a, DayStream::new(1, day));
        if !reward.is_finite() {
            return Err(format!("day {day}: reward {reward}"));
        }
        let products = &stats.products[..sim.products().len()];
        for (k, p) in products.iter().enumerate() {
            if !p.is_conserved() {
                return Err(format!("day {day} product {k}: {p:?}"));
            }
            if let Some(prev) = &prev_closing {
                if prev[k] != p.opening {
                    return Err(format!("day {day} product {k}: closing {} then opening {}", prev[k], p.opening));
                }
            }
        }
        prev_closing = Some(products.iter().map(|p| p.closing).collect());
        state = next;
    }
    Ok(())
}
