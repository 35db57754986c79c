//! Searching heuristic parameters by simulated return.
//!
//! Every candidate is scored by the same objective, which is expected to use
//! a fixed base seed so that candidates see common random numbers.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::sim::MeanSd;

/// One integer parameter with inclusive bounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub lo: usize,
    pub hi: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<Param>,
}

impl SearchSpace {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Config("search space needs at least one parameter".into()));
        }
        if let Some(p) = params.iter().find(|p| p.lo > p.hi) {
            return Err(Error::Config(format!("parameter {} has lo > hi", p.name)));
        }
        Ok(SearchSpace { params })
    }

    pub fn one(name: &str, lo: usize, hi: usize) -> Result<Self> {
        Self::new(vec![Param {
            name: name.into(),
            lo,
            hi,
        }])
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn contains(&self, x: &[usize]) -> bool {
        x.len() == self.dim() && self.params.iter().zip(x).all(|(p, &v)| (p.lo..=p.hi).contains(&v))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        self.params.iter().map(|p| rng.gen_range(p.lo..=p.hi)).collect()
    }
}

/// Anything that scores a parameter vector; higher is better.
pub trait Objective: Sync {
    fn score(&self, params: &[usize]) -> Result<MeanSd>;
}

impl<F> Objective for F
where
    F: Fn(&[usize]) -> Result<MeanSd> + Sync,
{
    fn score(&self, params: &[usize]) -> Result<MeanSd> {
        self(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scored {
    pub params: Vec<usize>,
    pub mean: f64,
    pub sd: f64,
}

impl Scored {
    fn new(params: Vec<usize>, s: MeanSd) -> Self {
        Scored {
            params,
            mean: s.mean,
            sd: s.sd,
        }
    }

    /// Higher mean wins; equal means go to the lexicographically smaller vector.
    fn beats(&self, other: &Scored) -> bool {
        self.mean > other.mean || (self.mean == other.mean && self.params < other.params)
    }
}

/// One line of the search log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub generation: usize,
    pub candidate: Scored,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: Scored,
    /// Generations run; 1 for a grid.
    pub generations: usize,
    pub log: Vec<LogRow>,
}

/// Scores every value of a one-parameter space.
pub fn grid_search(space: &SearchSpace, objective: &dyn Objective) -> Result<SearchResult> {
    if space.dim() != 1 {
        return Err(Error::Config(format!("grid search needs one parameter, got {}", space.dim())));
    }
    let p = &space.params[0];
    let table: Vec<Scored> = (p.lo..=p.hi)
        .into_par_iter()
        .map(|v| Ok(Scored::new(vec![v], objective.score(&[v])?)))
        .collect::<Result<_>>()?;
    let best = best_of(&table).clone();
    Ok(SearchResult {
        best,
        generations: 1,
        log: table
            .into_iter()
            .map(|candidate| LogRow { generation: 0, candidate })
            .collect(),
    })
}

fn best_of(scored: &[Scored]) -> &Scored {
    let mut best = &scored[0];
    for s in &scored[1..] {
        if s.beats(best) {
            best = s;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub max_generations: usize,
    /// Stop once the best vector has not changed for this many generations.
    pub patience: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `1 / dimension` when absent.
    pub mutation_rate: Option<f64>,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            max_generations: 100,
            patience: 5,
            tournament_size: 2,
            crossover_rate: 0.9,
            mutation_rate: None,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must be at least 2".into()));
        }
        if self.max_generations == 0 || self.tournament_size == 0 {
            return Err(Error::Config("max_generations and tournament_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config("crossover_rate outside [0, 1]".into()));
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config("mutation_rate outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Generational GA with one elite, single-step neighbours of the elite
/// filling up to half of each new generation, and the rest bred by
/// tournament selection, uniform crossover and per-gene mutation. Mutation resets a gene uniformly or, with equal
/// chance, moves it one step up or down. Scores are cached by vector.
pub fn ga_search(space: &SearchSpace, objective: &dyn Objective, config: &GaConfig) -> Result<SearchResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rate = config.mutation_rate.unwrap_or(1.0 / space.dim() as f64);
    let mut cache: HashMap<Vec<usize>, MeanSd> = HashMap::new();
    let mut population: Vec<Vec<usize>> = (0..config.population).map(|_| space.sample(&mut rng)).collect();
    let mut log = Vec::new();
    let mut best: Option<Scored> = None;
    let mut stalled = 0;
    let mut generation = 0;
    while generation < config.max_generations {
        let mut fresh: Vec<Vec<usize>> = population.iter().filter(|c| !cache.contains_key(*c)).cloned().collect();
        fresh.sort();
        fresh.dedup();
        let scores: Vec<MeanSd> = fresh
            .par_iter()
            .map(|c| objective.score(c))
            .collect::<Result<_>>()?;
        cache.extend(fresh.into_iter().zip(scores));
        let scored: Vec<Scored> = population.iter().map(|c| Scored::new(c.clone(), cache[c])).collect();
        log.extend(scored.iter().map(|s| LogRow {
            generation,
            candidate: s.clone(),
        }));
        let gen_best = best_of(&scored).clone();
        match &best {
            Some(b) if !gen_best.beats(b) => stalled += 1,
            Some(b) if gen_best.params == b.params => stalled += 1,
            _ => {
                best = Some(gen_best);
                stalled = 0;
            }
        }
        generation += 1;
        if stalled >= config.patience {
            break;
        }
        let incumbent = best.clone().expect("set in first generation");
        let mut next = vec![incumbent.params.clone()];
        let mut moves = neighbours(space, &incumbent.params);
        moves.shuffle(&mut rng);
        next.extend(moves.into_iter().take(config.population / 2));
        while next.len() < config.population {
            let a = tournament(&scored, config.tournament_size, &mut rng);
            let b = tournament(&scored, config.tournament_size, &mut rng);
            let mut child = if rng.gen::<f64>() < config.crossover_rate {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| if rng.gen::<bool>() { x } else { y })
                    .collect()
            } else {
                a.to_vec()
            };
            for (gene, p) in child.iter_mut().zip(&space.params) {
                if rng.gen::<f64>() < rate {
                    *gene = if rng.gen::<bool>() {
                        rng.gen_range(p.lo..=p.hi)
                    } else if rng.gen::<bool>() {
                        (*gene + 1).min(p.hi)
                    } else {
                        gene.saturating_sub(1).max(p.lo)
                    };
                }
            }
            next.push(child);
        }
        population = next;
    }
    Ok(SearchResult {
        best: best.expect("at least one generation"),
        generations: generation,
        log,
    })
}

/// Vectors one step away from `x` along a single coordinate.
fn neighbours(space: &SearchSpace, x: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (i, p) in space.params.iter().enumerate() {
        if x[i] > p.lo {
            let mut y = x.to_vec();
            y[i] -= 1;
            out.push(y);
        }
        if x[i] < p.hi {
            let mut y = x.to_vec();
            y[i] += 1;
            out.push(y);
        }
    }
    out
}

fn tournament<'a, R: Rng>(scored: &'a [Scored], size: usize, rng: &mut R) -> &'a [usize] {
    let mut winner = &scored[rng.gen_range(0..scored.len())];
    for _ in 1..size {
        let c = &scored[rng.gen_range(0..scored.len())];
        if c.beats(winner) {
            winner = c;
        }
    }
    &winner.params
}

/// Writes the search log as CSV: generation, one column per parameter, mean, sd.
pub fn write_search_log(path: &Path, space: &SearchSpace, log: &[LogRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut header = vec!["generation".to_string()];
    header.extend(space.names().iter().map(|n| n.to_string()));
    header.push("return_mean".into());
    header.push("return_sd".into());
    out.write_record(&header).map_err(csv_err)?;
    for row in log {
        let mut rec = vec![row.generation.to_string()];
        rec.extend(row.candidate.params.iter().map(|v| v.to_string()));
        rec.push(row.candidate.mean.to_string());
        rec.push(row.candidate.sd.to_string());
        out.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    atomic_write(path, |w| std::io::Write::write_all(w, &bytes))
}
