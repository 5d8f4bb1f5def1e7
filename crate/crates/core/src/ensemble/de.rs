//! Differential evolution (rand/1/bin) over raw weight vectors that are projected onto
//! the simplex before each objective evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnsembleError, WeightVector};

/// How trial vectors replace population members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeUpdate {
    /// All trials of a generation are built from the previous population and evaluated
    /// together; replacements are applied afterwards in member order.
    #[default]
    Synchronous,
    /// Classic DE: each member is replaced immediately, so later trials in the same
    /// generation may use it.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub population_size: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub max_generations: usize,
    pub stall_generations: usize,
    pub objective_tolerance: f64,
    pub seed: u64,
    pub update: DeUpdate,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: 4,
            mutation: 0.8,
            crossover: 0.9,
            max_generations: 200,
            stall_generations: 30,
            objective_tolerance: 1e-8,
            seed: 0,
            update: DeUpdate::Synchronous,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |msg: &str| Err(EnsembleError::InvalidConfig(msg.to_string()));
        if self.population_size < 4 {
            return bad("population_size must be at least 4");
        }
        if !(self.mutation.is_finite() && self.mutation > 0.0) {
            return bad("mutation must be positive");
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad("crossover must be a probability");
        }
        if self.max_generations == 0 || self.stall_generations == 0 {
            return bad("generation limits must be positive");
        }
        if !(self.objective_tolerance >= 0.0) {
            return bad("objective_tolerance must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome {
    pub weights: WeightVector,
    pub objective: f64,
    pub generations: usize,
    /// Best objective after initialization and after each generation.
    pub history: Vec<f64>,
}

/// Minimizes `objective` over the `m`-simplex.
///
/// Stops after `max_generations`, or once the best objective has improved by less
/// than `objective_tolerance` for `stall_generations` consecutive generations.
/// NaN objective values and all-zero trials are treated as `+inf`.
pub fn differential_evolution_minimize<F>(
    objective: F,
    m: usize,
    config: &DeConfig,
) -> Result<DeOutcome, EnsembleError>
where
    F: Fn(&WeightVector) -> f64 + Sync,
{
    if m == 0 {
        return Err(EnsembleError::ZeroDimension);
    }
    config.validate()?;
    // A trial clipped to all zeros has no direction; scoring it would let it take over
    // the population and freeze every difference vector at zero.
    let eval = |raw: &[f64]| -> Result<(WeightVector, f64), EnsembleError> {
        let w = WeightVector::from_raw(raw)?;
        if raw.iter().all(|&v| !(v > 0.0)) {
            return Ok((w, f64::INFINITY));
        }
        let v = objective(&w);
        Ok((w, if v.is_nan() { f64::INFINITY } else { v }))
    };
    if m == 1 {
        let (weights, objective) = eval(&[1.0])?;
        return Ok(DeOutcome {
            weights,
            objective,
            generations: 0,
            history: vec![objective],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let np = config.population_size;
    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| (0..m).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut fitness: Vec<f64> = population
        .par_iter()
        .map(|raw| eval(raw).map(|(_, v)| v))
        .collect::<Result<_, _>>()?;

    let best_of = |fitness: &[f64]| -> usize {
        (0..fitness.len())
            .min_by(|&a, &b| fitness[a].total_cmp(&fitness[b]))
            .expect("non-empty population")
    };
    let mut best = fitness[best_of(&fitness)];
    let mut history = vec![best];
    let mut stalled = 0;
    let mut generations = 0;

    while generations < config.max_generations {
        generations += 1;
        match config.update {
            DeUpdate::Synchronous => {
                let trials: Vec<Vec<f64>> = (0..np)
                    .map(|i| trial_vector(&population, i, config, &mut rng))
                    .collect();
                let scores: Vec<f64> = trials
                    .par_iter()
                    .map(|raw| eval(raw).map(|(_, v)| v))
                    .collect::<Result<_, _>>()?;
                for (i, (trial, score)) in trials.into_iter().zip(scores).enumerate() {
                    if score < fitness[i] {
                        population[i] = trial;
                        fitness[i] = score;
                    }
                }
            }
            DeUpdate::Sequential => {
                for i in 0..np {
                    let trial = trial_vector(&population, i, config, &mut rng);
                    let (_, score) = eval(&trial)?;
                    if score < fitness[i] {
                        population[i] = trial;
                        fitness[i] = score;
                    }
                }
            }
        }
        let gen_best = fitness[best_of(&fitness)];
        if best - gen_best < config.objective_tolerance {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best = best.min(gen_best);
        history.push(best);
        if stalled >= config.stall_generations {
            break;
        }
    }

    let (weights, objective) = eval(&population[best_of(&fitness)])?;
    Ok(DeOutcome {
        weights,
        objective,
        generations,
        history,
    })
}

/// rand/1 mutation from three distinct partners, binomial crossover with one forced
/// coordinate, then clipping to the non-negative orthant.
fn trial_vector(population: &[Vec<f64>], i: usize, config: &DeConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let np = population.len();
    let m = population[i].len();
    let mut pick = |exclude: &[usize]| loop {
        let r = rng.random_range(0..np);
        if !exclude.contains(&r) {
            break r;
        }
    };
    let r1 = pick(&[i]);
    let r2 = pick(&[i, r1]);
    let r3 = pick(&[i, r1, r2]);
    let forced = rng.random_range(0..m);
    (0..m)
        .map(|j| {
            let cross = j == forced || rng.random::<f64>() < config.crossover;
            let v = if cross {
                population[r1][j] + config.mutation * (population[r2][j] - population[r3][j])
            } else {
                population[i][j]
            };
            v.max(0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist_to_first_vertex(w: &WeightVector) -> f64 {
        let v = w.as_slice();
        (v[0] - 1.0).powi(2) + v[1].powi(2)
    }

    #[test]
    fn one_dimension_is_trivial() {
        let out = differential_evolution_minimize(|_| 3.0, 1, &DeConfig::default()).unwrap();
        assert_eq!(out.weights.as_slice(), &[1.0]);
        assert_eq!(out.objective, 3.0);
    }

    #[test]
    fn zero_dimension_fails() {
        assert_eq!(
            differential_evolution_minimize(|_| 0.0, 0, &DeConfig::default()),
            Err(EnsembleError::ZeroDimension)
        );
    }

    #[test]
    fn finds_vertex_minimum() {
        for update in [DeUpdate::Synchronous, DeUpdate::Sequential] {
            for seed in 0..5 {
                let cfg = DeConfig { seed, update, ..DeConfig::default() };
                let out = differential_evolution_minimize(dist_to_first_vertex, 2, &cfg).unwrap();
                let w = out.weights.as_slice();
                assert!((w[0] - 1.0).abs() < 0.02 && w[1] < 0.02, "{update:?} seed {seed}: {w:?}");
            }
        }
    }

    #[test]
    fn constant_objective_stays_on_simplex() {
        let out = differential_evolution_minimize(|_| 7.0, 5, &DeConfig::default()).unwrap();
        assert_eq!(out.objective, 7.0);
        assert!(WeightVector::new(out.weights.as_slice().to_vec()).is_ok());
    }

    #[test]
    fn history_is_non_increasing_and_seeded() {
        let target = [0.1, 0.2, 0.3, 0.4];
        let f = |w: &WeightVector| {
            w.as_slice().iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>()
        };
        let cfg = DeConfig { seed: 9, population_size: 12, ..DeConfig::default() };
        let a = differential_evolution_minimize(f, 4, &cfg).unwrap();
        assert!(a.history.windows(2).all(|h| h[1] <= h[0]));
        let b = differential_evolution_minimize(f, 4, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_population_rejected() {
        let cfg = DeConfig { population_size: 3, ..DeConfig::default() };
        assert!(matches!(
            differential_evolution_minimize(|_| 0.0, 2, &cfg),
            Err(EnsembleError::InvalidConfig(_))
        ));
    }
}
