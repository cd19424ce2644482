//! Multi-objective configuration optimization with IBEA.
//!
//! Two operator sets share one loop: consistency-preserving mode mutates by
//! applying generated operation variants and crosses over by replaying the
//! partner's application history, so every individual stays valid by
//! construction; the repair baseline flips raw bits and falls back to a SAT
//! repair. Runs are single-threaded and deterministic per seed.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cpco::{apply_flat_rule, rule_name, CpcoSuite};
use crate::fad::FeatureDecision;
use crate::fm::{Configuration, FeatureId, FeatureModel};
use crate::metrics::{pareto_front, ParetoFront};
use crate::sat::{cnf_from_model, lit, solve, Cnf, FeatureClassification, Polarity};

/// Quality attributes of a single feature.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct FeatureAttributes {
    /// User-facing value; higher is better. Uniform on [0, 10].
    pub usability: f64,
    /// Power draw (mW-equivalent); lower is better. Uniform on [0, 10].
    pub battery: f64,
    /// Memory footprint (KB-equivalent); lower is better. Uniform on [0, 100].
    pub footprint: f64,
}

/// Per-feature quality attributes, indexed by [`FeatureId`].
#[derive(Clone, PartialEq, Debug)]
pub struct AttributeTable {
    pub seed: u64,
    pub features: Vec<FeatureAttributes>,
}

impl AttributeTable {
    pub fn get(&self, id: FeatureId) -> &FeatureAttributes {
        &self.features[id.0]
    }
}

/// Draws one attribute triple per feature, in feature order, from a seeded
/// uniform distribution. Deterministic per `(fm, seed)`.
pub fn generate_attributes(fm: &FeatureModel, seed: u64) -> AttributeTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = (0..fm.feature_count())
        .map(|_| FeatureAttributes {
            usability: rng.gen_range(0.0..10.0),
            battery: rng.gen_range(0.0..10.0),
            footprint: rng.gen_range(0.0..100.0),
        })
        .collect();
    AttributeTable { seed, features }
}

/// All four objectives, minimized: negated total usability, total battery
/// draw, total footprint of the active features, and the number of inactive
/// features (a tie-breaking helper that is excluded from hypervolume).
pub fn evaluate(c: &Configuration, attrs: &AttributeTable) -> [f64; 4] {
    debug_assert_eq!(c.len(), attrs.features.len());
    let mut objectives = [0.0f64; 4];
    for (bit, a) in c.bits().iter().zip(&attrs.features) {
        if *bit {
            objectives[0] -= a.usability;
            objectives[1] += a.battery;
            objectives[2] += a.footprint;
        }
    }
    objectives[3] = c.inactive_count() as f64;
    objectives
}

/// Which operator set drives the search.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchMode {
    /// Consistency-preserving operations: validity by construction.
    Cpco,
    /// Bit flips with SAT repair; validity is monitored, not guaranteed.
    RepairBaseline,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Cpco => "cpco",
            SearchMode::RepairBaseline => "repair-baseline",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown search mode `{0}` (expected `cpco` or `repair-baseline`)")]
pub struct ModeParseError(pub String);

impl FromStr for SearchMode {
    type Err = ModeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpco" => Ok(SearchMode::Cpco),
            "repair-baseline" => Ok(SearchMode::RepairBaseline),
            other => Err(ModeParseError(other.to_string())),
        }
    }
}

/// IBEA run settings.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SearchParams {
    pub population: usize,
    pub evaluations: usize,
    /// Scaling factor of the additive-ε indicator fitness.
    pub kappa: f64,
    pub crossover_rate: f64,
    pub seed: u64,
    pub mode: SearchMode,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            population: 100,
            evaluations: 5000,
            kappa: 0.05,
            crossover_rate: 0.8,
            seed: 0,
            mode: SearchMode::Cpco,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("population must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("evaluation budget {evaluations} is below the population size {population}")]
    BudgetBelowPopulation { evaluations: usize, population: usize },
    #[error("kappa must be positive")]
    NonPositiveKappa,
    #[error("crossover rate must lie in [0, 1]")]
    CrossoverRateOutOfRange,
    #[error("cpco mode requires an operation suite")]
    MissingSuite,
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.population < 2 {
            return Err(SearchError::PopulationTooSmall(self.population));
        }
        if self.evaluations < self.population {
            return Err(SearchError::BudgetBelowPopulation {
                evaluations: self.evaluations,
                population: self.population,
            });
        }
        // NaN must fail too, so the comparison cannot be `<= 0.0`.
        if self.kappa.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(SearchError::NonPositiveKappa);
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(SearchError::CrossoverRateOutOfRange);
        }
        Ok(())
    }
}

/// One concrete operation application: a rule (named by its decision) and
/// the index of the flattened variant that was applied.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct VariantId {
    pub decision: FeatureDecision,
    pub variant: usize,
}

impl VariantId {
    /// E.g. `De_Screen3@0`.
    pub fn label(&self, fm: &FeatureModel) -> String {
        format!("{}@{}", rule_name(fm, self.decision), self.variant)
    }
}

/// One individual: an activation vector plus the operation history that
/// produced it from its initial-population ancestor.
#[derive(Clone, PartialEq, Debug)]
pub struct Solution {
    pub activation: Configuration,
    pub history: Vec<VariantId>,
    /// Index into the run's initial population this individual grew from.
    pub ancestor: usize,
    pub objectives: [f64; 4],
    pub valid: bool,
}

/// Snapshot taken every `population` evaluations. The front covers the
/// first three objectives of the valid members only.
#[derive(Clone, PartialEq, Debug)]
pub struct Checkpoint {
    pub nfe: u64,
    pub front: ParetoFront,
    pub valid_ratio: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct RunResult {
    /// Activation vectors of the initial population, in ancestor order.
    pub initial: Vec<Configuration>,
    pub population: Vec<Solution>,
    pub checkpoints: Vec<Checkpoint>,
}

pub struct Searcher<'a> {
    fm: &'a FeatureModel,
    attrs: &'a AttributeTable,
    suite: Option<&'a CpcoSuite>,
    params: SearchParams,
    cnf: Cnf,
    real_optional: Vec<FeatureId>,
}

impl<'a> Searcher<'a> {
    pub fn new(
        fm: &'a FeatureModel,
        cls: &FeatureClassification,
        attrs: &'a AttributeTable,
        suite: Option<&'a CpcoSuite>,
        params: SearchParams,
    ) -> Result<Self, SearchError> {
        params.validate()?;
        if params.mode == SearchMode::Cpco && suite.is_none() {
            return Err(SearchError::MissingSuite);
        }
        Ok(Searcher {
            fm,
            attrs,
            suite,
            params,
            cnf: cnf_from_model(fm),
            real_optional: cls.real_optional(),
        })
    }

    /// Runs the full IBEA loop and returns the final population together
    /// with one checkpoint per generation.
    pub fn run(&self) -> RunResult {
        let start = Instant::now();
        let mu = self.params.population;
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);

        let seeded = self.initial_population(&mut rng);
        let initial: Vec<Configuration> = seeded.iter().map(|s| s.activation.clone()).collect();
        let mut nfe = seeded.len() as u64;
        let (mut population, mut fitness) =
            environmental_selection(seeded, mu, self.params.kappa);
        let mut checkpoints = vec![self.checkpoint(&population, nfe, &start)];

        while nfe + mu as u64 <= self.params.evaluations as u64 {
            let mut offspring = Vec::with_capacity(mu);
            while offspring.len() < mu {
                let a = tournament(&mut rng, &fitness);
                let b = tournament(&mut rng, &fitness);
                let (c1, c2) = if rng.gen::<f64>() < self.params.crossover_rate {
                    match self.params.mode {
                        SearchMode::Cpco => self.crossover(&population[a], &population[b]),
                        SearchMode::RepairBaseline => {
                            self.baseline_crossover(&population[a], &population[b], &mut rng)
                        }
                    }
                } else {
                    (population[a].clone(), population[b].clone())
                };
                for child in [c1, c2] {
                    if offspring.len() == mu {
                        break;
                    }
                    let mut mutated = match self.params.mode {
                        SearchMode::Cpco => self.mutate(&child, &mut rng),
                        SearchMode::RepairBaseline => self.repair_mutation(&child, &mut rng),
                    };
                    self.evaluate_into(&mut mutated);
                    if self.params.mode == SearchMode::Cpco {
                        assert!(mutated.valid, "consistency-preserving offspring went invalid");
                    }
                    offspring.push(mutated);
                }
            }
            nfe += offspring.len() as u64;
            population.extend(offspring);
            (population, fitness) = environmental_selection(population, mu, self.params.kappa);
            checkpoints.push(self.checkpoint(&population, nfe, &start));
        }

        RunResult {
            initial,
            population,
            checkpoints,
        }
    }

    /// Seeds the population with SAT models drawn under a per-solution
    /// strategy: random polarity, prefer-all-inactive, or
    /// prefer-all-active.
    pub fn initial_population(&self, rng: &mut impl Rng) -> Vec<Solution> {
        let n = self.fm.feature_count();
        (0..self.params.population)
            .map(|i| {
                let polarity = match rng.gen_range(0..3u8) {
                    0 => Polarity::Seeded(rng.gen()),
                    1 => Polarity::all_false(n),
                    _ => Polarity::all_true(n),
                };
                let bits = solve(&self.cnf, &[], &polarity).expect("model is satisfiable");
                let mut s = Solution {
                    activation: Configuration::new(bits),
                    history: Vec::new(),
                    ancestor: i,
                    objectives: [0.0; 4],
                    valid: false,
                };
                self.evaluate_into(&mut s);
                s
            })
            .collect()
    }

    /// Applies one operation variant for a uniformly drawn real-optional
    /// feature, toggling its current state. Features whose variant is
    /// missing (budget-truncated suites) are redrawn; after as many
    /// redraws as there are real-optional features the input is returned
    /// unchanged.
    pub fn mutate(&self, s: &Solution, rng: &mut impl Rng) -> Solution {
        let suite = self.suite.expect("cpco operators require a suite");
        if suite.variant_count() == 0 || self.real_optional.is_empty() {
            return s.clone();
        }
        for _ in 0..self.real_optional.len() {
            let feature = self.real_optional[rng.gen_range(0..self.real_optional.len())];
            let decision =
                FeatureDecision::new(feature, !s.activation.is_active(feature));
            let Some(variants) = suite.variants.get(&decision) else {
                continue;
            };
            if variants.is_empty() {
                continue;
            }
            let variant = if variants.len() == 1 {
                0
            } else {
                rng.gen_range(0..variants.len())
            };
            let next = apply_flat_rule(&variants[variant], &s.activation)
                .expect("origin bit matches the variant precondition");
            let mut out = s.clone();
            out.activation = next;
            out.history.push(VariantId { decision, variant });
            return out;
        }
        s.clone()
    }

    /// History-splicing crossover: each child copies one parent and then
    /// replays the other parent's history, skipping variants already in
    /// its own history and variants whose precondition does not hold.
    pub fn crossover(&self, a: &Solution, b: &Solution) -> (Solution, Solution) {
        (self.splice(a, b), self.splice(b, a))
    }

    fn splice(&self, base: &Solution, donor: &Solution) -> Solution {
        let suite = self.suite.expect("cpco operators require a suite");
        let mut child = base.clone();
        for id in &donor.history {
            if child.history.contains(id) {
                continue;
            }
            let Some(rule) = suite
                .variants
                .get(&id.decision)
                .and_then(|vs| vs.get(id.variant))
            else {
                continue;
            };
            if let Some(next) = apply_flat_rule(rule, &child.activation) {
                child.activation = next;
                child.history.push(*id);
            }
        }
        child
    }

    /// Single-point bit splice without repair; children may be invalid.
    /// Histories do not survive raw splicing and are cleared.
    pub fn baseline_crossover(
        &self,
        a: &Solution,
        b: &Solution,
        rng: &mut impl Rng,
    ) -> (Solution, Solution) {
        let n = self.fm.feature_count();
        if n < 2 {
            return (a.clone(), b.clone());
        }
        let cut = rng.gen_range(1..n);
        let splice = |head: &Solution, tail: &Solution| {
            let mut bits = head.activation.bits().to_vec();
            bits[cut..].copy_from_slice(&tail.activation.bits()[cut..]);
            Solution {
                activation: Configuration::new(bits),
                history: Vec::new(),
                ancestor: head.ancestor,
                objectives: [0.0; 4],
                valid: false,
            }
        };
        (splice(a, b), splice(b, a))
    }

    /// Flips one uniformly drawn bit. If the result is invalid, asks the
    /// solver for a model that keeps the flipped bit, preferring the
    /// remaining bits as they are; when no such model exists the flip is
    /// reverted.
    pub fn repair_mutation(&self, s: &Solution, rng: &mut impl Rng) -> Solution {
        let bit = FeatureId(rng.gen_range(0..self.fm.feature_count()));
        let flipped = !s.activation.is_active(bit);
        let mut bits = s.activation.clone();
        bits.set(bit, flipped);
        let mut out = s.clone();
        out.history.clear();
        if self.fm.is_valid(&bits) {
            out.activation = bits;
        } else if let Some(model) = solve(
            &self.cnf,
            &[lit(bit, flipped)],
            &Polarity::Prefer(bits.bits().to_vec()),
        ) {
            out.activation = Configuration::new(model);
        }
        out
    }

    /// Re-applies a history from an initial activation vector. `None` when
    /// a variant is missing from the suite or a precondition fails — both
    /// impossible for histories produced by this searcher.
    pub fn replay_history(
        &self,
        start: &Configuration,
        history: &[VariantId],
    ) -> Option<Configuration> {
        let suite = self.suite?;
        let mut cfg = start.clone();
        for id in history {
            let rule = suite.variants.get(&id.decision)?.get(id.variant)?;
            cfg = apply_flat_rule(rule, &cfg)?;
        }
        Some(cfg)
    }

    fn evaluate_into(&self, s: &mut Solution) {
        s.objectives = evaluate(&s.activation, self.attrs);
        s.valid = self.fm.is_valid(&s.activation);
    }

    fn checkpoint(&self, population: &[Solution], nfe: u64, start: &Instant) -> Checkpoint {
        let points: Vec<Vec<f64>> = population
            .iter()
            .filter(|s| s.valid)
            .map(|s| s.objectives[..3].to_vec())
            .collect();
        let valid = points.len();
        Checkpoint {
            nfe,
            front: pareto_front(&points),
            valid_ratio: valid as f64 / population.len() as f64,
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    }
}

/// Binary tournament on fitness; the first contestant wins ties.
fn tournament(rng: &mut impl Rng, fitness: &[f64]) -> usize {
    let i = rng.gen_range(0..fitness.len());
    let j = rng.gen_range(0..fitness.len());
    if fitness[j] > fitness[i] {
        j
    } else {
        i
    }
}

/// Additive-ε indicator over objectives normalized to the pool's
/// per-dimension min/max: the smallest shift after which `a` weakly
/// dominates `b`.
fn indicator_matrix(pool: &[Solution]) -> Vec<Vec<f64>> {
    let dims = pool.first().map_or(0, |s| s.objectives.len());
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for s in pool {
        for d in 0..dims {
            lo[d] = lo[d].min(s.objectives[d]);
            hi[d] = hi[d].max(s.objectives[d]);
        }
    }
    let normalized: Vec<Vec<f64>> = pool
        .iter()
        .map(|s| {
            (0..dims)
                .map(|d| {
                    if hi[d] > lo[d] {
                        (s.objectives[d] - lo[d]) / (hi[d] - lo[d])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let n = pool.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            matrix[x][y] = normalized[x]
                .iter()
                .zip(&normalized[y])
                .map(|(fx, fy)| fx - fy)
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    matrix
}

/// IBEA environmental selection: repeatedly removes the individual with
/// the worst indicator fitness, updating the survivors' fitness after each
/// removal. Returns the `target` survivors in order plus their final
/// fitness values (used for mating selection).
fn environmental_selection(
    pool: Vec<Solution>,
    target: usize,
    kappa: f64,
) -> (Vec<Solution>, Vec<f64>) {
    assert!(target >= 1 && target <= pool.len());
    let indicator = indicator_matrix(&pool);
    let n = pool.len();
    let c = indicator
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = c * kappa;
    let mut fitness = vec![0.0f64; n];
    if scale > 0.0 {
        for (x, f) in fitness.iter_mut().enumerate() {
            *f = (0..n)
                .filter(|&y| y != x)
                .map(|y| -(-indicator[y][x] / scale).exp())
                .sum();
        }
    }
    let mut alive = vec![true; n];
    let mut alive_count = n;
    while alive_count > target {
        let worst = (0..n)
            .filter(|&i| alive[i])
            .min_by(|&i, &j| fitness[i].total_cmp(&fitness[j]))
            .expect("pool is non-empty");
        alive[worst] = false;
        alive_count -= 1;
        if scale > 0.0 {
            for y in 0..n {
                if alive[y] {
                    fitness[y] += (-indicator[worst][y] / scale).exp();
                }
            }
        }
    }
    let mut survivors = Vec::with_capacity(target);
    let mut survivor_fitness = Vec::with_capacity(target);
    for (i, s) in pool.into_iter().enumerate() {
        if alive[i] {
            survivors.push(s);
            survivor_fitness.push(fitness[i]);
        }
    }
    (survivors, survivor_fitness)
}
