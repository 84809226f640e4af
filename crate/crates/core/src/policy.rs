//! The policy genetic algorithm: fitness against sampled viruses,
//! roulette-wheel selection, single-point crossover and 0 -> 1 mutation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{single_point_crossover, PolicyEffectTable, PolicyGenome};
use crate::rng::RngStream;
use crate::virus::{effective_rate, virus_rate, ReproductionContext, StrainLedger};

/// Viruses sampled per policy evaluation.
pub const VIRUS_SAMPLE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyIndividual {
    genome: PolicyGenome,
    reduction: f64,
}

impl PolicyIndividual {
    pub fn new(genome: PolicyGenome, table: &PolicyEffectTable) -> Self {
        Self {
            genome,
            reduction: table.reduction(genome),
        }
    }

    pub fn genome(&self) -> PolicyGenome {
        self.genome
    }

    /// Cached weighted sum of the active measures' effects.
    pub fn reduction(&self) -> f64 {
        self.reduction
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyPopulation {
    members: Vec<PolicyIndividual>,
}

impl PolicyPopulation {
    pub fn new(members: Vec<PolicyIndividual>) -> Result<Self> {
        if members.is_empty() || !members.len().is_multiple_of(2) {
            return Err(Error::Config(vec![format!(
                "policy population size must be even and positive, got {}",
                members.len()
            )]));
        }
        Ok(Self { members })
    }

    /// `size` policies with no active measure.
    pub fn empty_policies(size: usize, table: &PolicyEffectTable) -> Result<Self> {
        let genome = PolicyGenome::zeros(table.len())?;
        Self::new(vec![PolicyIndividual::new(genome, table); size])
    }

    pub fn members(&self) -> &[PolicyIndividual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn mean_reduction(pop: &PolicyPopulation) -> f64 {
    pop.members.iter().fold(0.0, |acc, m| acc + m.reduction) / pop.len() as f64
}

/// Raw effective rate faced by a policy and its adjusted fitness `1/(1+r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fitness {
    pub raw: f64,
    pub adjusted: f64,
}

/// Draws individuals uniformly from a ledger (strain-count weighted).
#[derive(Clone, Debug)]
pub struct LedgerSampler {
    cumulative: Vec<u64>,
    rates: Vec<f64>,
}

impl LedgerSampler {
    pub fn new(ledger: &StrainLedger, ctx: &ReproductionContext) -> Result<Self> {
        if ledger.is_empty() {
            return Err(Error::Logic("cannot sample from an extinct population".into()));
        }
        let mut acc = 0u64;
        let (cumulative, rates) = ledger
            .iter()
            .map(|(g, n)| {
                acc += n;
                (acc, virus_rate(g, ctx))
            })
            .unzip();
        Ok(Self { cumulative, rates })
    }

    /// Reproduction rate of one uniformly drawn individual.
    pub fn sample_rate(&self, rng: &mut RngStream) -> f64 {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.below(total);
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.rates[idx]
    }
}

pub fn evaluate(p: &PolicyIndividual, sampler: &LedgerSampler, rng: &mut RngStream) -> Fitness {
    let raw = (0..VIRUS_SAMPLE)
        .map(|_| effective_rate(sampler.sample_rate(rng), p.reduction))
        .sum::<f64>()
        / VIRUS_SAMPLE as f64;
    Fitness {
        raw,
        adjusted: 1.0 / (1.0 + raw),
    }
}

pub fn policy_fitness(
    p: &PolicyIndividual,
    ledger: &StrainLedger,
    ctx: &ReproductionContext,
    rng: &mut RngStream,
) -> Result<Fitness> {
    Ok(evaluate(p, &LedgerSampler::new(ledger, ctx)?, rng))
}

/// Cumulative fitness wheel; spinning returns index `i` with probability
/// `f_i / sum(f)`.
#[derive(Clone, Debug)]
pub struct RouletteWheel {
    cumulative: Vec<f64>,
}

impl RouletteWheel {
    pub fn new(fitnesses: &[f64]) -> Result<Self> {
        if let Some(f) = fitnesses.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
            return Err(Error::Logic(format!("invalid fitness {f}")));
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = fitnesses
            .iter()
            .map(|f| {
                acc += f;
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::Logic("roulette wheel with zero total fitness".into()));
        }
        Ok(Self { cumulative })
    }

    pub fn spin(&self, rng: &mut RngStream) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.unit() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // u < total always, but guard against rounding in the last slot.
        idx.min(self.cumulative.len() - 1)
    }
}

pub fn roulette_select(fitnesses: &[f64], rng: &mut RngStream) -> Result<usize> {
    Ok(RouletteWheel::new(fitnesses)?.spin(rng))
}

/// Each inactive measure activates with probability `rate`. Active measures
/// never deactivate.
pub fn policy_mutate(genome: PolicyGenome, rate: f64, rng: &mut RngStream) -> PolicyGenome {
    if rate <= 0.0 {
        return genome;
    }
    let mut set = 0u64;
    for i in 0..genome.len() {
        if !genome.get(i) && rng.bernoulli(rate) {
            set |= 1 << i;
        }
    }
    genome.or_mask(set)
}

/// Rates driving one policy generation.
#[derive(Clone, Copy, Debug)]
pub struct BreedingRates {
    pub crossover: f64,
    pub mutation: f64,
}

/// Evaluates every policy against `ledger` and breeds the full replacement
/// population.
///
/// Fitness of member `i` uses the substream `stream/"fitness"/i`; selection,
/// crossover and mutation run sequentially on `stream/"breed"`.
pub fn next_generation(
    pop: &PolicyPopulation,
    ledger: &StrainLedger,
    ctx: &ReproductionContext,
    table: &PolicyEffectTable,
    rates: BreedingRates,
    stream: &RngStream,
) -> Result<PolicyPopulation> {
    let sampler = LedgerSampler::new(ledger, ctx)?;
    let fitness_stream = stream.derive("fitness");
    let fitnesses: Vec<f64> = pop
        .members
        .par_iter()
        .enumerate()
        .map(|(i, p)| evaluate(p, &sampler, &mut fitness_stream.derive_index(i as u64)).adjusted)
        .collect();
    breed(pop, &fitnesses, table, rates, &mut stream.derive("breed"))
}

/// Selection, crossover and mutation given precomputed adjusted fitnesses.
pub fn breed(
    pop: &PolicyPopulation,
    fitnesses: &[f64],
    table: &PolicyEffectTable,
    rates: BreedingRates,
    rng: &mut RngStream,
) -> Result<PolicyPopulation> {
    if fitnesses.len() != pop.len() {
        return Err(Error::Logic(format!(
            "{} fitness values for {} policies",
            fitnesses.len(),
            pop.len()
        )));
    }
    let wheel = RouletteWheel::new(fitnesses)?;
    let mut children = Vec::with_capacity(pop.len());
    for _ in 0..pop.len() / 2 {
        let a = pop.members[wheel.spin(rng)].genome;
        let b = pop.members[wheel.spin(rng)].genome;
        let len = a.len();
        let (c1, c2) = if len >= 2 && rng.bernoulli(rates.crossover) {
            single_point_crossover(a, b, rng.range_inclusive(1, len - 1))?
        } else {
            (a, b)
        };
        for child in [c1, c2] {
            let genome = policy_mutate(child, rates.mutation, rng);
            children.push(PolicyIndividual::new(genome, table));
        }
    }
    PolicyPopulation::new(children)
}
