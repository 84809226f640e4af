//! Coevolution of a virus population and a population of containment
//! policies, run as two coupled genetic algorithms.
//!
//! Viruses carry a bit genome of mutated genes that shift their reproduction
//! rate; policies carry a bit genome of active measures that reduce it. The
//! virus population is kept as a [`StrainLedger`] of genome counts so runs
//! can reach billions of individuals.

pub mod cli;
pub mod engine;
pub mod error;
pub mod genome;
pub mod io;
pub mod policy;
pub mod rng;
pub mod virus;

pub use engine::{run, run_replicates, MetricsRow, Regime, RunResult, SimConfig, Simulation, Termination};
pub use error::{Error, Result};
pub use genome::{
    draw_gene_effects, draw_policy_effects, flip_bit, single_point_crossover, GeneEffectTable, Genome,
    MeasureInterval, PolicyEffectSpec, PolicyEffectTable, PolicyGenome, VirusGenome,
};
pub use policy::{
    mean_reduction, next_generation, policy_fitness, policy_mutate, roulette_select, PolicyIndividual,
    PolicyPopulation,
};
pub use rng::RngStream;
pub use virus::reference::reference_infection_step;
pub use virus::{
    effective_rate, infection_step, metrics_of, offspring_count, virus_rate, OffspringMode,
    ReproductionContext, StrainLedger,
};
