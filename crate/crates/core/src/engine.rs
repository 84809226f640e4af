//! The run loop coupling the virus ledger and the policy population.
//!
//! Within period `t` the order is: mean policy reduction, metrics row `t`,
//! infection step, then the policy generation evaluated against the
//! pre-infection ledger.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{
    draw_gene_effects, draw_policy_effects, GeneEffectTable, PolicyEffectSpec, PolicyEffectTable,
    VirusGenome, MAX_GENOME_LEN,
};
use crate::policy::{mean_reduction, next_generation, BreedingRates, PolicyPopulation};
use crate::rng::RngStream;
use crate::virus::{infection_step, metrics_of, OffspringMode, ReproductionContext, StrainLedger};

pub const DEFAULT_VIRUS_INITIAL_POPULATION: u64 = 10;
pub const DEFAULT_VIRUS_SIZE: usize = 10;
pub const DEFAULT_POLICY_POPULATION_SIZE: usize = 100;
pub const DEFAULT_POLICY_SIZE: usize = 46;
pub const DEFAULT_BASE_RATE: f64 = 2.63;
pub const DEFAULT_TMAX: u32 = 20;
pub const DEFAULT_POLICY_CROSSOVER_RATE: f64 = 0.5;
pub const DEFAULT_POLICY_MUTATION_RATE: f64 = 0.05;
pub const DEFAULT_VIRUS_MUTATION_RATE: f64 = 0.0001;
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000_000;

/// Which populations are allowed to evolve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    #[default]
    Coevolution,
    PolicyOnly,
    VirusOnly,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Coevolution, Regime::PolicyOnly, Regime::VirusOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Coevolution => "coevolution",
            Regime::PolicyOnly => "policy-only",
            Regime::VirusOnly => "virus-only",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                Error::Config(vec![format!(
                    "regime must be coevolution, policy-only or virus-only, got {s:?}"
                )])
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub virus_initial_population: u64,
    pub virus_size: usize,
    pub policy_population_size: usize,
    pub policy_size: usize,
    pub base_rate: f64,
    pub tmax: u32,
    pub policy_crossover_rate: f64,
    pub policy_mutation_rate: f64,
    pub virus_mutation_rate: f64,
    pub regime: Regime,
    pub mode: OffspringMode,
    pub population_cap: u64,
    pub seed: u64,
    /// Per-measure weights in the policy reduction sum; empty means all 1.
    pub measure_weights: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            virus_initial_population: DEFAULT_VIRUS_INITIAL_POPULATION,
            virus_size: DEFAULT_VIRUS_SIZE,
            policy_population_size: DEFAULT_POLICY_POPULATION_SIZE,
            policy_size: DEFAULT_POLICY_SIZE,
            base_rate: DEFAULT_BASE_RATE,
            tmax: DEFAULT_TMAX,
            policy_crossover_rate: DEFAULT_POLICY_CROSSOVER_RATE,
            policy_mutation_rate: DEFAULT_POLICY_MUTATION_RATE,
            virus_mutation_rate: DEFAULT_VIRUS_MUTATION_RATE,
            regime: Regime::Coevolution,
            mode: OffspringMode::Stochastic,
            population_cap: DEFAULT_POPULATION_CAP,
            seed: 0,
            measure_weights: Vec::new(),
        }
    }
}

impl SimConfig {
    /// Lists every violated constraint.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, rate) in [
            ("policy_crossover_rate", self.policy_crossover_rate),
            ("policy_mutation_rate", self.policy_mutation_rate),
            ("virus_mutation_rate", self.virus_mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                v.push(format!("{name} must be in [0, 1], got {rate}"));
            }
        }
        if self.virus_initial_population == 0 {
            v.push("virus_initial_population must be >= 1".into());
        }
        if self.virus_size == 0 || self.virus_size > MAX_GENOME_LEN {
            v.push(format!(
                "virus_size must be in 1..={MAX_GENOME_LEN}, got {}",
                self.virus_size
            ));
        }
        if self.policy_size == 0 || self.policy_size > MAX_GENOME_LEN {
            v.push(format!(
                "policy_size must be in 1..={MAX_GENOME_LEN}, got {}",
                self.policy_size
            ));
        }
        if self.policy_population_size == 0 || !self.policy_population_size.is_multiple_of(2) {
            v.push(format!(
                "policy_population_size must be even and >= 2, got {}",
                self.policy_population_size
            ));
        }
        if !(self.base_rate.is_finite() && self.base_rate > 0.0) {
            v.push(format!("base_rate must be > 0, got {}", self.base_rate));
        }
        if self.population_cap == 0 {
            v.push("population_cap must be >= 1".into());
        } else if self.virus_initial_population > self.population_cap {
            v.push(format!(
                "virus_initial_population {} exceeds population_cap {}",
                self.virus_initial_population, self.population_cap
            ));
        }
        if !self.measure_weights.is_empty() {
            if self.measure_weights.len() != self.policy_size {
                v.push(format!(
                    "measure_weights has {} entries, expected policy_size = {}",
                    self.measure_weights.len(),
                    self.policy_size
                ));
            }
            if self.measure_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                v.push("measure_weights must be non-negative reals".into());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Zeroes the rates the regime holds fixed.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        match c.regime {
            Regime::Coevolution => {}
            Regime::PolicyOnly => c.virus_mutation_rate = 0.0,
            Regime::VirusOnly => {
                c.policy_mutation_rate = 0.0;
                c.policy_crossover_rate = 0.0;
            }
        }
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_regime(&self, regime: Regime) -> Self {
        Self {
            regime,
            ..self.clone()
        }
    }
}

/// Observables recorded at the start of one period (weeks).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: u32,
    pub total_viruses: u64,
    pub n_strains: u64,
    pub mean_virus_r: Option<f64>,
    pub mean_policy_reduction: f64,
    pub mean_effective_r: Option<f64>,
    pub freq_best_gene: Option<f64>,
    pub extinct: bool,
    pub overflowed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "t", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    ExtinctAt(u32),
    OverflowAt(u32),
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Completed => f.write_str("completed"),
            Termination::ExtinctAt(t) => write!(f, "extinct_at({t})"),
            Termination::OverflowAt(t) => write!(f, "overflow_at({t})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: SimConfig,
    pub gene_effects: GeneEffectTable,
    pub policy_effects: PolicyEffectTable,
    pub rows: Vec<MetricsRow>,
    pub termination: Termination,
}

impl RunResult {
    /// Last row that still has a living population.
    pub fn last_alive(&self) -> Option<&MetricsRow> {
        self.rows.iter().rev().find(|r| !r.extinct)
    }

    pub fn peak_strains(&self) -> u64 {
        self.rows.iter().map(|r| r.n_strains).max().unwrap_or(0)
    }
}

/// One run in progress. Advance with [`Simulation::step`].
#[derive(Clone, Debug)]
pub struct Simulation {
    config: SimConfig,
    ctx: ReproductionContext,
    policy_table: PolicyEffectTable,
    ledger: StrainLedger,
    policies: PolicyPopulation,
    virus_stream: RngStream,
    policy_stream: RngStream,
    t: u32,
    rows: Vec<MetricsRow>,
    termination: Option<Termination>,
}

impl Simulation {
    /// Draws the effect tables once and seeds both populations with
    /// all-zero genomes.
    pub fn new(config: &SimConfig, spec: &PolicyEffectSpec) -> Result<Self> {
        let config = config.normalized();
        let mut violations = config.violations();
        if spec.len() != config.policy_size {
            violations.push(format!(
                "effect spec has {} measures but policy_size is {}",
                spec.len(),
                config.policy_size
            ));
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }

        let master = RngStream::new(config.seed);
        let gene_effects = draw_gene_effects(config.virus_size, &mut master.derive("gene-effects"))?;
        let mut policy_table = draw_policy_effects(spec, &mut master.derive("policy-effects"));
        if !config.measure_weights.is_empty() {
            policy_table = policy_table.with_weights(config.measure_weights.clone())?;
        }
        let ctx = ReproductionContext::new(config.base_rate, gene_effects, config.mode)?;
        let ledger = StrainLedger::singleton(
            VirusGenome::zeros(config.virus_size)?,
            config.virus_initial_population,
        );
        let policies = PolicyPopulation::empty_policies(config.policy_population_size, &policy_table)?;

        Ok(Self {
            ctx,
            policy_table,
            ledger,
            policies,
            virus_stream: master.derive("virus"),
            policy_stream: master.derive("policy"),
            t: 0,
            rows: Vec::new(),
            termination: None,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn context(&self) -> &ReproductionContext {
        &self.ctx
    }

    pub fn policy_table(&self) -> &PolicyEffectTable {
        &self.policy_table
    }

    pub fn ledger(&self) -> &StrainLedger {
        &self.ledger
    }

    pub fn policies(&self) -> &PolicyPopulation {
        &self.policies
    }

    pub fn period(&self) -> u32 {
        self.t
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    fn record(&mut self, reduction: f64) -> MetricsRow {
        let m = metrics_of(&self.ledger, &self.ctx, reduction);
        let row = MetricsRow {
            t: self.t,
            total_viruses: m.total,
            n_strains: m.n_strains as u64,
            mean_virus_r: m.mean_rate,
            mean_policy_reduction: reduction,
            mean_effective_r: m.mean_effective_rate,
            freq_best_gene: m.freq_best_gene,
            extinct: m.extinct,
            overflowed: false,
        };
        self.rows.push(row.clone());
        row
    }

    /// Runs one period and returns the row recorded for it, or `None` once
    /// the run has terminated.
    pub fn step(&mut self) -> Result<Option<MetricsRow>> {
        if self.termination.is_some() {
            return Ok(None);
        }
        let reduction = mean_reduction(&self.policies);
        let row = self.record(reduction);
        if row.extinct {
            self.termination = Some(Termination::ExtinctAt(self.t));
            return Ok(Some(row));
        }
        if self.t >= self.config.tmax {
            self.termination = Some(Termination::Completed);
            return Ok(Some(row));
        }

        let period = u64::from(self.t);
        let next_ledger = match infection_step(
            &self.ledger,
            &self.ctx,
            reduction,
            self.config.virus_mutation_rate,
            self.config.population_cap,
            &self.virus_stream.derive_index(period),
        ) {
            Ok(l) => l,
            Err(Error::Overflow { .. }) => {
                let last = self.rows.last_mut().expect("row just recorded");
                last.overflowed = true;
                self.termination = Some(Termination::OverflowAt(self.t));
                return Ok(Some(last.clone()));
            }
            Err(e) => return Err(e),
        };
        let rates = BreedingRates {
            crossover: self.config.policy_crossover_rate,
            mutation: self.config.policy_mutation_rate,
        };
        self.policies = next_generation(
            &self.policies,
            &self.ledger,
            &self.ctx,
            &self.policy_table,
            rates,
            &self.policy_stream.derive_index(period),
        )?;
        self.ledger = next_ledger;
        self.t += 1;
        Ok(Some(row))
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step()?.is_some() {}
        Ok(())
    }

    /// Copy of the finished run, or `None` while it is still in progress.
    pub fn result(&self) -> Option<RunResult> {
        Some(RunResult {
            config: self.config.clone(),
            gene_effects: self.ctx.gene_effects.clone(),
            policy_effects: self.policy_table.clone(),
            rows: self.rows.clone(),
            termination: self.termination?,
        })
    }

    pub fn finish(mut self) -> Result<RunResult> {
        self.run_to_end()?;
        Ok(RunResult {
            gene_effects: self.ctx.gene_effects.clone(),
            policy_effects: self.policy_table,
            rows: self.rows,
            termination: self.termination.expect("run finished"),
            config: self.config,
        })
    }
}

pub fn run(config: &SimConfig, spec: &PolicyEffectSpec) -> Result<RunResult> {
    Simulation::new(config, spec)?.finish()
}

/// One run per seed, in seed order, executed in parallel.
pub fn run_replicates(config: &SimConfig, spec: &PolicyEffectSpec, seeds: &[u64]) -> Result<Vec<RunResult>> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(vec!["replicate seeds must be distinct".into()]));
    }
    seeds
        .par_iter()
        .map(|&seed| run(&config.with_seed(seed), spec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::MeasureInterval;

    fn spec(p: usize, hi: f64) -> PolicyEffectSpec {
        PolicyEffectSpec::new(
            (0..p)
                .map(|j| MeasureInterval {
                    name: format!("m{j}"),
                    ci_low: 0.0,
                    ci_high: hi,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn initial_state() {
        let sim = Simulation::new(&SimConfig::default(), &spec(46, 0.1)).unwrap();
        assert_eq!(sim.ledger().total(), 10);
        assert_eq!(sim.ledger().n_strains(), 1);
        assert_eq!(sim.policies().len(), 100);
        assert_eq!(mean_reduction(sim.policies()), 0.0);
    }

    #[test]
    fn first_row_is_initial_condition() {
        let r = run(&SimConfig { tmax: 0, ..Default::default() }, &spec(46, 0.1)).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.termination, Termination::Completed);
        let row = &r.rows[0];
        assert_eq!(row.t, 0);
        assert_eq!(row.total_viruses, 10);
        assert_eq!(row.mean_virus_r, Some(2.63));
        assert_eq!(row.mean_policy_reduction, 0.0);
    }

    #[test]
    fn regime_forces_rates() {
        let c = SimConfig { regime: Regime::PolicyOnly, ..Default::default() }.normalized();
        assert_eq!(c.virus_mutation_rate, 0.0);
        assert_eq!(c.policy_mutation_rate, 0.05);
        let c = SimConfig { regime: Regime::VirusOnly, ..Default::default() }.normalized();
        assert_eq!(c.policy_mutation_rate, 0.0);
        assert_eq!(c.policy_crossover_rate, 0.0);
        assert_eq!(c.virus_mutation_rate, 0.0001);
    }

    #[test]
    fn violations_are_exhaustive() {
        let c = SimConfig {
            virus_mutation_rate: -0.1,
            policy_population_size: 7,
            virus_size: 65,
            base_rate: 0.0,
            ..Default::default()
        };
        let v = c.violations();
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(v[0].contains("virus_mutation_rate"));
    }

    #[test]
    fn spec_size_must_match() {
        let err = Simulation::new(&SimConfig::default(), &spec(10, 0.1)).unwrap_err();
        assert!(err.to_string().contains("policy_size"));
    }

    #[test]
    fn extinction_row_closes_run() {
        // Policies wipe the virus out once any measure activates.
        let cfg = SimConfig {
            policy_mutation_rate: 1.0,
            mode: OffspringMode::Expected,
            ..Default::default()
        };
        let r = run(&cfg, &spec(46, 0.2)).unwrap();
        let last = r.rows.last().unwrap();
        assert!(last.extinct);
        assert_eq!(r.termination, Termination::ExtinctAt(last.t));
        assert_eq!(r.rows.len() as u32, last.t + 1);
        assert!(last.mean_virus_r.is_none() && last.freq_best_gene.is_none());
        assert!(r.rows[..r.rows.len() - 1].iter().all(|row| !row.extinct));
    }

    #[test]
    fn overflow_flags_last_row() {
        let cfg = SimConfig {
            regime: Regime::VirusOnly,
            population_cap: 1000,
            mode: OffspringMode::Expected,
            ..Default::default()
        };
        let r = run(&cfg, &spec(46, 0.1)).unwrap();
        let last = r.rows.last().unwrap();
        assert!(last.overflowed);
        assert_eq!(r.termination, Termination::OverflowAt(last.t));
        assert!(last.total_viruses <= 1000);
    }

    #[test]
    fn replicate_seeds_distinct() {
        assert!(run_replicates(&SimConfig::default(), &spec(46, 0.1), &[1, 1]).is_err());
    }
}
