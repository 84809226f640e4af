//! The virus population held as a strain ledger (genome -> individual count)
//! and the infection step that replaces one generation with the next.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{GeneEffectTable, VirusGenome};
use crate::rng::RngStream;

pub mod reference;

/// How fractional reproduction rates turn into whole infections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OffspringMode {
    /// Each individual infects `floor(r)` hosts plus one more with
    /// probability `frac(r)`.
    #[default]
    Stochastic,
    /// A strain of `n` individuals infects `n*floor(r)` hosts plus the
    /// aggregate fractional mass `n*frac(r)` rounded half-to-even.
    Expected,
}

impl std::fmt::Display for OffspringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OffspringMode::Stochastic => "stochastic",
            OffspringMode::Expected => "expected",
        })
    }
}

impl std::str::FromStr for OffspringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(OffspringMode::Stochastic),
            "expected" => Ok(OffspringMode::Expected),
            other => Err(Error::Config(vec![format!(
                "mode must be stochastic or expected, got {other:?}"
            )])),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReproductionContext {
    pub base_rate: f64,
    pub gene_effects: GeneEffectTable,
    pub mode: OffspringMode,
}

impl ReproductionContext {
    pub fn new(base_rate: f64, gene_effects: GeneEffectTable, mode: OffspringMode) -> Result<Self> {
        if !(base_rate.is_finite() && base_rate > 0.0) {
            return Err(Error::Config(vec![format!(
                "base_rate must be > 0, got {base_rate}"
            )]));
        }
        Ok(Self {
            base_rate,
            gene_effects,
            mode,
        })
    }

    pub fn gene_count(&self) -> usize {
        self.gene_effects.len()
    }
}

/// Virus population aggregated by genome. Zero counts are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrainLedger {
    counts: BTreeMap<VirusGenome, u64>,
    total: u64,
}

impl StrainLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(genome: VirusGenome, count: u64) -> Self {
        let mut ledger = Self::new();
        ledger.add(genome, count);
        ledger
    }

    pub fn from_individuals<'a>(genomes: impl IntoIterator<Item = &'a VirusGenome>) -> Self {
        let mut ledger = Self::new();
        for g in genomes {
            ledger.add(*g, 1);
        }
        ledger
    }

    pub fn add(&mut self, genome: VirusGenome, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(genome).or_insert(0) += count;
        self.total += count;
    }

    pub fn count(&self, genome: &VirusGenome) -> u64 {
        self.counts.get(genome).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_strains(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Strains in ascending genome order.
    pub fn iter(&self) -> impl Iterator<Item = (VirusGenome, u64)> + '_ {
        self.counts.iter().map(|(g, &n)| (*g, n))
    }

    /// One genome per individual, in ascending genome order.
    pub fn expand(&self) -> Vec<VirusGenome> {
        self.iter()
            .flat_map(|(g, n)| std::iter::repeat_n(g, n as usize))
            .collect()
    }

    fn merge(&mut self, other: StrainLedger) {
        for (g, n) in other.counts {
            self.add(g, n);
        }
    }
}

pub fn virus_rate(genome: VirusGenome, ctx: &ReproductionContext) -> f64 {
    ctx.base_rate + ctx.gene_effects.sum_active(genome)
}

/// Rate after the policy reduction, floored at zero.
pub fn effective_rate(rate: f64, reduction: f64) -> f64 {
    (rate - reduction).max(0.0)
}

/// Whole and fractional part of a non-negative rate.
pub(crate) fn split_rate(rate: f64) -> (u64, f64) {
    let whole = rate.floor();
    (whole as u64, rate - whole)
}

/// Rounded aggregate fractional mass of `n` individuals.
pub(crate) fn expected_extra(n: u64, frac: f64) -> u64 {
    (n as f64 * frac).round_ties_even() as u64
}

/// Number of hosts infected by `n` individuals of rate `rate`.
pub fn offspring_count(n: u64, rate: f64, mode: OffspringMode, rng: &mut RngStream) -> Result<u64> {
    if n == 0 || rate <= 0.0 {
        return Ok(0);
    }
    let (whole, frac) = split_rate(rate);
    let extra = match mode {
        OffspringMode::Expected => expected_extra(n, frac),
        OffspringMode::Stochastic if frac == 0.0 => 0,
        OffspringMode::Stochastic => Binomial::new(n, frac)
            .map_err(|e| Error::Logic(format!("binomial({n}, {frac}): {e}")))?
            .sample(rng.inner()),
    };
    let total = u128::from(n) * u128::from(whole) + u128::from(extra);
    u64::try_from(total).map_err(|_| Error::Overflow {
        requested: total,
        cap: u64::MAX,
    })
}

/// Probability that one offspring carries at least one mutation.
pub fn mutation_probability(mu: f64, gene_count: usize) -> f64 {
    if mu <= 0.0 {
        0.0
    } else if mu >= 1.0 {
        1.0
    } else {
        -((gene_count as f64) * (-mu).ln_1p()).exp_m1()
    }
}

/// Splits `mutants` offspring over flip masks. Each bit flips independently
/// with probability `mu`, conditioned on at least one flip per offspring.
///
/// The number of flipped bits is drawn as a multinomial over `1..=G`; within
/// one flip count every mask is equally likely, so masks are either drawn as
/// uniform subsets or, when the count exceeds the number of masks, split
/// over an enumeration of all masks.
pub(crate) fn sample_mutant_masks(
    mutants: u64,
    mu: f64,
    gene_count: usize,
    rng: &mut RngStream,
) -> Result<Vec<(u64, u64)>> {
    if mutants == 0 {
        return Ok(Vec::new());
    }
    if mu >= 1.0 {
        let all = if gene_count == 64 { u64::MAX } else { (1u64 << gene_count) - 1 };
        return Ok(vec![(all, mutants)]);
    }
    let g = gene_count as f64;
    let (ln_mu, ln_keep) = (mu.ln(), (-mu).ln_1p());
    let ln_q = (mutation_probability(mu, gene_count)).ln();
    let mut ln_choose = 0.0;
    let weights: Vec<f64> = (1..=gene_count)
        .map(|j| {
            ln_choose += ((g - j as f64 + 1.0) / j as f64).ln();
            (ln_choose + j as f64 * ln_mu + (g - j as f64) * ln_keep - ln_q).exp()
        })
        .collect();
    // suffix[j] = sum of weights[j..]; summed from the tail so tiny masses
    // keep their precision.
    let mut suffix = vec![0.0; gene_count + 1];
    for j in (0..gene_count).rev() {
        suffix[j] = suffix[j + 1] + weights[j];
    }

    let mut out = Vec::new();
    let mut left = mutants;
    for j in 0..gene_count {
        if left == 0 {
            break;
        }
        let here = if j + 1 == gene_count {
            left
        } else {
            binomial(left, weights[j] / suffix[j], rng)?
        };
        left -= here;
        if here > 0 {
            masks_with_flips(here, j + 1, gene_count, rng, &mut out)?;
        }
    }
    Ok(out)
}

/// Binomial coefficient, saturating at `u64::MAX`.
fn choose(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    c as u64
}

/// Next larger integer with the same popcount.
fn next_same_popcount(v: u64) -> u64 {
    let t = v | (v.wrapping_sub(1));
    let shifted = (!t & t.wrapping_add(1)).wrapping_sub(1) >> (v.trailing_zeros() + 1);
    t.wrapping_add(1) | shifted
}

const ENUMERATE_LIMIT: u64 = 1 << 16;

fn masks_with_flips(
    count: u64,
    flips: usize,
    gene_count: usize,
    rng: &mut RngStream,
    out: &mut Vec<(u64, u64)>,
) -> Result<()> {
    let patterns = choose(gene_count, flips);
    if count > patterns && patterns <= ENUMERATE_LIMIT {
        let mut mask = if flips == 64 { u64::MAX } else { (1u64 << flips) - 1 };
        let mut left = count;
        for remaining in (1..=patterns).rev() {
            let here = if remaining == 1 {
                left
            } else {
                binomial(left, 1.0 / remaining as f64, rng)?
            };
            if here > 0 {
                out.push((mask, here));
                left -= here;
            }
            if remaining > 1 {
                mask = next_same_popcount(mask);
            }
        }
    } else {
        for _ in 0..count {
            let mask = rand::seq::index::sample(rng.inner(), gene_count, flips)
                .iter()
                .fold(0u64, |m, i| m | 1 << i);
            out.push((mask, 1));
        }
    }
    Ok(())
}

fn binomial(n: u64, p: f64, rng: &mut RngStream) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    if p >= 1.0 {
        return Ok(n);
    }
    Ok(Binomial::new(n, p)
        .map_err(|e| Error::Logic(format!("binomial({n}, {p}): {e}")))?
        .sample(rng.inner()))
}

/// Replaces every strain by its offspring for one generation.
///
/// `period` is the per-period stream; each strain draws from a substream
/// keyed by its genome, so the result does not depend on worker count.
pub fn infection_step(
    ledger: &StrainLedger,
    ctx: &ReproductionContext,
    reduction: f64,
    mu: f64,
    cap: u64,
    period: &RngStream,
) -> Result<StrainLedger> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Logic(format!("mutation rate {mu} outside [0, 1]")));
    }
    let strains: Vec<(VirusGenome, u64)> = ledger.iter().collect();

    let births: Vec<(VirusGenome, u64, RngStream)> = strains
        .par_iter()
        .map(|&(genome, n)| {
            let mut rng = period.derive_index(genome.bits());
            let rate = effective_rate(virus_rate(genome, ctx), reduction);
            offspring_count(n, rate, ctx.mode, &mut rng).map(|m| (genome, m, rng))
        })
        .collect::<Result<_>>()?;

    let requested: u128 = births.iter().map(|(_, m, _)| u128::from(*m)).sum();
    if requested > u128::from(cap) {
        return Err(Error::Overflow { requested, cap });
    }

    let gene_count = ctx.gene_count();
    let p_mut = mutation_probability(mu, gene_count);
    let parts: Vec<StrainLedger> = births
        .into_par_iter()
        .map(|(genome, m, mut rng)| {
            let mut out = StrainLedger::new();
            let mutants = binomial(m, p_mut, &mut rng)?;
            out.add(genome, m - mutants);
            for (mask, n) in sample_mutant_masks(mutants, mu, gene_count, &mut rng)? {
                out.add(genome.xor_mask(mask), n);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut next = StrainLedger::new();
    for part in parts {
        next.merge(part);
    }
    Ok(next)
}

/// Population observables for one period.
#[derive(Clone, Debug, PartialEq)]
pub struct VirusMetrics {
    pub total: u64,
    pub n_strains: usize,
    pub mean_rate: Option<f64>,
    pub mean_effective_rate: Option<f64>,
    pub freq_best_gene: Option<f64>,
    pub extinct: bool,
}

pub fn metrics_of(ledger: &StrainLedger, ctx: &ReproductionContext, reduction: f64) -> VirusMetrics {
    if ledger.is_empty() {
        return VirusMetrics {
            total: 0,
            n_strains: 0,
            mean_rate: None,
            mean_effective_rate: None,
            freq_best_gene: None,
            extinct: true,
        };
    }
    let best = ctx.gene_effects.best_gene();
    // Mean rate is the base rate plus the mean gene contribution, so an
    // unmutated population reports the base rate exactly.
    let (mut gene_sum, mut eff_sum) = (0.0, 0.0);
    let mut carriers = 0u64;
    for (genome, n) in ledger.iter() {
        let shift = ctx.gene_effects.sum_active(genome);
        gene_sum += n as f64 * shift;
        eff_sum += n as f64 * effective_rate(ctx.base_rate + shift, reduction);
        if genome.get(best) {
            carriers += n;
        }
    }
    let total = ledger.total() as f64;
    VirusMetrics {
        total: ledger.total(),
        n_strains: ledger.n_strains(),
        mean_rate: Some(ctx.base_rate + gene_sum / total),
        mean_effective_rate: Some(eff_sum / total),
        freq_best_gene: Some(carriers as f64 / total),
        extinct: false,
    }
}
