//! Bit-vector genomes, effect tables and the shared bit operators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Widest genome the compact word representation can hold.
pub const MAX_GENOME_LEN: usize = 64;

/// Fixed-width genome packed into one machine word. Bit `i` is gene or
/// measure `i`; the textual form lists index 0 first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genome {
    bits: u64,
    len: u8,
}

/// Activated mutated genes of a virus.
pub type VirusGenome = Genome;
/// Activated measures of a policy.
pub type PolicyGenome = Genome;

fn mask(len: usize) -> u64 {
    if len == 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

impl Genome {
    pub fn zeros(len: usize) -> Result<Self> {
        Self::from_bits(0, len)
    }

    pub fn ones(len: usize) -> Result<Self> {
        Self::from_bits(mask(len.min(MAX_GENOME_LEN)), len)
    }

    pub fn from_bits(bits: u64, len: usize) -> Result<Self> {
        if len == 0 || len > MAX_GENOME_LEN {
            return Err(Error::Logic(format!(
                "genome length {len} outside 1..={MAX_GENOME_LEN}"
            )));
        }
        if bits & !mask(len) != 0 {
            return Err(Error::Logic(format!(
                "bits {bits:#x} do not fit a genome of length {len}"
            )));
        }
        Ok(Self {
            bits,
            len: len as u8,
        })
    }

    pub(crate) fn from_bits_unchecked(bits: u64, len: usize) -> Self {
        debug_assert!((1..=MAX_GENOME_LEN).contains(&len) && bits & !mask(len) == 0);
        Self {
            bits,
            len: len as u8,
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: usize) -> bool {
        index < self.len() && (self.bits >> index) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.get(i))
    }

    pub(crate) fn xor_mask(&self, flips: u64) -> Self {
        Self {
            bits: self.bits ^ (flips & mask(self.len())),
            len: self.len,
        }
    }

    pub(crate) fn or_mask(&self, set: u64) -> Self {
        Self {
            bits: self.bits | (set & mask(self.len())),
            len: self.len,
        }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' if i < MAX_GENOME_LEN => bits |= 1 << i,
                '1' => {}
                _ => return Err(Error::Logic(format!("invalid genome character {c:?}"))),
            }
        }
        Self::from_bits(bits, s.chars().count())
    }
}

/// Returns `genome` with position `index` inverted.
pub fn flip_bit(genome: Genome, index: usize) -> Result<Genome> {
    if index >= genome.len() {
        return Err(Error::Logic(format!(
            "flip index {index} out of range for genome length {}",
            genome.len()
        )));
    }
    Ok(genome.xor_mask(1 << index))
}

/// Swaps the tails of `a` and `b` after cut position `cut` (`1 <= cut < len`).
pub fn single_point_crossover(a: Genome, b: Genome, cut: usize) -> Result<(Genome, Genome)> {
    if a.len() != b.len() {
        return Err(Error::Logic(format!(
            "crossover length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let len = a.len();
    if cut == 0 || cut >= len {
        return Err(Error::Logic(format!(
            "crossover cut {cut} outside 1..={}",
            len.saturating_sub(1)
        )));
    }
    let head = mask(cut);
    let tail = mask(len) & !head;
    let c1 = (a.bits & head) | (b.bits & tail);
    let c2 = (b.bits & head) | (a.bits & tail);
    Ok((
        Genome::from_bits_unchecked(c1, len),
        Genome::from_bits_unchecked(c2, len),
    ))
}

/// Additive effect of each mutated gene on the reproduction rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneEffectTable {
    effects: Vec<f64>,
}

impl GeneEffectTable {
    pub fn new(effects: Vec<f64>) -> Result<Self> {
        if effects.is_empty() || effects.len() > MAX_GENOME_LEN {
            return Err(Error::Config(vec![format!(
                "virus_size must be in 1..={MAX_GENOME_LEN}, got {}",
                effects.len()
            )]));
        }
        if let Some(i) = effects.iter().position(|e| !(-1.0..=1.0).contains(e)) {
            return Err(Error::Logic(format!(
                "gene effect {i} = {} outside [-1, 1]",
                effects[i]
            )));
        }
        Ok(Self { effects })
    }

    pub fn effects(&self) -> &[f64] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    /// Sum of the effects of the genes active in `genome`.
    pub fn sum_active(&self, genome: Genome) -> f64 {
        genome.active().fold(0.0, |acc, i| acc + self.effects[i])
    }

    /// Gene with the largest effect; the lowest index wins a tie.
    pub fn best_gene(&self) -> usize {
        let mut best = 0;
        for (i, &e) in self.effects.iter().enumerate() {
            if e > self.effects[best] {
                best = i;
            }
        }
        best
    }
}

pub fn draw_gene_effects(gene_count: usize, rng: &mut RngStream) -> Result<GeneEffectTable> {
    if gene_count == 0 || gene_count > MAX_GENOME_LEN {
        return Err(Error::Config(vec![format!(
            "virus_size must be in 1..={MAX_GENOME_LEN}, got {gene_count}"
        )]));
    }
    GeneEffectTable::new((0..gene_count).map(|_| rng.uniform(-1.0, 1.0)).collect())
}

/// Interval from which one measure's effect is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureInterval {
    pub name: String,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffectSpec {
    measures: Vec<MeasureInterval>,
}

impl PolicyEffectSpec {
    pub fn new(measures: Vec<MeasureInterval>) -> Result<Self> {
        for (row, m) in measures.iter().enumerate() {
            if !m.ci_low.is_finite() || !m.ci_high.is_finite() {
                return Err(Error::EffectSpec {
                    row,
                    message: format!("measure {:?} has a non-finite bound", m.name),
                });
            }
            if m.ci_low > m.ci_high {
                return Err(Error::EffectSpec {
                    row,
                    message: format!(
                        "measure {:?} has ci_low {} > ci_high {}",
                        m.name, m.ci_low, m.ci_high
                    ),
                });
            }
        }
        if measures.is_empty() || measures.len() > MAX_GENOME_LEN {
            return Err(Error::Config(vec![format!(
                "effect spec must list 1..={MAX_GENOME_LEN} measures, found {}",
                measures.len()
            )]));
        }
        Ok(Self { measures })
    }

    pub fn measures(&self) -> &[MeasureInterval] {
        &self.measures
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }
}

/// One realized draw of every measure's effect, plus the weights used when
/// summing them into a policy's total reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffectTable {
    effects: Vec<f64>,
    weights: Vec<f64>,
}

impl PolicyEffectTable {
    pub fn new(effects: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if effects.len() != weights.len() {
            return Err(Error::Logic(format!(
                "{} effects but {} weights",
                effects.len(),
                weights.len()
            )));
        }
        if effects.is_empty() || effects.len() > MAX_GENOME_LEN {
            return Err(Error::Logic(format!(
                "policy size {} outside 1..={MAX_GENOME_LEN}",
                effects.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Logic(format!("measure weight {w} is not a non-negative real")));
        }
        Ok(Self { effects, weights })
    }

    pub fn effects(&self) -> &[f64] {
        &self.effects
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    /// Weighted sum of the effects of the measures active in `genome`.
    pub fn reduction(&self, genome: Genome) -> f64 {
        genome
            .active()
            .fold(0.0, |acc, j| acc + self.weights[j] * self.effects[j])
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.effects, weights)
    }
}

pub fn draw_policy_effects(spec: &PolicyEffectSpec, rng: &mut RngStream) -> PolicyEffectTable {
    let effects = spec
        .measures()
        .iter()
        .map(|m| rng.uniform(m.ci_low, m.ci_high))
        .collect::<Vec<_>>();
    let weights = vec![1.0; effects.len()];
    PolicyEffectTable { effects, weights }
}
