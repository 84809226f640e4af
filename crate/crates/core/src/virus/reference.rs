//! Individual-based infection step. Slow, and only meant as an oracle for
//! the aggregated [`infection_step`](super::infection_step) on populations of
//! up to about 10^5 individuals.

use std::collections::HashMap;

use super::{effective_rate, expected_extra, split_rate, virus_rate, OffspringMode, ReproductionContext};
use crate::genome::VirusGenome;
use crate::rng::RngStream;

/// Simulates every individual separately.
///
/// Each offspring mutates bit by bit with probability `mu`. In expected mode
/// the fractional mass of every genome group is rounded once for the group
/// and the extra infections go to that group's earliest members in list
/// order, which is the same accounting the aggregated step uses.
pub fn reference_infection_step(
    individuals: &[VirusGenome],
    ctx: &ReproductionContext,
    reduction: f64,
    mu: f64,
    rng: &mut RngStream,
) -> Vec<VirusGenome> {
    let mut group_sizes: HashMap<VirusGenome, u64> = HashMap::new();
    for g in individuals {
        *group_sizes.entry(*g).or_insert(0) += 1;
    }
    let mut extras_left: HashMap<VirusGenome, u64> = HashMap::new();
    if ctx.mode == OffspringMode::Expected {
        for (g, &n) in &group_sizes {
            let (_, frac) = split_rate(effective_rate(virus_rate(*g, ctx), reduction));
            extras_left.insert(*g, expected_extra(n, frac));
        }
    }

    let mut out = Vec::new();
    for &parent in individuals {
        let rate = effective_rate(virus_rate(parent, ctx), reduction);
        let (whole, frac) = split_rate(rate);
        let extra = match ctx.mode {
            OffspringMode::Stochastic => u64::from(rng.bernoulli(frac)),
            OffspringMode::Expected => {
                let left = extras_left.get_mut(&parent).expect("group counted");
                if *left > 0 {
                    *left -= 1;
                    1
                } else {
                    0
                }
            }
        };
        for _ in 0..whole + extra {
            let mut child = parent;
            for i in 0..parent.len() {
                if rng.bernoulli(mu) {
                    child = child.xor_mask(1 << i);
                }
            }
            out.push(child);
        }
    }
    out
}
