//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Ensembles use the bundled synthetic effect spec and the default
//! parameters, seeds 1..=30, stochastic offspring.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use coevo::io::{default_effect_spec, write_results};
use coevo::policy::RouletteWheel;
use coevo::virus::mutation_probability;
use coevo::{
    infection_step, policy_mutate, reference_infection_step, run, run_replicates, GeneEffectTable, Genome,
    OffspringMode, PolicyEffectSpec, Regime, ReproductionContext, RngStream, RunResult, SimConfig,
    StrainLedger,
};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

const SEEDS: std::ops::RangeInclusive<u64> = 1..=30;
const SIGNIFICANCE: f64 = 0.05;
const CHI_SQUARE_SIGNIFICANCE: f64 = 0.01;
const BINOMIAL_REL_TOL: f64 = 0.02;
const ORACLE_CASES: u64 = 100;
const ORACLE_MAX_POP: u64 = 1000;
const STOCHASTIC_SEEDS: u64 = 1000;
const SCALE_TARGET: u64 = 1_000_000_000;

struct Gate {
    failures: usize,
}

impl Gate {
    fn check(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }

    fn note(&self, id: u32, text: String) {
        println!("     [{id}] indicative: {text}");
    }
}

fn seeds() -> Vec<u64> {
    SEEDS.collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// One-sided paired t-test of `a > b`; returns (t statistic, p value).
fn paired_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let sd = sd(&d);
    if sd == 0.0 {
        let p = if mean(&d) > 0.0 { 0.0 } else { 1.0 };
        return (f64::INFINITY * mean(&d).signum(), p);
    }
    let t = mean(&d) / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    (t, 1.0 - dist.cdf(t))
}

fn final_value(r: &RunResult, f: impl Fn(&coevo::MetricsRow) -> Option<f64>) -> f64 {
    r.last_alive().and_then(f).expect("row 0 is always alive")
}

fn ensemble(regime: Regime, spec: &PolicyEffectSpec) -> (Vec<RunResult>, Duration) {
    let start = Instant::now();
    let cfg = SimConfig::default().with_regime(regime);
    let results = run_replicates(&cfg, spec, &seeds()).expect("ensemble runs");
    (results, start.elapsed())
}

fn criterion_1(gate: &mut Gate, spec: &PolicyEffectSpec) {
    let mut ok = true;
    let mut slowest = Duration::ZERO;
    let mut rows = 0;
    for seed in seeds() {
        let start = Instant::now();
        let r = run(&SimConfig::default().with_regime(Regime::PolicyOnly).with_seed(seed), spec).unwrap();
        slowest = slowest.max(start.elapsed());
        for row in r.rows.iter().filter(|row| !row.extinct) {
            rows += 1;
            ok &= row.mean_virus_r == Some(2.63) && row.n_strains == 1;
        }
    }
    ok &= slowest < Duration::from_secs(1);
    gate.check(
        1,
        "policy-only baseline stays at 2.63 with one strain",
        ok,
        format!("{rows} living rows over {} seeds, slowest run {slowest:?}", SEEDS.count()),
    );
}

fn criteria_2_to_5(gate: &mut Gate, spec: &PolicyEffectSpec) {
    let (coevo, t_co) = ensemble(Regime::Coevolution, spec);
    let (virus_only, t_vo) = ensemble(Regime::VirusOnly, spec);
    let (policy_only, t_po) = ensemble(Regime::PolicyOnly, spec);
    let elapsed = t_co + t_vo + t_po;

    let r_co: Vec<f64> = coevo.iter().map(|r| final_value(r, |l| l.mean_virus_r)).collect();
    let r_vo: Vec<f64> = virus_only.iter().map(|r| final_value(r, |l| l.mean_virus_r)).collect();
    let (t, p) = paired_greater(&r_co, &r_vo);
    gate.check(
        2,
        "coevolution raises final mean virus R above virus-only",
        mean(&r_co) > mean(&r_vo) && p < SIGNIFICANCE && elapsed < Duration::from_secs(300),
        format!(
            "{:.4} vs {:.4}, paired t = {t:.3}, one-sided p = {p:.2e}, ensemble time {elapsed:?}",
            mean(&r_co),
            mean(&r_vo)
        ),
    );
    gate.note(
        2,
        format!("coevolution final mean virus R {:.3} (target 3.1 +/- 0.5)", mean(&r_co)),
    );

    let f_co: Vec<f64> = coevo.iter().map(|r| final_value(r, |l| l.freq_best_gene)).collect();
    let f_vo: Vec<f64> = virus_only.iter().map(|r| final_value(r, |l| l.freq_best_gene)).collect();
    gate.check(
        3,
        "best gene more frequent under coevolution",
        mean(&f_co) > mean(&f_vo),
        format!("{:.4} vs {:.4}", mean(&f_co), mean(&f_vo)),
    );
    gate.note(
        3,
        format!("coevolution final best-gene frequency {:.3} (target 0.35 +/- 0.15)", mean(&f_co)),
    );

    let peak = |rs: &[RunResult]| mean(&rs.iter().map(|r| r.peak_strains() as f64).collect::<Vec<_>>());
    gate.check(
        4,
        "virus-only reaches more strains than coevolution",
        peak(&virus_only) > peak(&coevo),
        format!("mean peak strains {:.1} vs {:.1}", peak(&virus_only), peak(&coevo)),
    );
    gate.note(
        4,
        format!("peaks {:.0} / {:.0} (reference magnitudes 800 / 200)", peak(&virus_only), peak(&coevo)),
    );

    let suppressed = policy_only
        .iter()
        .filter(|r| {
            r.rows
                .iter()
                .filter(|row| row.t <= 20)
                .any(|row| row.extinct || row.mean_effective_r.is_some_and(|e| e < 1.0))
        })
        .count();
    let share = suppressed as f64 / policy_only.len() as f64;
    gate.check(
        5,
        "policy-only drives effective R below 1 by t = 20",
        share >= 0.5,
        format!("{suppressed}/{} replicates ({:.0}%)", policy_only.len(), share * 100.0),
    );
}

fn random_case(case: u64) -> (StrainLedger, ReproductionContext, f64, f64) {
    let mut rng = RngStream::new(0xACCE_0000 + case);
    let genes = 1 + rng.below(12) as usize;
    let effects = (0..genes).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let ctx = ReproductionContext::new(
        rng.uniform(0.5, 3.5),
        GeneEffectTable::new(effects).unwrap(),
        OffspringMode::Expected,
    )
    .unwrap();
    let mut ledger = StrainLedger::new();
    let budget = 1 + rng.below(ORACLE_MAX_POP);
    let mut used = 0;
    while used < budget {
        let n = 1 + rng.below(budget - used);
        let g = Genome::from_bits(rng.below(1 << genes), genes).unwrap();
        ledger.add(g, n);
        used += n;
    }
    let reduction = rng.uniform(0.0, 2.0);
    // Mutation-free and all-flip cases are the ones where both paths are
    // deterministic and must agree exactly.
    let mu = if case.is_multiple_of(2) { 0.0 } else { 1.0 };
    (ledger, ctx, reduction, mu)
}

fn criterion_6(gate: &mut Gate) {
    let mut identical = 0;
    let mut largest = 0;
    for case in 0..ORACLE_CASES {
        let (ledger, ctx, reduction, mu) = random_case(case);
        let aggregated = infection_step(&ledger, &ctx, reduction, mu, u64::MAX, &RngStream::new(case)).unwrap();
        let individuals = ledger.expand();
        let reference = reference_infection_step(&individuals, &ctx, reduction, mu, &mut RngStream::new(case));
        let reference = StrainLedger::from_individuals(&reference);
        largest = largest.max(ledger.total());
        if aggregated == reference {
            identical += 1;
        }
    }

    // Stochastic totals against the expected-mode total for a fixed ledger.
    let ctx = |mode| {
        ReproductionContext::new(2.63, GeneEffectTable::new(vec![0.4, -0.7, 0.15, 0.9, -0.2]).unwrap(), mode)
            .unwrap()
    };
    let mut ledger = StrainLedger::new();
    for (bits, n) in [(0b00000u64, 400u64), (0b00001, 150), (0b01010, 90), (0b11000, 60)] {
        ledger.add(Genome::from_bits(bits, 5).unwrap(), n);
    }
    let reduction = 0.37;
    let expected_total = infection_step(&ledger, &ctx(OffspringMode::Expected), reduction, 0.0, u64::MAX, &RngStream::new(0))
        .unwrap()
        .total() as f64;
    let stochastic: Vec<f64> = (0..STOCHASTIC_SEEDS)
        .map(|s| {
            infection_step(&ledger, &ctx(OffspringMode::Stochastic), reduction, 1e-4, u64::MAX, &RngStream::new(s))
                .unwrap()
                .total() as f64
        })
        .collect();
    let se = sd(&stochastic) / (STOCHASTIC_SEEDS as f64).sqrt();
    let z = (mean(&stochastic) - expected_total) / se;

    gate.check(
        6,
        "aggregated step matches individual oracle",
        identical == ORACLE_CASES && largest <= ORACLE_MAX_POP && z.abs() < 3.0,
        format!(
            "{identical}/{ORACLE_CASES} multiset-identical (max population {largest}); stochastic mean {:.2} vs expected {expected_total}, z = {z:.2}",
            mean(&stochastic)
        ),
    );
}

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn criterion_7(gate: &mut Gate) {
    let draws = 100_000;
    let fixtures: [(&[f64], &[f64]); 3] = [
        (&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]),
        (&[1.0, 1.0, 1.0, 1.0], &[0.25, 0.25, 0.25, 0.25]),
        (&[1.0, 3.0], &[0.25, 0.75]),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (i, (fit, probs)) in fixtures.iter().enumerate() {
        let wheel = RouletteWheel::new(fit).unwrap();
        let mut rng = RngStream::new(700 + i as u64);
        let mut counts = vec![0u64; fit.len()];
        for _ in 0..draws {
            counts[wheel.spin(&mut rng)] += 1;
        }
        let p = chi_square_p(&counts, probs);
        ok &= p > CHI_SQUARE_SIGNIFICANCE;
        details.push(format!("roulette{i} p={p:.3}"));
    }

    let policy_size = 46;
    let rate = 0.05;
    let zeros = Genome::zeros(policy_size).unwrap();
    let mut rng = RngStream::new(77);
    let activated: u64 = (0..draws).map(|_| u64::from(policy_mutate(zeros, rate, &mut rng).count_ones())).sum();
    let policy_mean = activated as f64 / draws as f64;
    let policy_target = rate * policy_size as f64;
    let policy_err = (policy_mean - policy_target).abs() / policy_target;
    ok &= policy_err < BINOMIAL_REL_TOL;
    details.push(format!("policy flips/genome {policy_mean:.4} vs {policy_target:.4}"));

    // Virus mutation: every offspring of a one-strain ledger is a trial;
    // the number of flipped bits per offspring is Binomial(G, mu).
    let genes = 10;
    let mu = 0.05;
    let ctx = ReproductionContext::new(1.0, GeneEffectTable::new(vec![0.0; genes]).unwrap(), OffspringMode::Expected)
        .unwrap();
    let parent = Genome::zeros(genes).unwrap();
    let ledger = StrainLedger::singleton(parent, draws);
    let next = infection_step(&ledger, &ctx, 0.0, mu, u64::MAX, &RngStream::new(78)).unwrap();
    let flips: u64 = next.iter().map(|(g, n)| u64::from(g.count_ones()) * n).sum();
    let virus_mean = flips as f64 / next.total() as f64;
    let virus_target = mu * genes as f64;
    let virus_err = (virus_mean - virus_target).abs() / virus_target;
    let mutated = 1.0 - next.count(&parent) as f64 / next.total() as f64;
    let mutated_target = mutation_probability(mu, genes);
    let mutated_err = (mutated - mutated_target).abs() / mutated_target;
    ok &= virus_err < BINOMIAL_REL_TOL && mutated_err < BINOMIAL_REL_TOL && next.total() == draws;
    details.push(format!(
        "virus flips/offspring {virus_mean:.4} vs {virus_target:.4}, mutated share {mutated:.4} vs {mutated_target:.4}"
    ));

    gate.check(7, "operator statistics", ok, details.join("; "));
}

fn criterion_8(gate: &mut Gate, spec: &PolicyEffectSpec) {
    let cfg = SimConfig {
        regime: Regime::VirusOnly,
        mode: OffspringMode::Expected,
        population_cap: 10_000_000_000_000,
        tmax: 25,
        seed: 8,
        ..Default::default()
    };
    let start = Instant::now();
    let r = run(&cfg, spec).unwrap();
    let elapsed = start.elapsed();
    let peak = r.rows.iter().map(|row| row.total_viruses).max().unwrap();
    gate.check(
        8,
        "strain aggregation reaches 1e9 individuals quickly",
        peak >= SCALE_TARGET && elapsed < Duration::from_secs(60),
        format!(
            "peak {peak:.3e} individuals, {} strains, {} rows, {}, {elapsed:?}",
            r.peak_strains(),
            r.rows.len(),
            r.termination
        ),
    );
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn criterion_9(gate: &mut Gate, spec: &PolicyEffectSpec) {
    let tmp = tempfile::tempdir().unwrap();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(4);
    let write_all = |threads: usize, tag: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let root = tmp.path().join(tag);
        pool.install(|| {
            for regime in Regime::ALL {
                for mode in [OffspringMode::Stochastic, OffspringMode::Expected] {
                    let cfg = SimConfig { regime, mode, ..Default::default() };
                    let results = run_replicates(&cfg, spec, &[3, 11, 29]).unwrap();
                    write_results(&results, &root.join(format!("{regime}-{mode}"))).unwrap();
                }
            }
        });
        read_tree(&root)
    };
    let single = write_all(1, "one");
    let again = write_all(1, "one-again");
    let many = write_all(workers, "many");
    gate.check(
        9,
        "outputs byte-identical across repeats and worker counts",
        !single.is_empty() && single == again && single == many,
        format!("{} files compared at 1 and {workers} workers", single.len()),
    );
}

fn main() {
    let spec = default_effect_spec();
    let mut gate = Gate { failures: 0 };
    criterion_1(&mut gate, &spec);
    criteria_2_to_5(&mut gate, &spec);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate, &spec);
    criterion_9(&mut gate, &spec);
    if gate.failures > 0 {
        eprintln!("{} acceptance criteria failed", gate.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
