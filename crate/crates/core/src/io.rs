//! Config and effect-spec loading, metrics CSV and run metadata output,
//! and the per-period ensemble summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{MetricsRow, RunResult, SimConfig, Termination};
use crate::error::{Error, Result};
use crate::genome::{GeneEffectTable, MeasureInterval, PolicyEffectSpec, PolicyEffectTable};

/// Bundled configuration with every default spelled out.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../data/default_config.toml");
/// Bundled synthetic effect intervals (46 measures).
pub const DEFAULT_EFFECTS_CSV: &str = include_str!("../data/default_effects.csv");

pub const METRICS_HEADER: [&str; 9] = [
    "t",
    "total_viruses",
    "n_strains",
    "mean_virus_r",
    "mean_policy_reduction",
    "mean_effective_r",
    "freq_best_gene",
    "extinct",
    "overflowed",
];

pub const METRICS_FILE: &str = "metrics.csv";
pub const METADATA_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn parse_config(text: &str, origin: &Path) -> Result<SimConfig> {
    let config: SimConfig =
        toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string().trim_end().to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Reads a TOML config; absent keys take the defaults, unknown keys fail.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn config_to_toml(config: &SimConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Logic(format!("config serialization: {e}")))
}

pub fn default_config() -> SimConfig {
    parse_config(DEFAULT_CONFIG_TOML, Path::new("<bundled default_config.toml>"))
        .expect("bundled config is valid")
}

#[derive(Debug, Deserialize)]
struct SpecRow {
    name: String,
    ci_low: f64,
    ci_high: f64,
}

/// Parses `name,ci_low,ci_high` rows. Row numbers in errors are 0-based data
/// rows (the header is not counted).
pub fn parse_effect_spec(
    reader: impl std::io::Read,
    origin: &Path,
    expected: Option<usize>,
) -> Result<PolicyEffectSpec> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(origin, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["name", "ci_low", "ci_high"] {
        return Err(Error::parse(
            origin,
            format!("expected header name,ci_low,ci_high, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut measures = Vec::new();
    for (row, record) in rdr.deserialize::<SpecRow>().enumerate() {
        let r = record.map_err(|e| Error::EffectSpec {
            row,
            message: e.to_string(),
        })?;
        measures.push(MeasureInterval {
            name: r.name,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        });
    }
    if let Some(expected) = expected {
        if measures.len() != expected {
            return Err(Error::MeasureCount {
                expected,
                found: measures.len(),
            });
        }
    }
    PolicyEffectSpec::new(measures)
}

pub fn load_effect_spec(path: impl AsRef<Path>, expected: Option<usize>) -> Result<PolicyEffectSpec> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_effect_spec(file, path, expected)
}

pub fn default_effect_spec() -> PolicyEffectSpec {
    parse_effect_spec(
        DEFAULT_EFFECTS_CSV.as_bytes(),
        Path::new("<bundled default_effects.csv>"),
        Some(crate::engine::DEFAULT_POLICY_SIZE),
    )
    .expect("bundled effect spec is valid")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.total_viruses.to_string(),
            r.n_strains.to_string(),
            opt(r.mean_virus_r),
            r.mean_policy_reduction.to_string(),
            opt(r.mean_effective_r),
            opt(r.freq_best_gene),
            r.extinct.to_string(),
            r.overflowed.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(Error::parse(path, "unexpected metrics header"));
    }
    let bad = |line: usize, field: &str| Error::parse(path, format!("data row {line}: bad {field}"));
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let rec = record.map_err(|e| csv_err(path, e))?;
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(line, METRICS_HEADER[i])) };
        let opt_num = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let int = |i: usize| -> Result<u64> { rec[i].parse().map_err(|_| bad(line, METRICS_HEADER[i])) };
        let flag = |i: usize| -> Result<bool> { rec[i].parse().map_err(|_| bad(line, METRICS_HEADER[i])) };
        rows.push(MetricsRow {
            t: u32::try_from(int(0)?).map_err(|_| bad(line, "t"))?,
            total_viruses: int(1)?,
            n_strains: int(2)?,
            mean_virus_r: opt_num(3)?,
            mean_policy_reduction: num(4)?,
            mean_effective_r: opt_num(5)?,
            freq_best_gene: opt_num(6)?,
            extinct: flag(7)?,
            overflowed: flag(8)?,
        });
    }
    Ok(rows)
}

/// Everything needed to interpret a metrics file.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RunMetadata {
    pub seed: u64,
    pub termination: Termination,
    pub rows: usize,
    pub config: SimConfig,
    pub gene_effects: GeneEffectTable,
    pub best_gene: usize,
    pub policy_effects: PolicyEffectTable,
}

impl RunMetadata {
    pub fn of(result: &RunResult) -> Self {
        Self {
            seed: result.config.seed,
            termination: result.termination,
            rows: result.rows.len(),
            config: result.config.clone(),
            gene_effects: result.gene_effects.clone(),
            best_gene: result.gene_effects.best_gene(),
            policy_effects: result.policy_effects.clone(),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `metrics.csv` and `run.json` for one run into `dir`.
pub fn write_run(result: &RunResult, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_metrics_csv(&result.rows, &dir.join(METRICS_FILE))?;
    let meta = serde_json::to_string_pretty(&RunMetadata::of(result))
        .map_err(|e| Error::Logic(format!("metadata serialization: {e}")))?;
    let path = dir.join(METADATA_FILE);
    fs::write(&path, meta + "\n").map_err(|e| Error::io(path, e))
}

pub fn replicate_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}"))
}

/// Writes one subdirectory per replicate plus `summary.csv`.
pub fn write_results(results: &[RunResult], dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for r in results {
        write_run(r, &replicate_dir(dir, r.config.seed))?;
    }
    write_summary_csv(&ensemble_summary(results), &dir.join(SUMMARY_FILE))
}

/// Mean and sample standard deviation of the values present.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Moments {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().fold(0.0, |acc, v| acc + v) / n as f64;
        let sd = (n >= 2).then(|| {
            (values.iter().fold(0.0, |acc, v| acc + (v - mean).powi(2)) / (n - 1) as f64).sqrt()
        });
        Self {
            n,
            mean: Some(mean),
            sd,
        }
    }
}

pub const SUMMARY_METRICS: [&str; 6] = [
    "total_viruses",
    "n_strains",
    "mean_virus_r",
    "mean_policy_reduction",
    "mean_effective_r",
    "freq_best_gene",
];

/// Cross-replicate statistics for one period.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: u32,
    /// Replicates that recorded a row at `t`.
    pub n_runs: usize,
    pub n_extinct: usize,
    /// In `SUMMARY_METRICS` order.
    pub metrics: [Moments; 6],
}

pub fn ensemble_summary(results: &[RunResult]) -> Vec<SummaryRow> {
    let max_t = results
        .iter()
        .flat_map(|r| r.rows.last().map(|row| row.t))
        .max();
    let Some(max_t) = max_t else {
        return Vec::new();
    };
    (0..=max_t)
        .map(|t| {
            let rows: Vec<&MetricsRow> = results
                .iter()
                .filter_map(|r| r.rows.iter().find(|row| row.t == t))
                .collect();
            let collect = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Moments {
                Moments::of(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                t,
                n_runs: rows.len(),
                n_extinct: rows.iter().filter(|r| r.extinct).count(),
                metrics: [
                    collect(&|r| Some(r.total_viruses as f64)),
                    collect(&|r| Some(r.n_strains as f64)),
                    collect(&|r| r.mean_virus_r),
                    collect(&|r| Some(r.mean_policy_reduction)),
                    collect(&|r| r.mean_effective_r),
                    collect(&|r| r.freq_best_gene),
                ],
            }
        })
        .collect()
}

pub fn summary_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "n_runs".to_string(), "n_extinct".to_string()];
    for m in SUMMARY_METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_sd"));
    }
    h
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(summary_header()).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.t.to_string(), r.n_runs.to_string(), r.n_extinct.to_string()];
        for m in &r.metrics {
            rec.push(opt(m.mean));
            rec.push(opt(m.sd));
        }
        w.write_record(rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
