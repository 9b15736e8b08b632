use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::stats::{aggregate, Aggregate};
use super::ExpError;

/// One measured value. `metrics.jsonl` holds these one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub study: String,
    pub env: String,
    pub algo: String,
    pub seed: u64,
    pub step: usize,
    pub metric_name: String,
    pub value: f64,
    /// Confounding strength for offline-study records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    /// Seconds since the run started. Left out of `metrics.jsonl` so that
    /// repeated runs are byte-identical; timings go to `timings.jsonl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl MetricRecord {
    pub fn new(study: &str, env: &str, algo: &str, seed: u64, step: usize, metric: &str, value: f64) -> Result<Self, ExpError> {
        if !value.is_finite() {
            return Err(ExpError::Run(format!("{algo}/{metric} seed {seed}: non-finite value {value}")));
        }
        Ok(Self {
            study: study.to_string(),
            env: env.to_string(),
            algo: algo.to_string(),
            seed,
            step,
            metric_name: metric.to_string(),
            value,
            strength: None,
            wall_time: None,
        })
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = Some(strength);
        self
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[MetricRecord]) -> Result<(), ExpError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| ExpError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| ExpError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<MetricRecord>, ExpError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| ExpError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ExpError::Config(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Strength as a grouping key; `f64` is not `Ord`.
fn strength_key(s: Option<f64>) -> Option<u64> {
    s.map(f64::to_bits)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub study: String,
    pub env: String,
    pub algo: String,
    pub strength: Option<f64>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub ci95: Option<f64>,
    /// Some seed of this group failed, so fewer than the requested seeds
    /// contribute.
    pub partial: bool,
}

impl SummaryRow {
    pub fn aggregate(&self) -> Aggregate {
        Aggregate { n: self.n, mean: self.mean, ci95: self.ci95 }
    }
}

type GroupKey = (String, String, String, Option<u64>, String);

/// Per-seed final values grouped by `(study, env, algo, strength, metric)`:
/// each seed contributes the value at its largest step, so learning curves
/// summarize to their last point.
pub fn final_values(records: &[MetricRecord]) -> BTreeMap<GroupKey, BTreeMap<u64, f64>> {
    let mut last: BTreeMap<GroupKey, BTreeMap<u64, (usize, f64)>> = BTreeMap::new();
    for r in records {
        let key = (r.study.clone(), r.env.clone(), r.algo.clone(), strength_key(r.strength), r.metric_name.clone());
        let slot = last.entry(key).or_default().entry(r.seed).or_insert((r.step, r.value));
        if r.step >= slot.0 {
            *slot = (r.step, r.value);
        }
    }
    last.into_iter().map(|(k, seeds)| (k, seeds.into_iter().map(|(s, (_, v))| (s, v)).collect())).collect()
}

/// Aggregate every group across seeds. `expected_seeds` marks groups with
/// fewer seeds as partial.
pub fn summarize(records: &[MetricRecord], expected_seeds: usize) -> Result<Vec<SummaryRow>, ExpError> {
    let mut rows = Vec::new();
    for ((study, env, algo, strength, metric), seeds) in final_values(records) {
        let values: Vec<f64> = seeds.values().copied().collect();
        let agg = aggregate(&values)?;
        rows.push(SummaryRow {
            study,
            env,
            algo,
            strength: strength.map(f64::from_bits),
            metric,
            n: agg.n,
            mean: agg.mean,
            ci95: agg.ci95,
            partial: agg.n < expected_seeds,
        });
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), ExpError> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| ExpError::Io(e.to_string());
    out.write_record(["study", "env", "algo", "strength", "metric", "n", "mean", "ci95", "partial"]).map_err(io)?;
    for r in rows {
        out.write_record([
            r.study.clone(),
            r.env.clone(),
            r.algo.clone(),
            r.strength.map(|s| s.to_string()).unwrap_or_default(),
            r.metric.clone(),
            r.n.to_string(),
            r.mean.to_string(),
            r.ci95.map(|c| c.to_string()).unwrap_or_default(),
            r.partial.to_string(),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| ExpError::Io(e.to_string()))
}

pub fn read_summary_csv<R: std::io::Read>(r: R) -> Result<Vec<SummaryRow>, ExpError> {
    let mut reader = csv::Reader::from_reader(r);
    let bad = |what: &str, e: String| ExpError::Config(format!("summary.csv {what}: {e}"));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad("row", e.to_string()))?;
        let opt = |s: &str| -> Result<Option<f64>, ExpError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e: std::num::ParseFloatError| bad("number", e.to_string()))
            }
        };
        rows.push(SummaryRow {
            study: rec[0].to_string(),
            env: rec[1].to_string(),
            algo: rec[2].to_string(),
            strength: opt(&rec[3])?,
            metric: rec[4].to_string(),
            n: rec[5].parse().map_err(|e: std::num::ParseIntError| bad("n", e.to_string()))?,
            mean: rec[6].parse().map_err(|e: std::num::ParseFloatError| bad("mean", e.to_string()))?,
            ci95: opt(&rec[7])?,
            partial: rec[8].parse().map_err(|e: std::str::ParseBoolError| bad("partial", e.to_string()))?,
        });
    }
    Ok(rows)
}

/// Find a summary row.
pub fn lookup<'a>(rows: &'a [SummaryRow], env: &str, algo: &str, strength: Option<f64>, metric: &str) -> Option<&'a SummaryRow> {
    rows.iter().find(|r| r.env == env && r.algo == algo && r.metric == metric && strength_key(r.strength) == strength_key(strength))
}
