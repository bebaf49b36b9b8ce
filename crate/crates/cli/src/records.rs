//! Result records, summaries and their on-disk layout.
//!
//! An output directory holds:
//!
//! ```text
//! config.toml         effective config (after overrides)
//! results.jsonl       one ResultRecord per job, in job order
//! summary.json        mean ± std per (method, column)
//! table.csv, table.txt
//! records/<job>.json  per-job record, written atomically as jobs finish
//! curves/<job>.jsonl  LQR training curves
//! progress/<job>.jsonl  gridworld training progress
//! checkpoints/<job>.json
//! layouts/<role>-<color>-<i>.json  gridworld layout dumps
//! plots/*.csv
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentKind, Method};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub code_version: String,
    pub config_hash: String,
    pub kind: ExperimentKind,
    pub job: String,
    pub method: Method,
    pub seed: u64,
    /// Table column this record belongs to, e.g. `n_d=5`. Empty for colored-keys.
    pub column: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Final training metric per training domain (LQR cost, or eval reward).
    pub train: BTreeMap<String, f64>,
    /// Held-out metric per test domain. A missing entry has a flag explaining why.
    pub test: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
    pub wall_clock_secs: f64,
    #[serde(default)]
    pub artifacts: Vec<String>,
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(Self { n, mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: Method,
    pub column: String,
    pub metric: String,
    pub stat: Option<Stat>,
    /// Seeds of the config with no value in this cell.
    pub missing_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub job: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub code_version: String,
    pub config_hash: String,
    pub kind: ExperimentKind,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Column order of the table.
    pub columns: Vec<String>,
    pub cells: Vec<SummaryCell>,
    pub failures: Vec<Failure>,
}

/// Headline values of a record, keyed by table column.
pub fn headline(kind: ExperimentKind, rec: &ResultRecord) -> Vec<(String, f64)> {
    if rec.status != Status::Ok {
        return vec![];
    }
    if kind.is_lqr() {
        rec.test.get("test").map(|v| vec![(rec.column.clone(), *v)]).unwrap_or_default()
    } else {
        rec.train
            .iter()
            .map(|(c, v)| (format!("{c} (train)"), *v))
            .chain(rec.test.iter().map(|(c, v)| (format!("{c} (test)"), *v)))
            .collect()
    }
}

/// Mean ± std of the headline metric for every `(method, column)` pair.
pub fn summarize(
    kind: ExperimentKind,
    config_hash: &str,
    methods: &[Method],
    seeds: &[u64],
    columns: &[String],
    records: &[ResultRecord],
) -> Summary {
    let metric = if kind.is_lqr() { "test_cost" } else { "reward" };
    let mut values: BTreeMap<(Method, String), Vec<(u64, f64)>> = BTreeMap::new();
    for rec in records {
        for (col, v) in headline(kind, rec) {
            values.entry((rec.method, col)).or_default().push((rec.seed, v));
        }
    }
    let mut cells = Vec::new();
    for &m in methods {
        for col in columns {
            let vals = values.get(&(m, col.clone())).cloned().unwrap_or_default();
            let present: Vec<u64> = vals.iter().map(|(s, _)| *s).collect();
            let nums: Vec<f64> = vals.iter().map(|(_, v)| *v).collect();
            cells.push(SummaryCell {
                method: m,
                column: col.clone(),
                metric: metric.into(),
                stat: Stat::of(&nums),
                missing_seeds: seeds.iter().copied().filter(|s| !present.contains(s)).collect(),
            });
        }
    }
    let failures = records
        .iter()
        .filter(|r| r.status == Status::Failed)
        .map(|r| Failure {
            job: r.job.clone(),
            error: r.error.clone().unwrap_or_default(),
        })
        .collect();
    Summary {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config_hash: config_hash.into(),
        kind,
        methods: methods.to_vec(),
        seeds: seeds.to_vec(),
        columns: columns.to_vec(),
        cells,
        failures,
    }
}
