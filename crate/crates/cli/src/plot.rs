use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use ipo_core::lqr::CurvePoint;
use ipo_core::rl::ProgressRecord;

use crate::records::{read_jsonl, write_atomic, ResultRecord, Stat, Status};

/// One plotted line: per x, the values of every seed that has one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub points: BTreeMap<usize, Vec<f64>>,
}

impl Series {
    pub fn to_csv(&self, x_name: &str) -> String {
        let mut out = format!("{x_name},mean,std,n\n");
        for (x, vals) in &self.points {
            let s = Stat::of(vals).expect("non-empty point");
            let std = s.std.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{x},{},{std},{}", s.mean, s.n).unwrap();
        }
        out
    }
}

/// LQR curves of several seeds. A run that stopped early holds its final cost
/// for the remaining iterations, so every seed spans the longest run.
pub fn lqr_series(curves: &[Vec<CurvePoint>]) -> Series {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = Series::default();
    for c in curves.iter().filter(|c| !c.is_empty()) {
        for i in 0..len {
            let p = &c[i.min(c.len() - 1)];
            s.points.entry(i).or_default().push(p.mean_cost);
        }
    }
    s
}

/// Gridworld reward curves keyed by channel: `all` (every finished episode)
/// plus one channel per key color.
pub fn progress_series(runs: &[Vec<ProgressRecord>]) -> BTreeMap<String, Series> {
    let mut out: BTreeMap<String, Series> = BTreeMap::new();
    for run in runs {
        for r in run {
            if let Some(v) = r.mean_episode_reward {
                out.entry("all".into()).or_default().points.entry(r.step).or_default().push(v);
            }
            for (c, v) in &r.domain_rewards {
                out.entry(c.clone()).or_default().points.entry(r.step).or_default().push(*v);
            }
        }
    }
    out
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `plots/<method>[_<column>]_<channel>.csv` from the curve and
/// progress artifacts referenced by `results.jsonl`.
pub fn emit_plot_data(out: &Path) -> Result<Vec<PathBuf>> {
    let records: Vec<ResultRecord> = read_jsonl(&out.join("results.jsonl"))?;
    let mut lqr: BTreeMap<(String, String), Vec<Vec<CurvePoint>>> = BTreeMap::new();
    let mut grid: BTreeMap<String, Vec<Vec<ProgressRecord>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == Status::Ok) {
        for a in &r.artifacts {
            if a.starts_with("curves/") {
                lqr.entry((r.method.to_string(), r.column.clone()))
                    .or_default()
                    .push(read_jsonl(&out.join(a))?);
            } else if a.starts_with("progress/") {
                grid.entry(r.method.to_string()).or_default().push(read_jsonl(&out.join(a))?);
            }
        }
    }
    let dir = out.join("plots");
    let mut written = Vec::new();
    for ((method, column), curves) in &lqr {
        let path = dir.join(format!("{}_{}_cost.csv", slug(method), slug(column)));
        write_atomic(&path, lqr_series(curves).to_csv("iteration").as_bytes())?;
        written.push(path);
    }
    for (method, runs) in &grid {
        for (channel, series) in progress_series(runs) {
            let path = dir.join(format!("{}_{}_reward.csv", slug(method), slug(&channel)));
            write_atomic(&path, series.to_csv("step").as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}
