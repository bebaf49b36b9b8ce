use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use ipo_core::gridworld::generate_env;
use ipo_core::lqr::{self, LqrDomain, LqrPolicy, LqrProblem, OptConfig, TrainOutput};
use ipo_core::nn::{save_nets, Architecture};
use ipo_core::rl::{evaluate, train_ipo, train_ppo, DomainPool, PpoConfig, ProgressRecord};
use ipo_core::rng::derive_seed;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{cell_seed, ExperimentConfig, ExperimentKind, LqrSettings, Method};
use crate::records::{
    summarize, write_atomic, write_jsonl, ResultRecord, Status, Summary, CODE_VERSION, SCHEMA_VERSION,
};
use crate::table::{emit_table, Table};

#[derive(Debug, Clone, PartialEq)]
pub enum JobSpec {
    Lqr { n_d: usize, n_y: usize },
    ColoredKeys,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub method: Method,
    pub seed: u64,
    pub column: String,
    pub spec: JobSpec,
}

/// Jobs in table order (method, column, seed), and the table columns.
pub fn plan_jobs(cfg: &ExperimentConfig) -> (Vec<Job>, Vec<String>) {
    let mut jobs = Vec::new();
    if cfg.kind.is_lqr() {
        let l = &cfg.lqr;
        let cells: Vec<(usize, usize, String)> = l
            .n_d
            .iter()
            .flat_map(|&d| l.n_y.iter().map(move |&y| (d, y)))
            .map(|(d, y)| {
                let label = match cfg.kind {
                    ExperimentKind::LqrTable2 => format!("n_y={y}"),
                    _ => format!("n_d={d}"),
                };
                (d, y, label)
            })
            .collect();
        for &m in &cfg.methods {
            for (d, y, label) in &cells {
                for &s in &cfg.seeds {
                    jobs.push(Job {
                        id: format!("{m}-nd{d}-ny{y}-s{s}"),
                        method: m,
                        seed: s,
                        column: label.clone(),
                        spec: JobSpec::Lqr { n_d: *d, n_y: *y },
                    });
                }
            }
        }
        (jobs, cells.into_iter().map(|c| c.2).collect())
    } else {
        for &m in &cfg.methods {
            for &s in &cfg.seeds {
                jobs.push(Job {
                    id: format!("{m}-s{s}"),
                    method: m,
                    seed: s,
                    column: String::new(),
                    spec: JobSpec::ColoredKeys,
                });
            }
        }
        let ck = &cfg.colored_keys;
        let columns = ck
            .eval_colors()
            .into_iter()
            .map(|c| {
                let role = if ck.train_colors.contains(&c) { "train" } else { "test" };
                format!("{c} ({role})")
            })
            .collect();
        (jobs, columns)
    }
}

/// Metrics of one successful job.
#[derive(Debug, Default)]
struct Outcome {
    train: BTreeMap<String, f64>,
    test: BTreeMap<String, f64>,
    flags: Vec<String>,
    extra: BTreeMap<String, serde_json::Value>,
    artifacts: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    hash: &'a str,
    out: &'a Path,
}

/// Problem, training domains and held-out domain of one LQR replicate. Shared
/// by every method and column with the same replicate seed; domain `i` is the
/// same whatever `n_d` is.
pub fn lqr_instance(l: &LqrSettings, seed: u64, n_d: usize, n_y: usize) -> Result<(LqrProblem, Vec<LqrDomain>, LqrDomain)> {
    let problem = lqr::make_problem(l.n_s, l.n_a, derive_seed(seed, "lqr/problem", 0))?;
    let train = (0..n_d as u64)
        .map(|i| lqr::make_domain(&problem, n_y, derive_seed(seed, "lqr/train-domain", i)))
        .collect::<ipo_core::Result<Vec<_>>>()?;
    let test = lqr::make_domain(&problem, n_y, derive_seed(seed, "lqr/test-domain", 0))?;
    Ok((problem, train, test))
}

pub fn lqr_opts(l: &LqrSettings, method: Method, init_seed: u64) -> OptConfig {
    let lr = if matches!(method, Method::IpoFixed | Method::IpoVariable) { l.ipo_lr } else { l.gd_lr };
    OptConfig {
        max_iters: l.max_iters,
        rel_tol: l.rel_tol,
        distractor_init_scale: l.distractor_init_scale,
        init_seed,
        ..OptConfig::with_lr(lr)
    }
}

fn finish_lqr<P: LqrPolicy>(
    ctx: &Ctx,
    job: &Job,
    out: TrainOutput<P>,
    problem: &LqrProblem,
    test: &LqrDomain,
    o: &mut Outcome,
) -> Result<()> {
    let last = out.curve.last().context("empty training curve")?;
    for (i, c) in last.per_domain.iter().enumerate() {
        o.train.insert(format!("d{i}"), *c);
    }
    let cost = lqr::evaluate_transfer(&out.policy, problem, test)?;
    if cost.is_finite() {
        o.test.insert("test".into(), cost);
    } else {
        o.flags.push("test-unstable".into());
    }
    let k = out.policy.effective_gain();
    o.extra.insert("distractor_norm".into(), json!(lqr::distractor_norm(problem, &k)));
    o.extra.insert("iterations".into(), json!(out.iterations));
    o.extra.insert("converged".into(), json!(out.converged));
    o.extra.insert("skipped_steps".into(), json!(out.skipped_steps));
    if !out.converged {
        o.flags.push("iteration-budget-exhausted".into());
    }
    let rel = format!("curves/{}.jsonl", job.id);
    write_jsonl(&ctx.out.join(&rel), &out.curve)?;
    o.artifacts.push(rel);
    Ok(())
}

fn run_lqr(ctx: &Ctx, job: &Job, n_d: usize, n_y: usize) -> Result<Outcome> {
    let l = &ctx.cfg.lqr;
    let (problem, domains, test) = lqr_instance(l, job.seed, n_d, n_y)?;
    let opts = lqr_opts(l, job.method, cell_seed(job.seed, job.method, &format!("nd{n_d}/ny{n_y}")));
    let mut o = Outcome::default();
    o.extra.insert("oracle_cost".into(), json!(lqr::oracle_cost(&problem)?));
    match job.method {
        Method::Oracle => {
            let c = lqr::oracle_cost(&problem)?;
            o.test.insert("test".into(), c);
        }
        Method::Gd => finish_lqr(ctx, job, lqr::train_gd(&problem, &domains, &opts)?, &problem, &test, &mut o)?,
        Method::Overparam => {
            finish_lqr(ctx, job, lqr::train_overparam(&problem, &domains, &opts)?, &problem, &test, &mut o)?
        }
        Method::IpoFixed | Method::IpoVariable => {
            let fixed = job.method == Method::IpoFixed;
            let out = lqr::train_ipo_lqr(&problem, &domains, fixed, &opts)?;
            finish_lqr(ctx, job, out, &problem, &test, &mut o)?
        }
        m => bail!("{m} is not an LQR method"),
    }
    Ok(o)
}

fn run_colored_keys(ctx: &Ctx, job: &Job) -> Result<Outcome> {
    let ck = &ctx.cfg.colored_keys;
    let pools: Vec<DomainPool> = ck
        .train_colors
        .iter()
        .map(|&color| DomainPool {
            color,
            seeds: ck.train_layouts(color),
        })
        .collect();
    let base = match job.method {
        Method::Ppo => PpoConfig::ppo(),
        Method::Ipo => PpoConfig::ipo(),
        m => bail!("{m} is not a colored-keys method"),
    };
    let cfg = PpoConfig {
        total_steps: ck.total_steps,
        inner_rounds: ck.inner_rounds,
        ..base
    };
    let seed = cell_seed(job.seed, job.method, "colored-keys");

    let progress_rel = format!("progress/{}.jsonl", job.id);
    let progress_path = ctx.out.join(&progress_rel);
    std::fs::create_dir_all(progress_path.parent().expect("has parent"))?;
    let mut log = BufWriter::new(File::create(&progress_path)?);
    let mut log_err = None;
    let mut sink = |r: &ProgressRecord| {
        if log_err.is_none() {
            let res = serde_json::to_writer(&mut log, r)
                .map_err(anyhow::Error::from)
                .and_then(|_| log.write_all(b"\n").map_err(Into::into));
            log_err = res.err();
        }
    };
    let run = match job.method {
        Method::Ppo => train_ppo(&pools, &cfg, Architecture::default(), seed, &mut sink)?,
        _ => train_ipo(&pools, &cfg, Architecture::default(), seed, &mut sink)?,
    };
    if let Some(e) = log_err {
        return Err(e.context("writing progress"));
    }
    log.flush()?;

    let mut o = Outcome::default();
    o.artifacts.push(progress_rel);
    let ckpt_rel = format!("checkpoints/{}.json", job.id);
    let meta = json!({
        "method": job.method,
        "seed": job.seed,
        "net_seed": seed,
        "config_hash": ctx.hash,
        "train_colors": ck.train_colors,
        "layout_seed": ck.layout_seed,
        "steps": run.steps,
    });
    std::fs::create_dir_all(ctx.out.join("checkpoints"))?;
    save_nets(&ctx.out.join(&ckpt_rel), run.policy.nets(), meta)?;
    o.artifacts.push(ckpt_rel);

    let layouts = ck.eval_layouts();
    for color in ck.eval_colors() {
        let res = evaluate(&run.policy, color, &layouts, ck.eval_episodes, ck.eval_seed)?;
        let slot = if ck.train_colors.contains(&color) { &mut o.train } else { &mut o.test };
        slot.insert(color.to_string(), res.mean_reward);
    }
    o.extra.insert("steps".into(), json!(run.steps));
    o.extra.insert("updates".into(), json!(run.progress.len()));
    o.extra.insert("eval_actions".into(), json!("sampled"));
    if let Some(last) = run.progress.last() {
        o.extra.insert("final_entropy".into(), json!(last.entropy));
    }
    Ok(o)
}

fn run_job(ctx: &Ctx, job: &Job) -> ResultRecord {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| match job.spec {
        JobSpec::Lqr { n_d, n_y } => run_lqr(ctx, job, n_d, n_y),
        JobSpec::ColoredKeys => run_colored_keys(ctx, job),
    }))
    .unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(anyhow!("panicked: {msg}"))
    });
    let (status, error, o) = match result {
        Ok(o) => (Status::Ok, None, o),
        Err(e) => (Status::Failed, Some(format!("{e:#}")), Outcome::default()),
    };
    ResultRecord {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        config_hash: ctx.hash.into(),
        kind: ctx.cfg.kind,
        job: job.id.clone(),
        method: job.method,
        seed: job.seed,
        column: job.column.clone(),
        status,
        error,
        train: o.train,
        test: o.test,
        flags: o.flags,
        extra: o.extra,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        artifacts: o.artifacts,
    }
}

fn dump_layouts(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let ck = &cfg.colored_keys;
    let dir = out.join("layouts");
    std::fs::create_dir_all(&dir)?;
    let write = |name: String, env: ipo_core::gridworld::GridEnv| -> Result<()> {
        let text = serde_json::to_string_pretty(&env.dump())?;
        write_atomic(&dir.join(name), text.as_bytes())
    };
    for &c in &ck.train_colors {
        for (i, s) in ck.train_layouts(c).into_iter().enumerate() {
            write(format!("train-{c}-{i}.json"), generate_env(c, s))?;
        }
    }
    for c in ck.eval_colors() {
        for (i, s) in ck.eval_layouts().into_iter().enumerate() {
            write(format!("eval-{c}-{i}.json"), generate_env(c, s))?;
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct RunReport {
    pub out: PathBuf,
    pub records: Vec<ResultRecord>,
    pub summary: Summary,
    pub table: Table,
}

/// Runs every `(method, column, seed)` job on a pool of `jobs` threads and
/// writes the output directory. A failing job becomes a `failed` record.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize, verbose: bool) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let hash = cfg.hash();
    write_atomic(&out.join("config.toml"), toml::to_string(cfg)?.as_bytes())?;
    if cfg.kind == ExperimentKind::ColoredKeys {
        dump_layouts(cfg, out)?;
    }
    let (plan, columns) = plan_jobs(cfg);
    let ctx = Ctx { cfg, hash: &hash, out };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let records: Vec<ResultRecord> = pool.install(|| {
        plan.par_iter()
            .map(|job| {
                let rec = run_job(&ctx, job);
                let path = out.join("records").join(format!("{}.json", job.id));
                if let Err(e) = serde_json::to_vec(&rec).map_err(anyhow::Error::from).and_then(|b| write_atomic(&path, &b)) {
                    eprintln!("warning: could not write {}: {e:#}", path.display());
                }
                let n = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                if verbose {
                    let status = match &rec.error {
                        None => "ok".to_string(),
                        Some(e) => format!("FAILED: {e}"),
                    };
                    eprintln!("[{n}/{}] {} {status} ({:.1}s)", plan.len(), job.id, rec.wall_clock_secs);
                }
                rec
            })
            .collect()
    });
    write_jsonl(&out.join("results.jsonl"), &records)?;
    let summary = summarize(cfg.kind, &hash, &cfg.methods, &cfg.seeds, &columns, &records);
    write_summary(out, &summary)
        .map(|table| RunReport {
            out: out.to_path_buf(),
            records,
            summary,
            table,
        })
}

pub fn write_summary(out: &Path, summary: &Summary) -> Result<Table> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    let table = emit_table(summary);
    write_atomic(&out.join("table.csv"), table.to_csv().as_bytes())?;
    write_atomic(&out.join("table.txt"), table.to_text().as_bytes())?;
    Ok(table)
}

/// Rebuilds the summary and table of an output directory from its records.
pub fn retabulate(out: &Path) -> Result<(Summary, Table)> {
    let cfg: ExperimentConfig = toml::from_str(&std::fs::read_to_string(out.join("config.toml"))?)?;
    let records: Vec<ResultRecord> = crate::records::read_jsonl(&out.join("results.jsonl"))?;
    if let Some(r) = records.iter().find(|r| r.schema_version != SCHEMA_VERSION) {
        bail!("{} has schema version {}, expected {SCHEMA_VERSION}", r.job, r.schema_version);
    }
    let (_, columns) = plan_jobs(&cfg);
    let summary = summarize(cfg.kind, &cfg.hash(), &cfg.methods, &cfg.seeds, &columns, &records);
    let table = write_summary(out, &summary)?;
    Ok((summary, table))
}
