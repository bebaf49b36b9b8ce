use std::path::{Path, PathBuf};

use ipo_cli::config::{ExperimentConfig, Method};
use ipo_cli::plot::emit_plot_data;
use ipo_cli::records::{read_jsonl, ResultRecord, Status};
use ipo_cli::run::{retabulate, run_experiment};
use ipo_cli::SCHEMA_VERSION;
use ipo_core::gridworld::GridDump;
use ipo_core::nn::Checkpoint;
use proptest::prelude::*;

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn shipped_configs_parse() {
    for name in ["lqr_table1.toml", "lqr_table2.toml", "colored_keys.toml", "smoke_lqr.toml", "smoke_colored_keys.toml"] {
        config(name);
    }
}

#[test]
fn lqr_sweep_is_reproducible_and_complete() {
    let cfg = config("smoke_lqr.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&cfg, a.path(), 2, false).unwrap();
    let rb = run_experiment(&cfg, b.path(), 1, false).unwrap();

    assert_eq!(read(a.path().join("summary.json")), read(b.path().join("summary.json")));
    assert_eq!(read(a.path().join("table.csv")), read(b.path().join("table.csv")));
    assert_eq!(ra.records.len(), 5 * 2 * 2);
    assert!(ra.records.iter().all(|r| r.status == Status::Ok), "{:?}", ra.summary.failures);
    for (x, y) in ra.records.iter().zip(&rb.records) {
        assert_eq!((&x.train, &x.test, &x.extra), (&y.train, &y.test, &y.extra));
    }

    let on_disk: Vec<ResultRecord> = read_jsonl(&a.path().join("results.jsonl")).unwrap();
    assert_eq!(on_disk.len(), ra.records.len());
    assert!(on_disk.iter().all(|r| r.schema_version == SCHEMA_VERSION && r.config_hash == cfg.hash()));
    assert_eq!(std::fs::read_dir(a.path().join("records")).unwrap().count(), on_disk.len());

    // The oracle is a lower bound on every policy sharing its problem instance.
    for r in &on_disk {
        let oracle = r.extra["oracle_cost"].as_f64().unwrap();
        for v in r.train.values().chain(r.test.values()) {
            assert!(*v >= oracle - 1e-9, "{}: {v} < {oracle}", r.job);
        }
    }

    let table = read(a.path().join("table.txt"));
    assert!(table.starts_with("method"));
    assert_eq!(ra.table.rows.len(), 5);
    assert_eq!(ra.table.header, vec!["method", "n_d=2", "n_d=3"]);

    let (summary, _) = retabulate(a.path()).unwrap();
    assert_eq!(summary, ra.summary);

    let plots = emit_plot_data(a.path()).unwrap();
    assert_eq!(plots.len(), 4 * 2);
    let csv = read(a.path().join("plots/gd_n_d_2_cost.csv"));
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    assert!(rows.iter().all(|r| r[3] == 2.0));
    // accepted steps never increase the objective, so neither does the seed mean
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-9));
}

#[test]
fn a_failing_cell_does_not_abort_the_sweep() {
    let mut cfg = config("smoke_lqr.toml");
    cfg.seeds = vec![0];
    cfg.lqr.n_d = vec![2];
    let dir = tempfile::tempdir().unwrap();
    // trained methods write curves there; a plain file makes that fail
    std::fs::write(dir.path().join("curves"), b"").unwrap();
    let report = run_experiment(&cfg, dir.path(), 1, false).unwrap();
    let ok: Vec<Method> = report.records.iter().filter(|r| r.status == Status::Ok).map(|r| r.method).collect();
    assert_eq!(ok, vec![Method::Oracle]);
    assert_eq!(report.summary.failures.len(), 4);
    assert_eq!(report.table.rows.len(), 1);
    assert!(report.table.warnings.iter().any(|w| w.starts_with("failed gd-")));
}

#[test]
fn colored_keys_run_writes_every_artifact() {
    let cfg = config("smoke_colored_keys.toml");
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path(), 2, false).unwrap();
    assert!(report.summary.failures.is_empty(), "{:?}", report.summary.failures);
    assert_eq!(report.table.header, vec!["method", "red (train)", "green (train)", "grey (test)"]);

    let dump: GridDump = serde_json::from_str(&read(dir.path().join("layouts/eval-grey-0.json"))).unwrap();
    assert_eq!((dump.width, dump.height, dump.cells.len()), (5, 5, 25));

    for r in &report.records {
        assert_eq!(r.train.len(), 2);
        assert!(r.test.contains_key("grey"));
        let ckpt = Checkpoint::load(&dir.path().join(format!("checkpoints/{}.json", r.job))).unwrap();
        let n_nets = if r.method == Method::Ipo { 2 } else { 1 };
        assert_eq!(ckpt.into_nets().unwrap().len(), n_nets);
        let progress = read(dir.path().join(format!("progress/{}.jsonl", r.job)));
        for line in progress.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["step", "domain", "mean_episode_reward", "losses", "entropy"] {
                assert!(v.get(key).is_some(), "{key} missing in {line}");
            }
        }
    }
    let plots = emit_plot_data(dir.path()).unwrap();
    let names: Vec<String> = plots.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for want in ["ppo_all_reward.csv", "ppo_red_reward.csv", "ipo_green_reward.csv"] {
        assert!(names.iter().any(|n| n == want), "{want} not in {names:?}");
    }
}

#[test]
fn cli_binary_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke_lqr.toml");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_ipo"))
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seeds", "1", "--methods", "oracle,gd", "--jobs", "1"])
        .env("IPO_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<ResultRecord> = read_jsonl(&dir.path().join("results.jsonl")).unwrap();
    assert_eq!(records.len(), 2 * 2);

    let table = std::process::Command::new(env!("CARGO_BIN_EXE_ipo"))
        .args(["table", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(table.status.success());
    assert!(String::from_utf8_lossy(&table.stdout).contains("±n/a"));
}

fn base() -> ExperimentConfig {
    ExperimentConfig::from_toml("kind = \"lqr-table-1\"\nmethods = [\"gd\"]\nseeds = [0]\n").unwrap()
}

#[test]
fn hash_ignores_formatting_and_output_location() {
    let a = ExperimentConfig::from_toml("kind = \"lqr-table-1\"\nmethods = [\"gd\"]\nseeds = [0]\n").unwrap();
    let b = ExperimentConfig::from_toml(
        "seeds = [ 0 ]\noutput = \"elsewhere\"\n# comment\nmethods = [\"gd\"]\nkind = \"lqr-table-1\"\n[lqr]\nn_s = 20\n",
    )
    .unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

proptest! {
    #[test]
    fn every_field_change_changes_the_hash(field in 0usize..20, bump in 1u64..5) {
        let a = base();
        let mut b = a.clone();
        let f = bump as f64;
        match field {
            0 => b.kind = ipo_cli::ExperimentKind::LqrTable2,
            1 => b.methods.push(Method::Oracle),
            2 => b.seeds[0] += bump,
            3 => b.lqr.n_s += bump as usize,
            4 => b.lqr.n_a += bump as usize,
            5 => b.lqr.n_d.push(bump as usize),
            6 => b.lqr.n_y[0] += bump as usize,
            7 => b.lqr.distractor_init_scale += f,
            8 => b.lqr.max_iters += bump as usize,
            9 => b.lqr.rel_tol *= 1.0 + f,
            10 => b.lqr.gd_lr *= 1.0 + f,
            11 => b.lqr.ipo_lr *= 1.0 + f,
            12 => b.colored_keys.train_colors.pop().map(|_| ()).unwrap_or(()),
            13 => b.colored_keys.test_colors.push(ipo_core::gridworld::Color::Blue),
            14 => b.colored_keys.layouts_per_color += bump as usize,
            15 => b.colored_keys.layout_seed += bump,
            16 => b.colored_keys.eval_layouts += bump as usize,
            17 => b.colored_keys.eval_episodes += bump as usize,
            18 => b.colored_keys.eval_seed += bump,
            _ => b.colored_keys.total_steps += bump as usize,
        }
        prop_assert_ne!(a.hash(), b.hash());
    }
}

#[test]
fn inner_rounds_is_hashed() {
    let a = base();
    let mut b = a.clone();
    b.colored_keys.inner_rounds = 2;
    assert_ne!(a.hash(), b.hash());
}
