//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! kind = "lqr-table-1"          # lqr-table-1 | lqr-table-2 | colored-keys
//! methods = ["oracle", "gd", "overparam", "ipo-fixed", "ipo-variable"]
//! seeds = [0, 1, 2]
//! output = "results/table1"     # optional; --out and IPO_OUT take precedence
//!
//! [lqr]                         # LQR kinds only; every key optional
//! n_s = 20
//! n_a = 20
//! n_d = [2, 3, 4, 5, 10]        # the sweep axis of lqr-table-1
//! n_y = [1000]                  # the sweep axis of lqr-table-2
//! distractor_init_scale = 0.13
//! max_iters = 5000
//! rel_tol = 1e-7
//! gd_lr = 0.001
//! ipo_lr = 0.0005
//!
//! [colored_keys]                # colored-keys only; every key optional
//! train_colors = ["red", "green"]
//! test_colors = ["grey"]
//! layouts_per_color = 24
//! layout_seed = 0
//! eval_layouts = 50
//! eval_episodes = 50
//! eval_seed = 0
//! total_steps = 120000
//! inner_rounds = 1
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ipo_core::gridworld::Color;
use ipo_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "lqr-table-1")]
    LqrTable1,
    #[serde(rename = "lqr-table-2")]
    LqrTable2,
    #[serde(rename = "colored-keys")]
    ColoredKeys,
}

impl ExperimentKind {
    pub fn is_lqr(self) -> bool {
        !matches!(self, ExperimentKind::ColoredKeys)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Oracle,
    Gd,
    Overparam,
    IpoFixed,
    IpoVariable,
    Ppo,
    Ipo,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Oracle,
        Method::Gd,
        Method::Overparam,
        Method::IpoFixed,
        Method::IpoVariable,
        Method::Ppo,
        Method::Ipo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Gd => "gd",
            Method::Overparam => "overparam",
            Method::IpoFixed => "ipo-fixed",
            Method::IpoVariable => "ipo-variable",
            Method::Ppo => "ppo",
            Method::Ipo => "ipo",
        }
    }

    pub fn is_lqr(self) -> bool {
        !matches!(self, Method::Ppo | Method::Ipo)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .with_context(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrSettings {
    pub n_s: usize,
    pub n_a: usize,
    pub n_d: Vec<usize>,
    pub n_y: Vec<usize>,
    pub distractor_init_scale: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub gd_lr: f64,
    pub ipo_lr: f64,
}

impl Default for LqrSettings {
    fn default() -> Self {
        Self {
            n_s: 20,
            n_a: 20,
            n_d: vec![5],
            n_y: vec![1000],
            distractor_init_scale: 0.13,
            max_iters: 5000,
            rel_tol: 1e-7,
            gd_lr: 0.001,
            ipo_lr: 0.0005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColoredKeysSettings {
    pub train_colors: Vec<Color>,
    pub test_colors: Vec<Color>,
    pub layouts_per_color: usize,
    pub layout_seed: u64,
    pub eval_layouts: usize,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub total_steps: usize,
    pub inner_rounds: usize,
}

impl Default for ColoredKeysSettings {
    fn default() -> Self {
        Self {
            train_colors: vec![Color::Red, Color::Green],
            test_colors: vec![Color::Grey],
            layouts_per_color: 24,
            layout_seed: 0,
            eval_layouts: 50,
            eval_episodes: 50,
            eval_seed: 0,
            total_steps: 120_000,
            inner_rounds: 1,
        }
    }
}

impl ColoredKeysSettings {
    /// Training layout seeds of `color`.
    pub fn train_layouts(&self, color: Color) -> Vec<u64> {
        let tag = format!("layout/train/{color}");
        (0..self.layouts_per_color as u64)
            .map(|i| derive_seed(self.layout_seed, &tag, i))
            .collect()
    }

    /// Held-out layout seeds, shared by every evaluation color.
    pub fn eval_layouts(&self) -> Vec<u64> {
        (0..self.eval_layouts as u64)
            .map(|i| derive_seed(self.layout_seed, "layout/eval", i))
            .collect()
    }

    pub fn eval_colors(&self) -> Vec<Color> {
        let mut out = self.train_colors.clone();
        out.extend(self.test_colors.iter().filter(|c| !self.train_colors.contains(c)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub lqr: LqrSettings,
    #[serde(default)]
    pub colored_keys: ColoredKeysSettings,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<usize>,
    pub methods: Option<Vec<Method>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(n) = o.seeds {
            self.seeds = (0..n as u64).collect();
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        if self.methods.is_empty() {
            bail!("methods must not be empty");
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            bail!("methods must be distinct");
        }
        if let Some(m) = self.methods.iter().find(|m| m.is_lqr() != self.kind.is_lqr()) {
            bail!("method {m} does not apply to {:?}", self.kind);
        }
        if self.kind.is_lqr() {
            let l = &self.lqr;
            if l.n_s == 0 || l.n_s != l.n_a {
                bail!("lqr: n_s must be positive and equal to n_a");
            }
            if l.n_d.is_empty() || l.n_d.contains(&0) {
                bail!("lqr: n_d values must be positive");
            }
            if l.n_y.is_empty() || l.n_y.iter().any(|&y| y < l.n_s) {
                bail!("lqr: n_y values must be at least n_s");
            }
            match self.kind {
                ExperimentKind::LqrTable1 if l.n_y.len() != 1 => bail!("lqr-table-1 sweeps n_d; give a single n_y"),
                ExperimentKind::LqrTable2 if l.n_d.len() != 1 => bail!("lqr-table-2 sweeps n_y; give a single n_d"),
                _ => {}
            }
            if !(l.distractor_init_scale >= 0.0 && l.distractor_init_scale.is_finite()) {
                bail!("lqr: distractor_init_scale must be non-negative");
            }
            if !(l.gd_lr > 0.0 && l.ipo_lr > 0.0 && l.rel_tol >= 0.0) || l.max_iters == 0 {
                bail!("lqr: learning rates and max_iters must be positive");
            }
        } else {
            let c = &self.colored_keys;
            if c.train_colors.is_empty() || c.test_colors.is_empty() {
                bail!("colored_keys: need training and test colors");
            }
            if c.train_colors.iter().map(|c| c.code()).collect::<BTreeSet<_>>().len() != c.train_colors.len() {
                bail!("colored_keys: training colors must be distinct");
            }
            if c.layouts_per_color == 0 || c.eval_layouts == 0 || c.eval_episodes == 0 {
                bail!("colored_keys: layout and episode counts must be positive");
            }
            if c.total_steps == 0 || c.inner_rounds == 0 {
                bail!("colored_keys: total_steps and inner_rounds must be positive");
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical (sorted-key) JSON form, excluding `output`,
    /// which says where results go rather than what they are.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        let canonical = serde_json::to_string(&v).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of one `(replicate, method, cell)` job. Independent of which other
/// methods or cells are in the sweep.
pub fn cell_seed(replicate: u64, method: Method, cell: &str) -> u64 {
    derive_seed(replicate, &format!("cell/{method}/{cell}"), 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1: &str = r#"
kind = "lqr-table-1"
methods = ["gd", "ipo-fixed"]
seeds = [1, 2]
[lqr]
n_d = [2, 5]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(T1).unwrap();
        assert_eq!(c.lqr.n_y, vec![1000]);
        assert_eq!(c.lqr.n_d, vec![2, 5]);
        assert_eq!(c.colored_keys, ColoredKeysSettings::default());
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            T1.replace("[1, 2]", "[]"),
            T1.replace("[1, 2]", "[1, 1]"),
            T1.replace("\"gd\"", "\"ppo\""),
            T1.replace("n_d = [2, 5]", "n_d = [2]\nn_y = [5]"),
            T1.replace("n_d = [2, 5]", "n_d = [2]\nbogus = 1"),
            T1.replace("lqr-table-1", "lqr-table-2"),
        ] {
            assert!(ExperimentConfig::from_toml(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::from_toml(T1).unwrap();
        c.apply(&Overrides {
            seeds: Some(3),
            methods: Some(vec![Method::Oracle]),
        })
        .unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.methods, vec![Method::Oracle]);
        assert!(c.apply(&Overrides { seeds: Some(0), methods: None }).is_err());
    }

    #[test]
    fn layouts_are_disjoint_seed_sets() {
        let s = ColoredKeysSettings::default();
        let mut all: Vec<u64> = s.train_layouts(Color::Red);
        all.extend(s.train_layouts(Color::Green));
        all.extend(s.eval_layouts());
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        assert_eq!(n, 98);
        assert_eq!(s.eval_colors(), vec![Color::Red, Color::Green, Color::Grey]);
    }
}
