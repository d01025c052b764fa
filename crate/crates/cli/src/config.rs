//! Benchmark configuration: a JSON document plus command-line overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use kanfc::data::{MissingPolicy, Target};
use kanfc::model::{Hyper, ModelKind};
use kanfc::train::TrainConfig;
use kanfc::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub city: String,
    pub path: PathBuf,
}

/// Settings shared by every job unless a model override replaces them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub window: usize,
    pub split: [f64; 3],
    pub hyper: Hyper,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 0.001,
            patience: 15,
            window: 14,
            split: [0.72, 0.08, 0.20],
            hyper: Hyper::default(),
        }
    }
}

/// Per-model replacements; unset fields fall back to [`Training`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
    pub hidden: Option<usize>,
    pub depth: Option<usize>,
    pub dropout: Option<f64>,
    pub kan_hidden: Option<Vec<usize>>,
    pub grid_intervals: Option<usize>,
    pub spline_degree: Option<usize>,
    pub sub_width: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetEntry>,
    #[serde(default = "all_targets")]
    pub targets: Vec<Target>,
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub training: Training,
    #[serde(default)]
    pub overrides: BTreeMap<ModelKind, Overrides>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Parallel jobs; defaults to the number of available cores.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub missing: MissingPolicy,
    /// Where to look for ensemble member checkpoints that are not part of
    /// this run. Defaults to `<out>/checkpoints`.
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
}

fn all_targets() -> Vec<Target> {
    Target::ALL.to_vec()
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl BenchmarkConfig {
    /// Reads a JSON config; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut config.datasets {
            d.path = base.join(&d.path);
        }
        config.out = base.join(&config.out);
        if let Some(c) = &mut config.checkpoints {
            *c = base.join(&*c);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.datasets.is_empty() {
            return fail("no datasets configured".into());
        }
        if self.targets.is_empty() || self.models.is_empty() {
            return fail("targets and models must be non-empty".into());
        }
        let mut cities = BTreeSet::new();
        for d in &self.datasets {
            if !cities.insert(file_stem(&d.city)) {
                return fail(format!("duplicate city `{}`", d.city));
            }
        }
        if self.targets.iter().collect::<BTreeSet<_>>().len() != self.targets.len() {
            return fail("duplicate target".into());
        }
        if self.models.iter().collect::<BTreeSet<_>>().len() != self.models.len() {
            return fail("duplicate model".into());
        }
        if self.workers == Some(0) {
            return fail("workers must be >= 1".into());
        }
        for kind in ModelKind::ALL {
            self.train_config(kind, Target::T2M, 0).validate()?;
        }
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoints"))
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }

    pub fn train_config(&self, kind: ModelKind, target: Target, seed: u64) -> TrainConfig {
        let t = &self.training;
        let o = self.overrides.get(&kind).cloned().unwrap_or_default();
        let mut hyper = t.hyper.clone();
        hyper.hidden = o.hidden.unwrap_or(hyper.hidden);
        hyper.depth = o.depth.unwrap_or(hyper.depth);
        hyper.dropout = o.dropout.unwrap_or(hyper.dropout);
        hyper.kan_hidden = o.kan_hidden.unwrap_or(hyper.kan_hidden);
        hyper.grid_intervals = o.grid_intervals.unwrap_or(hyper.grid_intervals);
        hyper.spline_degree = o.spline_degree.unwrap_or(hyper.spline_degree);
        hyper.sub_width = o.sub_width.or(hyper.sub_width);
        let mut c = TrainConfig::new(kind, target);
        c.hyper = hyper;
        c.epochs = o.epochs.unwrap_or(t.epochs);
        c.batch_size = o.batch_size.unwrap_or(t.batch_size);
        c.lr = o.lr.unwrap_or(t.lr);
        c.patience = o.patience.unwrap_or(t.patience);
        c.window = t.window;
        c.split = t.split;
        c.seed = seed;
        c
    }

    /// Seed for one job, stable across runs, platforms and job order.
    pub fn job_seed(&self, city: &str, target: Target, model: ModelKind) -> u64 {
        let digest = Sha256::digest(format!("{}/{city}/{target}/{}", self.seed, model.name()));
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

/// Lower-case file-name fragment for a city.
pub fn file_stem(city: &str) -> String {
    city.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub models: Option<Vec<ModelKind>>,
    pub targets: Option<Vec<Target>>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub epochs: Option<usize>,
}

impl CliOverrides {
    pub fn apply(self, config: &mut BenchmarkConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(models) = self.models {
            config.models = models;
        }
        if let Some(targets) = self.targets {
            config.targets = targets;
        }
        if let Some(out) = self.out {
            config.out = out;
        }
        if let Some(w) = self.workers {
            config.workers = Some(w);
        }
        if let Some(e) = self.epochs {
            config.training.epochs = e;
            config.training.patience = config.training.patience.min(e);
            for o in config.overrides.values_mut() {
                o.epochs = None;
                o.patience = o.patience.map(|p| p.min(e));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c: BenchmarkConfig =
            serde_json::from_str(r#"{"datasets": [{"city": "Kigali", "path": "k.csv"}]}"#).unwrap();
        assert_eq!(c.models, ModelKind::ALL.to_vec());
        assert_eq!(c.targets, Target::ALL.to_vec());
        assert_eq!(c.training, Training::default());
        c.validate().unwrap();
    }

    #[test]
    fn overrides_are_per_model() {
        let c: BenchmarkConfig = serde_json::from_str(
            r#"{"datasets": [{"city": "A", "path": "a.csv"}],
                "training": {"epochs": 40, "patience": 5},
                "overrides": {"TKAN5": {"hidden": 16, "lr": 0.01}}}"#,
        )
        .unwrap();
        let t = c.train_config(ModelKind::Tkan5, Target::PS, 3);
        assert_eq!((t.hyper.hidden, t.lr, t.epochs, t.seed), (16, 0.01, 40, 3));
        let k = c.train_config(ModelKind::Kan, Target::PS, 3);
        assert_eq!((k.hyper.hidden, k.lr), (64, 0.001));
    }

    #[test]
    fn rejects_unknown_fields_and_duplicates() {
        assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"datasets": [], "sede": 1}"#).is_err());
        let c: BenchmarkConfig = serde_json::from_str(
            r#"{"datasets": [{"city": "A", "path": "a"}, {"city": "a", "path": "b"}]}"#,
        )
        .unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn job_seeds_differ_per_job_and_are_stable() {
        let c: BenchmarkConfig =
            serde_json::from_str(r#"{"datasets": [{"city": "A", "path": "a"}], "seed": 1}"#).unwrap();
        let a = c.job_seed("A", Target::T2M, ModelKind::Lstm);
        assert_eq!(a, c.job_seed("A", Target::T2M, ModelKind::Lstm));
        assert_ne!(a, c.job_seed("A", Target::PS, ModelKind::Lstm));
        assert_ne!(a, c.job_seed("A", Target::T2M, ModelKind::Gru));
    }

    #[test]
    fn flags_win_over_file() {
        let mut c: BenchmarkConfig =
            serde_json::from_str(r#"{"datasets": [{"city": "A", "path": "a"}], "seed": 1}"#).unwrap();
        CliOverrides {
            seed: Some(9),
            models: Some(vec![ModelKind::Kan]),
            epochs: Some(3),
            ..Default::default()
        }
        .apply(&mut c);
        assert_eq!((c.seed, c.models.clone(), c.training.epochs, c.training.patience), (9, vec![ModelKind::Kan], 3, 3));
    }
}
