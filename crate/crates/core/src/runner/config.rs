use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Recipe, RunError};
use crate::net::{ArchitectureSpec, InitScheme, TrainHyper};
use crate::stimgen::{mix, GenerationParams};

/// One seed per randomized step. TOML integers are signed 64-bit, so
/// derived seeds stay below 2^63.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Exported stimulus set.
    pub stimuli: u64,
    pub train_data: u64,
    pub test_data: u64,
    pub ood_data: u64,
    pub proxy_data: u64,
    /// Weight initialization.
    pub init: u64,
    /// Mini-batch order.
    pub shuffle: u64,
    /// Stimuli presented while probing units.
    pub probe: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        let s = |tag: u64| mix(mix(master) ^ tag) >> 1;
        Seeds {
            stimuli: s(1),
            train_data: s(2),
            test_data: s(3),
            ood_data: s(4),
            proxy_data: s(5),
            init: s(6),
            shuffle: s(7),
            probe: s(8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSizes {
    /// Images per (set, numerosity) cell written by `gen-stimuli`.
    pub export_per_cell: usize,
    pub train_per_cell: usize,
    pub test_per_cell: usize,
    pub proxy_per_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub halve_every: usize,
    pub weight_decay: f64,
}

impl TrainSettings {
    pub fn hyper(&self, seed: u64) -> TrainHyper {
        TrainHyper {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            halve_every: self.halve_every,
            weight_decay: self.weight_decay,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    /// Per-cell sample size of the single-point `probe` recipe.
    pub s: usize,
    /// Sample sizes visited by sweeps.
    pub s_values: Vec<usize>,
    pub alpha: f64,
    /// Coverage of the estimation interval.
    pub coverage: f64,
    /// Object-size variation of the probing stimuli in `probe` and `sweep`.
    pub variation_scale: f64,
}

/// Everything a run needs. Every key is always present once loaded; defaults
/// are filled in before the run and recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub recipe: Recipe,
    /// Master seed the `seeds` table was derived from.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Checkpoint to probe or evaluate; empty means a fresh model from
    /// `init` and `seeds.init`.
    pub model: String,
    /// Run directories summarized by `report`.
    pub runs: Vec<PathBuf>,
    /// Object-size variation of the shifted test distribution.
    pub ood_variation_scale: f64,
    pub seeds: Seeds,
    pub stimulus: GenerationParams,
    pub data: DataSizes,
    pub architecture: ArchitectureSpec,
    pub init: InitScheme,
    pub train: TrainSettings,
    pub probe: ProbeSettings,
}

impl ExperimentConfig {
    pub fn default_for(recipe: Recipe) -> Self {
        let stimulus = GenerationParams::default();
        let trains = matches!(recipe, Recipe::TrainNuNet | Recipe::TrainProxy);
        let counts = matches!(recipe, Recipe::TrainNuNet | Recipe::Generalize);
        ExperimentConfig {
            recipe,
            seed: 0,
            out_dir: PathBuf::from("runs").join(recipe.name()),
            model: String::new(),
            runs: Vec::new(),
            ood_variation_scale: 1.5,
            seeds: Seeds::derive(0),
            architecture: if counts {
                ArchitectureSpec::stride_pyramid(stimulus.resolution, 16)
            } else {
                ArchitectureSpec::desk_scale(stimulus.resolution, 16)
            },
            stimulus,
            data: DataSizes {
                export_per_cell: 10,
                train_per_cell: 200,
                test_per_cell: 100,
                proxy_per_class: 200,
            },
            init: if trains {
                InitScheme::HeNormal
            } else {
                InitScheme::UniformRange { lo: -0.1, hi: 0.1 }
            },
            train: TrainSettings {
                learning_rate: 0.01,
                momentum: 0.9,
                batch_size: 32,
                epochs: if counts { 48 } else { 60 },
                halve_every: if counts { 12 } else { 20 },
                weight_decay: 0.0,
            },
            probe: ProbeSettings {
                s: 7,
                s_values: vec![5, 7, 10, 20, 30, 50, 80, 100],
                alpha: 0.01,
                coverage: 0.85,
                variation_scale: 1.0,
            },
        }
    }

    pub fn to_toml(&self) -> Result<String, RunError> {
        toml::to_string(self).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        self.stimulus.validate().map_err(|e| RunError::Config(format!("stimulus: {e}")))?;
        let mut ood = self.stimulus.clone();
        ood.variation_scale = self.ood_variation_scale;
        ood.validate().map_err(|e| RunError::Config(format!("ood_variation_scale: {e}")))?;
        let mut probe = self.stimulus.clone();
        probe.variation_scale = self.probe.variation_scale;
        probe.validate().map_err(|e| RunError::Config(format!("probe.variation_scale: {e}")))?;
        self.architecture
            .validate()
            .map_err(|e| RunError::Config(format!("architecture: {e}")))?;
        if self.architecture.input_resolution != self.stimulus.resolution {
            return bad(format!(
                "architecture.input_resolution {} differs from stimulus.resolution {}",
                self.architecture.input_resolution, self.stimulus.resolution
            ));
        }
        self.init.validate().map_err(|e| RunError::Config(format!("init: {e}")))?;
        let d = &self.data;
        if d.export_per_cell == 0 || d.train_per_cell == 0 || d.proxy_per_class == 0 {
            return bad("data sizes must be positive".into());
        }
        // Perceived distributions need enough images per presented level.
        if d.test_per_cell * 3 < crate::probe::MIN_DISTRIBUTION_SAMPLES {
            return bad(format!(
                "data.test_per_cell must be at least {}",
                crate::probe::MIN_DISTRIBUTION_SAMPLES.div_ceil(3)
            ));
        }
        let t = &self.train;
        if !(t.learning_rate > 0.0) || !(0.0..1.0).contains(&t.momentum) || !(t.weight_decay >= 0.0) || t.batch_size == 0 {
            return bad("train: need learning_rate > 0, 0 <= momentum < 1, weight_decay >= 0, batch_size > 0".into());
        }
        let p = &self.probe;
        if p.s < 2 || p.s_values.is_empty() || p.s_values.iter().any(|&s| s < 2) {
            return bad("probe sample sizes must be at least 2".into());
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) || !(p.coverage > 0.0 && p.coverage < 1.0) {
            return bad("probe.alpha and probe.coverage must be in (0, 1)".into());
        }
        if self.recipe == Recipe::Generalize && self.model.is_empty() {
            return bad("generalize needs a model checkpoint".into());
        }
        Ok(())
    }
}

/// How a config is assembled: recipe defaults, then the config file, then
/// `--seed` (which re-derives every seed), then `key=value` overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources<'a> {
    pub file: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out_dir: Option<&'a Path>,
    pub overrides: &'a [String],
}

pub fn load_config(recipe: Recipe, src: &ConfigSources) -> Result<ExperimentConfig, RunError> {
    let cfg_err = |e: &dyn std::fmt::Display| RunError::Config(e.to_string());
    let defaults = ExperimentConfig::default_for(recipe);
    let mut value = toml::Table::try_from(&defaults).map_err(|e| cfg_err(&e))?;

    let mut file_has_seeds = false;
    if let Some(path) = src.file {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let file: toml::Table = text.parse().map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        file_has_seeds = file.contains_key("seeds");
        merge(&mut value, file);
    }
    value.insert("recipe".into(), toml::Value::String(recipe.name().into()));

    let master = match src.seed {
        Some(s) => Some(s),
        None if !file_has_seeds => Some(match value.get("seed") {
            Some(toml::Value::Integer(s)) if *s >= 0 => *s as u64,
            _ => return Err(RunError::Config("seed must be a non-negative integer".into())),
        }),
        None => None,
    };
    if let Some(master) = master {
        let master_i = i64::try_from(master).map_err(|_| RunError::Config(format!("seed {master} exceeds 2^63 - 1")))?;
        value.insert("seed".into(), toml::Value::Integer(master_i));
        let seeds = toml::Value::try_from(Seeds::derive(master)).map_err(|e| cfg_err(&e))?;
        value.insert("seeds".into(), seeds);
    }
    if let Some(out) = src.out_dir {
        value.insert("out_dir".into(), toml::Value::String(out.to_string_lossy().into_owned()));
    }
    for kv in src.overrides {
        apply_override(&mut value, kv)?;
    }
    let config: ExperimentConfig = toml::Value::Table(value).try_into().map_err(|e| cfg_err(&e))?;
    config.validate()?;
    Ok(config)
}

/// Tables merge key by key; anything else replaces the default.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `a.b.c=value`. The key must already exist. The value is parsed as a TOML
/// literal and falls back to a plain string.
pub fn apply_override(root: &mut toml::Table, kv: &str) -> Result<(), RunError> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override `{kv}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut table = root;
    for part in parents {
        table = match table.get_mut(*part) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(RunError::Config(format!("unknown config key `{key}`"))),
        };
    }
    match table.get_mut(*last) {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(RunError::Config(format!("unknown config key `{key}`"))),
    }
}
