//! Experiment orchestration: configs, recipes, run manifests and reports.

mod config;
mod recipes;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::net::NetError;
use crate::probe::ProbeError;
use crate::stimgen::StimError;

pub use config::{apply_override, load_config, ConfigSources, DataSizes, ExperimentConfig, ProbeSettings, Seeds, TrainSettings};
pub use report::{report, REPORT_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Recipe {
    #[serde(rename = "gen-stimuli")]
    GenStimuli,
    #[serde(rename = "train")]
    TrainNuNet,
    #[serde(rename = "train-proxy")]
    TrainProxy,
    #[serde(rename = "probe")]
    Probe,
    #[serde(rename = "sweep")]
    Sweep,
    #[serde(rename = "generalize")]
    Generalize,
    #[serde(rename = "report")]
    Report,
}

impl Recipe {
    pub const ALL: [Recipe; 7] = [
        Recipe::GenStimuli,
        Recipe::TrainNuNet,
        Recipe::TrainProxy,
        Recipe::Probe,
        Recipe::Sweep,
        Recipe::Generalize,
        Recipe::Report,
    ];

    /// CLI subcommand name.
    pub fn name(self) -> &'static str {
        match self {
            Recipe::GenStimuli => "gen-stimuli",
            Recipe::TrainNuNet => "train",
            Recipe::TrainProxy => "train-proxy",
            Recipe::Probe => "probe",
            Recipe::Sweep => "sweep",
            Recipe::Generalize => "generalize",
            Recipe::Report => "report",
        }
    }

    /// CSVs a finished run of this recipe must contain.
    pub fn required_csvs(self) -> &'static [&'static str] {
        match self {
            Recipe::GenStimuli => &["stimuli/manifest.csv"],
            Recipe::TrainNuNet => &["training_log.csv", "accuracy_iid.csv", "summary.csv"],
            Recipe::TrainProxy => &["training_log.csv", "summary.csv"],
            Recipe::Probe => &["selectivity.csv", "tuning.csv", "summary.csv"],
            Recipe::Sweep => &["sweep.csv"],
            Recipe::Generalize => &[
                "accuracy_iid.csv",
                "accuracy_ood.csv",
                "intervals_iid.csv",
                "intervals_ood.csv",
                "sweep_iid.csv",
                "sweep_ood.csv",
                "summary.csv",
            ],
            Recipe::Report => &[],
        }
    }
}

/// A module error tagged with the stage it came from.
#[derive(Debug, Error)]
pub enum ModuleError {
    #[error(transparent)]
    Stim(#[from] StimError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModuleError {
    fn from(e: std::io::Error) -> Self {
        ModuleError::Io(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ModuleError,
    },
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    /// Files read by the run (checkpoints, other runs' outputs).
    pub inputs: Vec<ArtifactRecord>,
    /// Every file the run wrote except the manifest itself.
    pub artifacts: Vec<ArtifactRecord>,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, RunError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|_| RunError::MissingArtifacts(format!("{} has no {MANIFEST_FILE}", run_dir.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::MissingArtifacts(format!("{}: {e}", path.display())))
    }

    pub fn artifact(&self, path: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, std::io::Error> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn record(root: &Path, path: &Path) -> Result<ArtifactRecord, std::io::Error> {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    Ok(ArtifactRecord {
        path: parts.join("/"),
        sha256: sha256_file(path)?,
        bytes: std::fs::metadata(path)?.len(),
    })
}

fn list_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), std::io::Error> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            list_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Per-run state handed to recipes.
pub(crate) struct RunContext<'a> {
    pub config: &'a ExperimentConfig,
    pub out: PathBuf,
    pub inputs: Vec<ArtifactRecord>,
    timings: Vec<StageTiming>,
    progress: &'a mut dyn FnMut(&str),
}

impl RunContext<'_> {
    /// Runs one named stage, timing it and tagging its error.
    pub fn stage<T, E: Into<ModuleError>>(
        &mut self,
        stage: &'static str,
        f: impl FnOnce(&mut Self) -> Result<T, E>,
    ) -> Result<T, RunError> {
        (self.progress)(&format!("[{stage}] start"));
        let t = Instant::now();
        let r = f(self).map_err(|e| RunError::Stage {
            stage,
            source: e.into(),
        });
        let seconds = t.elapsed().as_secs_f64();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        (self.progress)(&format!("[{stage}] done in {seconds:.1}s"));
        r
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn note(&mut self, msg: &str) {
        (self.progress)(msg);
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), RunError> {
        let mut r = record(Path::new(""), path)?;
        r.path = path.to_string_lossy().into_owned();
        self.inputs.push(r);
        Ok(())
    }
}

/// Runs `config.recipe` into `config.out_dir`, which must be absent or
/// empty, and writes the manifest last.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest, RunError> {
    run_with_progress(config, &mut |_| {})
}

/// As [`run`], reporting stage progress as text lines.
pub fn run_with_progress(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<RunManifest, RunError> {
    config.validate()?;
    let out = config.out_dir.clone();
    if out.exists() && std::fs::read_dir(&out)?.next().is_some() {
        return Err(RunError::Config(format!("output directory {} is not empty", out.display())));
    }
    std::fs::create_dir_all(&out)?;
    let mut ctx = RunContext {
        config,
        out: out.clone(),
        inputs: Vec::new(),
        timings: Vec::new(),
        progress,
    };
    std::fs::write(ctx.path("config.toml"), config.to_toml()?)?;
    match config.recipe {
        Recipe::GenStimuli => recipes::gen_stimuli(&mut ctx)?,
        Recipe::TrainNuNet => recipes::train_nu_net(&mut ctx)?,
        Recipe::TrainProxy => recipes::train_proxy(&mut ctx)?,
        Recipe::Probe => recipes::probe(&mut ctx)?,
        Recipe::Sweep => recipes::sweep(&mut ctx)?,
        Recipe::Generalize => recipes::generalize(&mut ctx)?,
        Recipe::Report => report::report_into(&mut ctx)?,
    }

    let mut files = Vec::new();
    list_files(&out, &mut files)?;
    files.sort();
    let artifacts = files
        .iter()
        .filter(|p| p.as_path() != out.join(MANIFEST_FILE))
        .map(|p| record(&out, p))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: config.clone(),
        inputs: ctx.inputs,
        artifacts,
        timings: ctx.timings,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    std::fs::write(out.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_names_round_trip_through_serde() {
        for r in Recipe::ALL {
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(json, format!("\"{}\"", r.name()));
            assert_eq!(serde_json::from_str::<Recipe>(&json).unwrap(), r);
        }
    }

    #[test]
    fn refuses_non_empty_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "1").unwrap();
        let mut c = ExperimentConfig::default_for(Recipe::GenStimuli);
        c.out_dir = dir.path().to_path_buf();
        assert!(matches!(run(&c), Err(RunError::Config(m)) if m.contains("not empty")));
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default_for(Recipe::Probe);
        c.out_dir = dir.path().join("run");
        c.model = dir.path().join("missing.ckpt").to_string_lossy().into_owned();
        let err = run(&c).unwrap_err();
        assert!(matches!(err, RunError::Stage { stage: "load-model", source: ModuleError::Net(_) }), "{err}");
        assert!(err.to_string().contains("load-model"));
    }
}
