//! A small sequential CNN: random initialization, SGD training, inference and
//! probed-layer activations, and a binary checkpoint format.

mod arch;
mod checkpoint;
mod network;
mod scalar;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stimgen::{StimulusImage, LEVELS};

pub use arch::{ArchitectureSpec, LayerSpec, Volume};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{argmax_smallest, ForwardOutput, LayerParams, Network};
pub use scalar::Scalar;
pub use train::{
    train, train_recognition_proxy, write_training_log, EpochRecord, LabeledImages, TrainHyper,
    TrainingOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid init scheme: {0}")]
    InvalidInit(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NetError {
    fn from(e: std::io::Error) -> Self {
        NetError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    UniformRange { lo: f64, hi: f64 },
    /// `std` is the standard deviation.
    Normal { mean: f64, std: f64 },
    /// Zero-mean normal with std `sqrt(2 / fan_in)`, fan-in taken per layer.
    HeNormal,
}

impl InitScheme {
    pub fn validate(&self) -> Result<(), NetError> {
        match *self {
            InitScheme::UniformRange { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(NetError::InvalidInit(format!("uniform range needs lo < hi, got [{lo}, {hi}]")))
            }
            InitScheme::Normal { mean, std } if !(std > 0.0) || !mean.is_finite() || !std.is_finite() => {
                Err(NetError::InvalidInit(format!("normal needs std > 0, got {std}")))
            }
            _ => Ok(()),
        }
    }

    /// `n` i.i.d. draws from the scheme for a layer with the given fan-in.
    pub fn sample(&self, n: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
        match *self {
            InitScheme::UniformRange { lo, hi } => {
                let d = Uniform::new(lo, hi);
                (0..n).map(|_| d.sample(rng) as f32).collect()
            }
            InitScheme::Normal { mean, std } => {
                let d = Normal::new(mean, std).expect("validated");
                (0..n).map(|_| d.sample(rng) as f32).collect()
            }
            InitScheme::HeNormal => {
                let d = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("positive std");
                (0..n).map(|_| d.sample(rng) as f32).collect()
            }
        }
    }
}

/// Ordered class values of a classification head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub task: String,
    pub values: Vec<u32>,
}

impl LabelMap {
    /// The sixteen numerosity labels, ascending.
    pub fn numerosity() -> Self {
        LabelMap {
            task: "numerosity".into(),
            values: LEVELS.to_vec(),
        }
    }

    /// Class indices `0..k` for a task without natural label values.
    pub fn indexed(task: &str, k: usize) -> Self {
        LabelMap {
            task: task.into(),
            values: (0..k as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: u32) -> Option<usize> {
        self.values.iter().position(|&v| v == value)
    }
}

/// What a checkpoint was trained on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: u32,
    pub losses: Vec<f64>,
    pub final_train_accuracy: Option<f64>,
}

/// A network with its label set, seed and training history.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub net: Network<f32>,
    pub labels: LabelMap,
    pub seed: u64,
    pub meta: TrainingMeta,
}

impl ModelCheckpoint {
    pub fn arch(&self) -> &ArchitectureSpec {
        &self.net.arch
    }

    /// Euclidean distance between the parameter vectors of two models of the
    /// same architecture.
    pub fn weight_distance(&self, other: &ModelCheckpoint) -> f64 {
        self.net
            .params
            .iter()
            .zip(&other.net.params)
            .flat_map(|(a, b)| {
                a.weights
                    .iter()
                    .zip(&b.weights)
                    .chain(a.biases.iter().zip(&b.biases))
            })
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn check_image(&self, image: &StimulusImage) -> Result<(), NetError> {
        let want = self.net.arch.input_resolution;
        if image.resolution != want || image.pixels.len() != want * want {
            return Err(NetError::ShapeMismatch {
                expected: format!("{want}x{want}"),
                got: format!("{0}x{0}", image.resolution),
            });
        }
        Ok(())
    }
}

/// Fresh model: weights i.i.d. from `scheme`, biases zero.
pub fn init(
    arch: ArchitectureSpec,
    labels: LabelMap,
    scheme: InitScheme,
    seed: u64,
) -> Result<ModelCheckpoint, NetError> {
    arch.validate()?;
    scheme.validate()?;
    if arch.classes() != labels.len() {
        return Err(NetError::InvalidArchitecture(format!(
            "{} outputs for {} labels",
            arch.classes(),
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f32>::zeros(arch);
    for p in &mut net.params {
        let fan_in = p.weights.len() / p.biases.len().max(1);
        p.weights = scheme.sample(p.weights.len(), fan_in, &mut rng);
    }
    Ok(ModelCheckpoint {
        net,
        labels,
        seed,
        meta: TrainingMeta::default(),
    })
}

/// Class probabilities (in label order) and probed-layer activations.
pub fn forward(model: &ModelCheckpoint, image: &StimulusImage) -> Result<ForwardOutput<f32>, NetError> {
    model.check_image(image)?;
    Ok(model.net.forward(&image.to_f32()))
}

/// Most probable label; ties go to the smaller label value.
pub fn predict(model: &ModelCheckpoint, image: &StimulusImage) -> Result<u32, NetError> {
    model.check_image(image)?;
    let probs = model.net.probabilities(&image.to_f32());
    Ok(label_of_max(&model.labels, &probs))
}

/// Label with the highest probability, ties toward the smaller label value.
pub fn label_of_max(labels: &LabelMap, probs: &[f32]) -> u32 {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] || (probs[i] == probs[best] && labels.values[i] < labels.values[best]) {
            best = i;
        }
    }
    labels.values[best]
}
