use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{label_of_max, LabelMap, LayerParams, ModelCheckpoint, NetError};
use crate::stimgen::{Dataset, StimulusImage};

/// Images flattened to network inputs, with their label values.
#[derive(Debug, Clone, Default)]
pub struct LabeledImages {
    pub resolution: usize,
    pub inputs: Vec<Vec<f32>>,
    pub labels: Vec<u32>,
}

impl LabeledImages {
    pub fn from_images<'a>(images: impl IntoIterator<Item = (&'a StimulusImage, u32)>) -> Self {
        let mut out = LabeledImages::default();
        for (img, label) in images {
            out.resolution = img.resolution;
            out.inputs.push(img.to_f32());
            out.labels.push(label);
        }
        out
    }

    /// Numerosity-labelled inputs in dataset order.
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::from_images(ds.samples.iter().map(|s| (&s.image, s.numerosity.value())))
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// The learning rate halves after every this many epochs (0 disables).
    pub halve_every: usize,
    /// L2 penalty on weights (not biases).
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 60,
            halve_every: 20,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let halvings = epoch.checked_div(self.halve_every).unwrap_or(0);
        self.learning_rate * 0.5f64.powi(halvings as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Running accuracy over the epoch's mini-batches.
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
    /// Accuracy of the final weights over the whole training set.
    pub final_train_accuracy: f64,
}

fn targets(labels: &LabelMap, data: &LabeledImages) -> Result<Vec<usize>, NetError> {
    data.labels
        .iter()
        .map(|&v| {
            labels
                .index_of(v)
                .ok_or_else(|| NetError::InvalidArgument(format!("label {v} is not in the {} label set", labels.task)))
        })
        .collect()
}

/// Fraction of `data` the model labels correctly.
pub(crate) fn accuracy(model: &ModelCheckpoint, data: &LabeledImages) -> f64 {
    use rayon::prelude::*;
    if data.is_empty() {
        return 0.0;
    }
    let correct: usize = data
        .inputs
        .par_iter()
        .zip(&data.labels)
        .map(|(x, &y)| usize::from(label_of_max(&model.labels, &model.net.probabilities(x)) == y))
        .sum();
    correct as f64 / data.len() as f64
}

/// Mini-batch SGD with momentum on the cross-entropy loss.
///
/// The example order of every epoch is a shuffle drawn from `hyper.seed`, so
/// the result is a pure function of `(model, data, hyper)`. `on_epoch` sees
/// each record as soon as the epoch ends.
pub fn train(
    model: &ModelCheckpoint,
    data: &LabeledImages,
    hyper: &TrainHyper,
    eval: Option<&LabeledImages>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingOutcome, NetError> {
    if data.is_empty() {
        return Err(NetError::InvalidArgument("empty training set".into()));
    }
    if hyper.batch_size == 0 || hyper.batch_size > data.len() {
        return Err(NetError::InvalidArgument(format!(
            "batch size {} must be in 1..={}",
            hyper.batch_size,
            data.len()
        )));
    }
    if !(hyper.learning_rate > 0.0) || !(0.0..1.0).contains(&hyper.momentum) || !(hyper.weight_decay >= 0.0) {
        return Err(NetError::InvalidArgument("need learning_rate > 0, 0 <= momentum < 1, weight_decay >= 0".into()));
    }
    let expected = model.net.input_len();
    if let Some(bad) = data.inputs.iter().find(|x| x.len() != expected) {
        return Err(NetError::ShapeMismatch {
            expected: format!("{expected} input values"),
            got: format!("{}", bad.len()),
        });
    }
    let ys = targets(&model.labels, data)?;
    if let Some(e) = eval {
        targets(&model.labels, e)?;
    }

    let mut model = model.clone();
    let mut velocity: Vec<LayerParams<f32>> = model.net.zero_grads();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let lr = hyper.rate_at(epoch) as f32;
        let mu = hyper.momentum as f32;
        let wd = hyper.weight_decay as f32;
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            let xs: Vec<&[f32]> = batch.iter().map(|&i| data.inputs[i].as_slice()).collect();
            let ts: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let (grads, loss, c) = model.net.batch_gradient(&xs, &ts);
            if !loss.is_finite() {
                return Err(NetError::Divergence {
                    epoch,
                    loss: loss as f64,
                });
            }
            loss_sum += loss as f64;
            correct += c;
            let scale = 1.0 / batch.len() as f32;
            for ((p, g), v) in model.net.params.iter_mut().zip(&grads).zip(&mut velocity) {
                for ((w, &gw), vw) in p.weights.iter_mut().zip(&g.weights).zip(&mut v.weights) {
                    *vw = mu * *vw + gw * scale + wd * *w;
                    *w -= lr * *vw;
                }
                for ((b, &gb), vb) in p.biases.iter_mut().zip(&g.biases).zip(&mut v.biases) {
                    *vb = mu * *vb + gb * scale;
                    *b -= lr * *vb;
                }
            }
        }
        let train_loss = loss_sum / data.len() as f64;
        let finite = model
            .net
            .params
            .iter()
            .all(|p| p.weights.iter().chain(&p.biases).all(|v| v.is_finite()));
        if !train_loss.is_finite() || !finite {
            return Err(NetError::Divergence { epoch, loss: train_loss });
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_acc: correct as f64 / data.len() as f64,
            eval_acc: eval.map(|e| accuracy(&model, e)),
        };
        on_epoch(&record);
        history.push(record);
    }

    let final_train_accuracy = accuracy(&model, data);
    model.meta.epochs += hyper.epochs as u32;
    model.meta.losses.extend(history.iter().map(|r| r.train_loss));
    model.meta.final_train_accuracy = Some(final_train_accuracy);
    Ok(TrainingOutcome {
        model,
        history,
        final_train_accuracy,
    })
}

/// Trains on the shape-recognition proxy task. The model's label set must
/// be the proxy classes.
pub fn train_recognition_proxy(
    model: &ModelCheckpoint,
    proxy: &LabeledImages,
    hyper: &TrainHyper,
) -> Result<TrainingOutcome, NetError> {
    if model.labels.task == LabelMap::numerosity().task {
        return Err(NetError::InvalidArgument("proxy training needs non-numerosity labels".into()));
    }
    train(model, proxy, hyper, None, |_| {})
}

/// CSV with columns epoch, train_loss, train_acc, eval_acc (blank if absent).
pub fn write_training_log(history: &[EpochRecord], path: &Path) -> Result<(), NetError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,train_loss,train_acc,eval_acc")?;
    for r in history {
        let eval = r.eval_acc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(f, "{},{},{},{}", r.epoch, r.train_loss, r.train_acc, eval)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init, ArchitectureSpec, InitScheme, LayerSpec};
    use crate::stimgen::{gen_dataset, GenerationParams};

    fn tiny_arch(res: usize, classes: usize) -> ArchitectureSpec {
        ArchitectureSpec {
            input_resolution: res,
            layers: vec![
                LayerSpec::Conv {
                    kernel: 3,
                    channels: 4,
                    stride: 1,
                },
                LayerSpec::ReLU,
                LayerSpec::MaxPool { window: 4 },
                LayerSpec::Conv {
                    kernel: 3,
                    channels: 8,
                    stride: 1,
                },
                LayerSpec::ReLU,
                LayerSpec::MaxPool { window: 2 },
                LayerSpec::FullyConnected { out_dim: classes },
                LayerSpec::Softmax,
            ],
            final_conv_index: 3,
        }
    }

    fn ten_images() -> LabeledImages {
        let params = GenerationParams {
            resolution: 32,
            ..GenerationParams::default()
        };
        let ds = gen_dataset(1, &params, 5).unwrap();
        // ten distinct numerosities from the standard set
        LabeledImages::from_images(ds.samples.iter().take(10).map(|s| (&s.image, s.numerosity.value())))
    }

    #[test]
    fn memorizes_ten_images() {
        let data = ten_images();
        let m = init(tiny_arch(32, 16), LabelMap::numerosity(), InitScheme::Normal { mean: 0.0, std: 0.1 }, 3).unwrap();
        let hyper = TrainHyper {
            epochs: 200,
            batch_size: 5,
            learning_rate: 0.02,
            seed: 1,
            ..TrainHyper::default()
        };
        let out = train(&m, &data, &hyper, None, |_| {}).unwrap();
        assert_eq!(out.final_train_accuracy, 1.0);
        assert_eq!(out.history.len(), 200);
        assert!(out.history[199].train_loss < out.history[0].train_loss);
        assert_eq!(out.model.meta.epochs, 200);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = ten_images();
        let m = init(tiny_arch(32, 16), LabelMap::numerosity(), InitScheme::UniformRange { lo: -0.1, hi: 0.1 }, 3).unwrap();
        let hyper = TrainHyper {
            epochs: 3,
            batch_size: 4,
            seed: 9,
            ..TrainHyper::default()
        };
        let a = train(&m, &data, &hyper, None, |_| {}).unwrap();
        let b = train(&m, &data, &hyper, None, |_| {}).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.model.weight_distance(&m) > 0.0);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let data = ten_images();
        // without ReLUs nothing saturates, so the weights blow up
        let arch = ArchitectureSpec {
            input_resolution: 32,
            layers: vec![
                LayerSpec::Conv {
                    kernel: 3,
                    channels: 2,
                    stride: 2,
                },
                LayerSpec::Conv {
                    kernel: 3,
                    channels: 2,
                    stride: 2,
                },
                LayerSpec::FullyConnected { out_dim: 16 },
                LayerSpec::Softmax,
            ],
            final_conv_index: 1,
        };
        let m = init(arch, LabelMap::numerosity(), InitScheme::UniformRange { lo: -0.1, hi: 0.1 }, 3).unwrap();
        let hyper = TrainHyper {
            epochs: 50,
            batch_size: 2,
            learning_rate: 1e8,
            ..TrainHyper::default()
        };
        assert!(matches!(train(&m, &data, &hyper, None, |_| {}), Err(NetError::Divergence { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = ten_images();
        let m = init(tiny_arch(32, 16), LabelMap::numerosity(), InitScheme::UniformRange { lo: -0.1, hi: 0.1 }, 3).unwrap();
        let big = TrainHyper {
            batch_size: 11,
            ..TrainHyper::default()
        };
        assert!(train(&m, &data, &big, None, |_| {}).is_err());
        let mut wrong = data.clone();
        wrong.labels[0] = 3;
        assert!(train(&m, &wrong, &TrainHyper::default(), None, |_| {}).is_err());
    }

    #[test]
    fn learning_rate_halves_on_schedule() {
        let h = TrainHyper::default();
        assert_eq!(h.rate_at(0), 0.01);
        assert_eq!(h.rate_at(19), 0.01);
        assert_eq!(h.rate_at(20), 0.005);
        assert_eq!(h.rate_at(45), 0.0025);
    }

    #[test]
    fn log_has_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        let h = [
            EpochRecord {
                epoch: 1,
                train_loss: 2.5,
                train_acc: 0.1,
                eval_acc: None,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 2.0,
                train_acc: 0.3,
                eval_acc: Some(0.25),
            },
        ];
        write_training_log(&h, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,train_acc,eval_acc");
        assert_eq!(lines[1], "1,2.5,0.1,");
        assert_eq!(lines[2], "2,2,0.3,0.25");
    }
}
