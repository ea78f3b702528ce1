use serde::{Deserialize, Serialize};

use super::NetError;

/// One layer of a sequential network. Convolutions use "same" padding
/// (`kernel / 2` on each side) and a single-channel input feeds the first
/// layer. Pooling windows are non-overlapping; trailing rows and columns that
/// do not fill a window are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        channels: usize,
        stride: usize,
    },
    MaxPool {
        window: usize,
    },
    #[serde(rename = "relu")]
    ReLU,
    FullyConnected {
        out_dim: usize,
    },
    Softmax,
}

/// Activation volume `channels × height × width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Volume {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Volume {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_resolution: usize,
    pub layers: Vec<LayerSpec>,
    /// Index into `layers` of the probed convolution. Probed activations are
    /// that layer's own outputs, before any ReLU that follows it.
    pub final_conv_index: usize,
}

impl ArchitectureSpec {
    /// Desk-scale network: four 3×3 convolutions (16, 32, 32, 64 channels),
    /// max-pooling after the first three and after the probed fourth, one
    /// fully-connected layer. At 64×64 input the probed layer has
    /// 8 × 8 × 64 = 4096 units.
    pub fn desk_scale(input_resolution: usize, classes: usize) -> Self {
        use LayerSpec::*;
        let conv = |channels| Conv {
            kernel: 3,
            channels,
            stride: 1,
        };
        ArchitectureSpec {
            input_resolution,
            layers: vec![
                conv(16),
                ReLU,
                MaxPool { window: 2 },
                conv(32),
                ReLU,
                MaxPool { window: 2 },
                conv(32),
                ReLU,
                MaxPool { window: 2 },
                conv(64),
                ReLU,
                MaxPool { window: 2 },
                FullyConnected { out_dim: classes },
                Softmax,
            ],
            final_conv_index: 9,
        }
    }

    /// Counting network: one stride-1 3×3 convolution with 8 channels, then
    /// stride-2 3×3 convolutions with 16 channels halving the map until the
    /// last one, with 64 channels, lands on 1×1. No pooling; the probed layer
    /// is that last convolution (64 units).
    pub fn stride_pyramid(input_resolution: usize, classes: usize) -> Self {
        use LayerSpec::*;
        let mut layers = vec![
            Conv {
                kernel: 3,
                channels: 8,
                stride: 1,
            },
            ReLU,
        ];
        let mut side = input_resolution;
        let mut final_conv_index = 0;
        while side > 1 {
            side = side.div_ceil(2);
            final_conv_index = layers.len();
            layers.push(Conv {
                kernel: 3,
                channels: if side == 1 { 64 } else { 16 },
                stride: 2,
            });
            layers.push(ReLU);
        }
        layers.push(FullyConnected { out_dim: classes });
        layers.push(Softmax);
        ArchitectureSpec {
            input_resolution,
            layers,
            final_conv_index,
        }
    }

    /// Eight convolutions, five max-pooling layers and one fully-connected
    /// layer at 224×224 input; the probed (eighth) convolution is
    /// 14 × 14 × 192 = 37632 units.
    pub fn full_scale(classes: usize) -> Self {
        use LayerSpec::*;
        let conv = |channels| Conv {
            kernel: 3,
            channels,
            stride: 1,
        };
        let pool = MaxPool { window: 2 };
        ArchitectureSpec {
            input_resolution: 224,
            layers: vec![
                conv(64),
                ReLU,
                pool,
                conv(128),
                ReLU,
                pool,
                conv(256),
                ReLU,
                conv(256),
                ReLU,
                pool,
                conv(256),
                ReLU,
                conv(256),
                ReLU,
                pool,
                conv(192),
                ReLU,
                conv(192),
                ReLU,
                pool,
                FullyConnected { out_dim: classes },
                Softmax,
            ],
            final_conv_index: 18,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidArchitecture(m));
        let n = self.layers.len();
        if n < 2
            || !matches!(self.layers[n - 2], LayerSpec::FullyConnected { .. })
            || self.layers[n - 1] != LayerSpec::Softmax
        {
            return bad("network must end with FullyConnected then Softmax".into());
        }
        if !matches!(self.layers.get(self.final_conv_index), Some(LayerSpec::Conv { .. })) {
            return bad(format!("final_conv_index {} is not a Conv layer", self.final_conv_index));
        }
        if self.layers[..n - 1].contains(&LayerSpec::Softmax) {
            return bad("Softmax may only appear last".into());
        }
        let mut seen_fc = false;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    kernel,
                    channels,
                    stride,
                } => {
                    if seen_fc {
                        return bad(format!("layer {i}: Conv after FullyConnected"));
                    }
                    if kernel == 0 || kernel % 2 == 0 || channels == 0 || stride == 0 {
                        return bad(format!("layer {i}: kernel must be odd, channels and stride positive"));
                    }
                }
                LayerSpec::MaxPool { window } => {
                    if seen_fc {
                        return bad(format!("layer {i}: MaxPool after FullyConnected"));
                    }
                    if window == 0 {
                        return bad(format!("layer {i}: zero pooling window"));
                    }
                }
                LayerSpec::FullyConnected { out_dim } => {
                    seen_fc = true;
                    if out_dim == 0 {
                        return bad(format!("layer {i}: zero output dimension"));
                    }
                }
                LayerSpec::ReLU | LayerSpec::Softmax => {}
            }
        }
        if self.input_resolution == 0 {
            return bad("zero input resolution".into());
        }
        if self.volumes().iter().any(Volume::is_empty) {
            return bad("a layer output collapses to zero size".into());
        }
        Ok(())
    }

    pub fn input_volume(&self) -> Volume {
        Volume {
            channels: 1,
            height: self.input_resolution,
            width: self.input_resolution,
        }
    }

    /// Output volume of every layer, in order.
    pub fn volumes(&self) -> Vec<Volume> {
        let mut v = self.input_volume();
        self.layers
            .iter()
            .map(|layer| {
                v = match *layer {
                    LayerSpec::Conv {
                        kernel,
                        channels,
                        stride,
                    } => {
                        let pad = kernel / 2;
                        let out = |d: usize| (d + 2 * pad).saturating_sub(kernel) / stride + 1;
                        Volume {
                            channels,
                            height: out(v.height),
                            width: out(v.width),
                        }
                    }
                    LayerSpec::MaxPool { window } => Volume {
                        channels: v.channels,
                        height: v.height / window,
                        width: v.width / window,
                    },
                    LayerSpec::FullyConnected { out_dim } => Volume {
                        channels: out_dim,
                        height: 1,
                        width: 1,
                    },
                    LayerSpec::ReLU | LayerSpec::Softmax => v,
                };
                v
            })
            .collect()
    }

    /// `(weight_len, bias_len)` for every layer; zeros for parameter-free
    /// layers.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut inputs = vec![self.input_volume()];
        inputs.extend(self.volumes());
        self.layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match *layer {
                LayerSpec::Conv {
                    kernel, channels, ..
                } => (channels * inputs[i].channels * kernel * kernel, channels),
                LayerSpec::FullyConnected { out_dim } => (out_dim * inputs[i].len(), out_dim),
                _ => (0, 0),
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().iter().map(|(w, b)| w + b).sum()
    }

    pub fn classes(&self) -> usize {
        match self.layers[self.layers.len() - 2] {
            LayerSpec::FullyConnected { out_dim } => out_dim,
            _ => 0,
        }
    }

    /// Same network with the classifier head resized to `classes` outputs.
    pub fn with_classes(&self, classes: usize) -> Self {
        let mut out = self.clone();
        let n = out.layers.len();
        if let Some(LayerSpec::FullyConnected { out_dim }) = out.layers.get_mut(n.wrapping_sub(2)) {
            *out_dim = classes;
        }
        out
    }

    /// Layer whose output is recorded as the probed activation.
    pub fn probe_layer(&self) -> usize {
        self.final_conv_index
    }

    /// Number of probed units: channels × height × width of the final conv.
    pub fn final_conv_units(&self) -> usize {
        self.volumes()[self.final_conv_index].len()
    }
}
