use rayon::prelude::*;

use super::arch::{ArchitectureSpec, LayerSpec, Volume};
use super::scalar::{gemm, Mat, Scalar};

/// Weights and biases of one layer; both empty for parameter-free layers.
/// Conv weights are `out × (in·k·k)`, FC weights are `out × in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: ArchitectureSpec,
    pub params: Vec<LayerParams<T>>,
    volumes: Vec<Volume>,
}

/// Per-example forward state kept for the backward pass.
struct Trace<T> {
    /// `outputs[i]` is the output of layer `i`; the input image is separate.
    outputs: Vec<Vec<T>>,
    /// im2col buffers for conv layers, argmax indices for pooling layers.
    cols: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
}

/// Output of a forward pass on one example.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub probabilities: Vec<T>,
    pub activations: Vec<T>,
}

fn im2col<T: Scalar>(x: &[T], v: Volume, kernel: usize, stride: usize, out: Volume, cols: &mut Vec<T>) {
    let pad = kernel / 2;
    let n = out.height * out.width;
    cols.clear();
    cols.resize(v.channels * kernel * kernel * n, T::zero());
    for c in 0..v.channels {
        let plane = &x[c * v.height * v.width..(c + 1) * v.height * v.width];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = &mut cols[((c * kernel + ky) * kernel + kx) * n..][..n];
                for oy in 0..out.height {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= v.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * v.width..][..v.width];
                    let dst = &mut row[oy * out.width..][..out.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < v.width as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], v: Volume, kernel: usize, stride: usize, out: Volume, dx: &mut [T]) {
    let pad = kernel / 2;
    let n = out.height * out.width;
    dx.iter_mut().for_each(|d| *d = T::zero());
    for c in 0..v.channels {
        let plane = &mut dx[c * v.height * v.width..(c + 1) * v.height * v.width];
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = &cols[((c * kernel + ky) * kernel + kx) * n..][..n];
                for oy in 0..out.height {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= v.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * v.width..][..v.width];
                    let src = &row[oy * out.width..][..out.width];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < v.width as isize {
                            dst[ix as usize] = dst[ix as usize] + s;
                        }
                    }
                }
            }
        }
    }
}

fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in z.iter_mut() {
        *v = *v / sum;
    }
}

impl<T: Scalar> Network<T> {
    /// All-zero parameters for `arch`, which must already be valid.
    pub fn zeros(arch: ArchitectureSpec) -> Self {
        let params = arch
            .param_shapes()
            .into_iter()
            .map(|(w, b)| LayerParams {
                weights: vec![T::zero(); w],
                biases: vec![T::zero(); b],
            })
            .collect();
        let volumes = arch.volumes();
        Network {
            arch,
            params,
            volumes,
        }
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_volume().len()
    }

    fn input_volume(&self, layer: usize) -> Volume {
        if layer == 0 {
            self.arch.input_volume()
        } else {
            self.volumes[layer - 1]
        }
    }

    fn run(&self, input: &[T], keep: bool) -> Trace<T> {
        assert_eq!(input.len(), self.input_len(), "input length");
        let layers = self.arch.layers.len();
        let mut trace = Trace {
            outputs: Vec::with_capacity(layers),
            cols: vec![Vec::new(); layers],
            argmax: vec![Vec::new(); layers],
        };
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let x: &[T] = if i == 0 { input } else { &trace.outputs[i - 1] };
            let vin = self.input_volume(i);
            let vout = self.volumes[i];
            let p = &self.params[i];
            let y = match *layer {
                LayerSpec::Conv {
                    kernel, stride, ..
                } => {
                    let n = vout.height * vout.width;
                    let k = vin.channels * kernel * kernel;
                    let mut y = Vec::with_capacity(vout.len());
                    for &b in &p.biases {
                        y.extend(std::iter::repeat_n(b, n));
                    }
                    let mut cols = Vec::new();
                    im2col(x, vin, kernel, stride, vout, &mut cols);
                    gemm(vout.channels, k, n, Mat::n(&p.weights), Mat::n(&cols), T::one(), &mut y);
                    if keep {
                        trace.cols[i] = cols;
                    }
                    y
                }
                LayerSpec::MaxPool { window } => {
                    let mut y = vec![T::zero(); vout.len()];
                    let mut arg = vec![0u32; vout.len()];
                    for c in 0..vout.channels {
                        for oy in 0..vout.height {
                            for ox in 0..vout.width {
                                let mut best = T::neg_infinity();
                                let mut at = 0usize;
                                for dy in 0..window {
                                    for dx in 0..window {
                                        let idx = (c * vin.height + oy * window + dy) * vin.width + ox * window + dx;
                                        if x[idx] > best {
                                            best = x[idx];
                                            at = idx;
                                        }
                                    }
                                }
                                let o = (c * vout.height + oy) * vout.width + ox;
                                y[o] = best;
                                arg[o] = at as u32;
                            }
                        }
                    }
                    if keep {
                        trace.argmax[i] = arg;
                    }
                    y
                }
                LayerSpec::ReLU => x.iter().map(|&v| v.max(T::zero())).collect(),
                LayerSpec::FullyConnected { out_dim } => {
                    let mut y = p.biases.clone();
                    gemm(out_dim, x.len(), 1, Mat::n(&p.weights), Mat::n(x), T::one(), &mut y);
                    y
                }
                LayerSpec::Softmax => {
                    let mut y = x.to_vec();
                    softmax_in_place(&mut y);
                    y
                }
            };
            trace.outputs.push(y);
        }
        trace
    }

    /// Class probabilities and probed-layer activations for one image.
    pub fn forward(&self, input: &[T]) -> ForwardOutput<T> {
        let mut trace = self.run(input, false);
        let probe = self.arch.probe_layer();
        ForwardOutput {
            activations: std::mem::take(&mut trace.outputs[probe]),
            probabilities: trace.outputs.pop().unwrap_or_default(),
        }
    }

    /// Class probabilities only.
    pub fn probabilities(&self, input: &[T]) -> Vec<T> {
        self.run(input, false).outputs.pop().unwrap_or_default()
    }

    /// Cross-entropy loss of one example and its gradient, accumulated into
    /// `grads` (same layout as `params`). Returns `(loss, predicted class)`.
    pub fn backprop(&self, input: &[T], target: usize, grads: &mut [LayerParams<T>]) -> (T, usize) {
        let trace = self.run(input, true);
        let layers = self.arch.layers.len();
        let probs = &trace.outputs[layers - 1];
        // log-softmax from the logits keeps the loss finite for finite weights
        let logits = &trace.outputs[layers - 2];
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = logits.iter().fold(T::zero(), |a, &z| a + (z - max).exp()).ln();
        let loss = lse - (logits[target] - max);
        let predicted = argmax_smallest(probs);

        // softmax + cross-entropy: d logits = p - onehot
        let mut delta: Vec<T> = probs.clone();
        delta[target] = delta[target] - T::one();

        for i in (0..layers - 1).rev() {
            let x: &[T] = if i == 0 { input } else { &trace.outputs[i - 1] };
            let vin = self.input_volume(i);
            let vout = self.volumes[i];
            let p = &self.params[i];
            let g = &mut grads[i];
            delta = match self.arch.layers[i] {
                LayerSpec::Conv {
                    kernel, stride, ..
                } => {
                    let n = vout.height * vout.width;
                    let k = vin.channels * kernel * kernel;
                    for (c, gb) in g.biases.iter_mut().enumerate() {
                        *gb = delta[c * n..(c + 1) * n].iter().fold(*gb, |a, &d| a + d);
                    }
                    gemm(vout.channels, n, k, Mat::n(&delta), Mat::t(&trace.cols[i]), T::one(), &mut g.weights);
                    if i == 0 {
                        Vec::new()
                    } else {
                        let mut dcols = vec![T::zero(); k * n];
                        gemm(k, vout.channels, n, Mat::t(&p.weights), Mat::n(&delta), T::zero(), &mut dcols);
                        let mut dx = vec![T::zero(); vin.len()];
                        col2im(&dcols, vin, kernel, stride, vout, &mut dx);
                        dx
                    }
                }
                LayerSpec::MaxPool { .. } => {
                    let mut dx = vec![T::zero(); vin.len()];
                    for (&at, &d) in trace.argmax[i].iter().zip(&delta) {
                        dx[at as usize] = dx[at as usize] + d;
                    }
                    dx
                }
                LayerSpec::ReLU => delta
                    .iter()
                    .zip(&trace.outputs[i])
                    .map(|(&d, &y)| if y > T::zero() { d } else { T::zero() })
                    .collect(),
                LayerSpec::FullyConnected { out_dim } => {
                    for (gb, &d) in g.biases.iter_mut().zip(&delta) {
                        *gb = *gb + d;
                    }
                    gemm(out_dim, 1, x.len(), Mat::n(&delta), Mat::n(x), T::one(), &mut g.weights);
                    if i == 0 {
                        Vec::new()
                    } else {
                        let mut dx = vec![T::zero(); x.len()];
                        gemm(x.len(), out_dim, 1, Mat::t(&p.weights), Mat::n(&delta), T::zero(), &mut dx);
                        dx
                    }
                }
                LayerSpec::Softmax => unreachable!("softmax is validated to be last"),
            };
        }
        (loss, predicted)
    }

    /// Zeroed gradient buffers shaped like `params`.
    pub fn zero_grads(&self) -> Vec<LayerParams<T>> {
        self.params
            .iter()
            .map(|p| LayerParams {
                weights: vec![T::zero(); p.weights.len()],
                biases: vec![T::zero(); p.biases.len()],
            })
            .collect()
    }

    /// Summed loss gradient over a batch. Examples are split into fixed chunks
    /// that run in parallel; chunk results are added in chunk order, so the
    /// result does not depend on the thread count.
    pub fn batch_gradient(&self, inputs: &[&[T]], targets: &[usize]) -> (Vec<LayerParams<T>>, T, usize) {
        const CHUNK: usize = 8;
        let parts: Vec<_> = inputs
            .par_chunks(CHUNK)
            .zip(targets.par_chunks(CHUNK))
            .map(|(xs, ts)| {
                let mut g = self.zero_grads();
                let mut loss = T::zero();
                let mut correct = 0;
                for (x, &t) in xs.iter().zip(ts) {
                    let (l, pred) = self.backprop(x, t, &mut g);
                    loss = loss + l;
                    correct += usize::from(pred == t);
                }
                (g, loss, correct)
            })
            .collect();
        let mut iter = parts.into_iter();
        let (mut total, mut loss, mut correct) = iter.next().unwrap_or_else(|| (self.zero_grads(), T::zero(), 0));
        for (g, l, c) in iter {
            for (acc, part) in total.iter_mut().zip(&g) {
                for (a, &b) in acc.weights.iter_mut().zip(&part.weights) {
                    *a = *a + b;
                }
                for (a, &b) in acc.biases.iter_mut().zip(&part.biases) {
                    *a = *a + b;
                }
            }
            loss = loss + l;
            correct += c;
        }
        (total, loss, correct)
    }

    pub fn convert<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::from_f64_lossy(x.to_f64().unwrap_or(f64::NAN))).collect();
        Network {
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|p| LayerParams {
                    weights: conv(&p.weights),
                    biases: conv(&p.biases),
                })
                .collect(),
            volumes: self.volumes.clone(),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_smallest<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn micro_arch() -> ArchitectureSpec {
        ArchitectureSpec {
            input_resolution: 6,
            layers: vec![
                LayerSpec::Conv {
                    kernel: 3,
                    channels: 3,
                    stride: 1,
                },
                LayerSpec::ReLU,
                LayerSpec::Conv {
                    kernel: 3,
                    channels: 2,
                    stride: 2,
                },
                LayerSpec::ReLU,
                LayerSpec::MaxPool { window: 2 },
                LayerSpec::FullyConnected { out_dim: 4 },
                LayerSpec::Softmax,
            ],
            final_conv_index: 2,
        }
    }

    fn random_net(arch: ArchitectureSpec, seed: u64) -> Network<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::<f64>::zeros(arch);
        for p in &mut net.params {
            p.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
            p.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
        net
    }

    fn loss(net: &Network<f64>, x: &[f64], t: usize) -> f64 {
        -net.probabilities(x)[t].ln()
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let arch = micro_arch();
        arch.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = random_net(arch, 3);
        let x: Vec<f64> = (0..36).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target = 1;
        let mut grads = net.zero_grads();
        net.backprop(&x, target, &mut grads);

        let h = 1e-4;
        let mut worst = 0.0f64;
        let mut checked = 0;
        for _ in 0..100 {
            let layer = loop {
                let l = rng.gen_range(0..net.params.len());
                if !net.params[l].weights.is_empty() {
                    break l;
                }
            };
            let use_bias = rng.gen_bool(0.2);
            let len = if use_bias {
                net.params[layer].biases.len()
            } else {
                net.params[layer].weights.len()
            };
            let j = rng.gen_range(0..len);
            let slot = |n: &mut Network<f64>, delta: f64| {
                let p = &mut n.params[layer];
                let v = if use_bias { &mut p.biases[j] } else { &mut p.weights[j] };
                *v += delta;
            };
            slot(&mut net, h);
            let up = loss(&net, &x, target);
            slot(&mut net, -2.0 * h);
            let down = loss(&net, &x, target);
            slot(&mut net, h);
            let numeric = (up - down) / (2.0 * h);
            let analytic = if use_bias {
                grads[layer].biases[j]
            } else {
                grads[layer].weights[j]
            };
            let scale = numeric.abs().max(analytic.abs());
            if scale > 1e-7 {
                worst = worst.max((numeric - analytic).abs() / scale);
                checked += 1;
            }
        }
        assert!(checked > 50, "only {checked} informative weights");
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_model_gives_uniform_probabilities() {
        let net = Network::<f32>::zeros(ArchitectureSpec::desk_scale(64, 16));
        let out = net.forward(&vec![0.0; 64 * 64]);
        for p in &out.probabilities {
            assert!((p - 1.0 / 16.0).abs() < 1e-7);
        }
        assert_eq!(out.activations.len(), 4096);
        assert_eq!(argmax_smallest(&out.probabilities), 0);
    }

    #[test]
    fn softmax_normalizes_extreme_logits() {
        let mut z = vec![1000.0f32, -1000.0, 3.0, 999.0];
        softmax_in_place(&mut z);
        assert!((z.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(z.iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn im2col_round_trip_is_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = Volume {
            channels: 2,
            height: 7,
            width: 5,
        };
        let out = Volume {
            channels: 1,
            height: 4,
            width: 3,
        };
        let x: Vec<f64> = (0..v.len()).map(|_| rng.gen()).collect();
        let mut cols = Vec::new();
        im2col(&x, v, 3, 2, out, &mut cols);
        let c: Vec<f64> = (0..cols.len()).map(|_| rng.gen()).collect();
        let mut back = vec![0.0; v.len()];
        col2im(&c, v, 3, 2, out, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_is_sum_of_example_gradients() {
        let net = random_net(micro_arch(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..19).map(|_| (0..36).map(|_| rng.gen()).collect()).collect();
        let ts: Vec<usize> = (0..19).map(|i| i % 4).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let (g, _, _) = net.batch_gradient(&refs, &ts);
        let mut expect = net.zero_grads();
        for (x, &t) in xs.iter().zip(&ts) {
            net.backprop(x, t, &mut expect);
        }
        for (a, b) in g.iter().zip(&expect) {
            for (u, v) in a.weights.iter().zip(&b.weights) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
