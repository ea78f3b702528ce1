//! Unit recording, selectivity analysis, tuning curves and the
//! classification metrics of a numerosity network.

mod output;
pub mod svg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{self, ModelCheckpoint, NetError};
use crate::stats::{classify_selectivity, two_way_anova, CellGrid, SelectivityLabel, StatsError};
use crate::stimgen::{
    gen_dataset, Dataset, GenerationParams, NumerosityLevel, StimError, StimulusImage, StimulusSetKind,
    LEVELS,
};

pub use output::{
    write_accuracy_csv, write_distribution_csv, write_interval_csv, write_sweep_csv, write_tuning_csv,
};

/// Numerosity levels (factor A).
pub const A: usize = LEVELS.len();
/// Stimulus sets (factor B).
pub const B: usize = StimulusSetKind::ALL.len();
/// Smallest image count behind a perceived-number distribution.
pub const MIN_DISTRIBUTION_SAMPLES: usize = 30;
pub const DEFAULT_COVERAGE: f64 = 0.85;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error(transparent)]
    Stim(#[from] StimError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no selective units: tuning curves cannot be formed")]
    NoSelectiveUnits,
    #[error("insufficient samples: {got} images of n={presented}, need at least {need}")]
    InsufficientSamples { presented: u32, got: usize, need: usize },
    #[error("no window exceeds coverage {coverage} (total mass {total})")]
    Unsatisfiable { coverage: f64, total: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ProbeError {
    fn from(e: std::io::Error) -> Self {
        ProbeError::Io(e.to_string())
    }
}

impl From<csv::Error> for ProbeError {
    fn from(e: csv::Error) -> Self {
        ProbeError::Io(e.to_string())
    }
}

/// Responses laid out `[unit][level][set][replicate]`, levels ascending and
/// sets in `StimulusSetKind::ALL` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    units: usize,
    s: usize,
    data: Vec<f32>,
}

impl ResponseMatrix {
    pub fn new(units: usize, s: usize, data: Vec<f32>) -> Result<Self, ProbeError> {
        if s < 2 {
            return Err(StatsError::InsufficientReplicates(s).into());
        }
        if data.len() != units * A * B * s {
            return Err(ProbeError::InvalidArgument(format!(
                "{} values for {units} units × {A} × {B} × {s}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ProbeError::InvalidArgument(format!("non-finite response at index {i}")));
        }
        Ok(ResponseMatrix { units, s, data })
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn replicates(&self) -> usize {
        self.s
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// All responses of one unit.
    pub fn unit(&self, u: usize) -> &[f32] {
        let len = A * B * self.s;
        &self.data[u * len..(u + 1) * len]
    }

    pub fn cell_grid(&self, u: usize) -> CellGrid {
        let values = self.unit(u).iter().map(|&v| v as f64).collect();
        CellGrid::new(A, B, self.s, values).expect("shape validated at construction")
    }

    /// Mean response per level, averaged over sets and replicates.
    pub fn level_means(&self, u: usize) -> [f64; A] {
        let per_level = B * self.s;
        let mut out = [0.0; A];
        for (i, chunk) in self.unit(u).chunks(per_level).enumerate() {
            out[i] = chunk.iter().map(|&v| v as f64).sum::<f64>() / per_level as f64;
        }
        out
    }

    /// Matrix with units reordered: unit `k` of the result is unit
    /// `order[k]` of `self`.
    pub fn permute_units(&self, order: &[usize]) -> Self {
        let data = order.iter().flat_map(|&u| self.unit(u).iter().copied()).collect();
        ResponseMatrix {
            units: order.len(),
            s: self.s,
            data,
        }
    }
}

fn sample_index(set: usize, level: usize, s: usize, rep: usize) -> usize {
    (set * A + level) * s + rep
}

/// Probed-layer activations for every image of `ds`, which must be a
/// balanced dataset in generation order.
pub fn responses_for_dataset(model: &ModelCheckpoint, ds: &Dataset) -> Result<ResponseMatrix, ProbeError> {
    let s = ds.per_cell;
    if ds.len() != A * B * s {
        return Err(ProbeError::InvalidArgument("dataset is not balanced".into()));
    }
    let acts: Vec<Vec<f32>> = ds
        .samples
        .par_iter()
        .map(|smp| net::forward(model, &smp.image).map(|o| o.activations))
        .collect::<Result<_, _>>()?;
    let units = model.arch().final_conv_units();
    let mut data = vec![0.0f32; units * A * B * s];
    for (j, _) in StimulusSetKind::ALL.iter().enumerate() {
        for i in 0..A {
            for k in 0..s {
                let a = &acts[sample_index(j, i, s, k)];
                for (u, &v) in a.iter().enumerate() {
                    data[((u * A + i) * B + j) * s + k] = v;
                }
            }
        }
    }
    ResponseMatrix::new(units, s, data)
}

/// Generates a fresh balanced set with `s` images per cell and records the
/// probed-layer response of every unit to every image.
pub fn record_responses(
    model: &ModelCheckpoint,
    s: usize,
    params: &GenerationParams,
    seed: u64,
) -> Result<ResponseMatrix, ProbeError> {
    if s < 2 {
        return Err(StatsError::InsufficientReplicates(s).into());
    }
    let ds = gen_dataset(s, params, seed)?;
    responses_for_dataset(model, &ds)
}

/// ANOVA-based label of every unit and the selective fraction.
pub fn selectivity_fraction(resp: &ResponseMatrix, alpha: f64) -> (f64, Vec<SelectivityLabel>) {
    let labels: Vec<SelectivityLabel> = (0..resp.units)
        .into_par_iter()
        .map(|u| {
            let table = two_way_anova(&resp.cell_grid(u)).expect("valid grid");
            classify_selectivity(&table, alpha)
        })
        .collect();
    let selective = labels.iter().filter(|l| l.selective).count();
    let fraction = if labels.is_empty() {
        0.0
    } else {
        selective as f64 / labels.len() as f64
    };
    (fraction, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub s_values: Vec<usize>,
    pub fraction_selective: Vec<f64>,
    #[serde(skip)]
    pub labels: Vec<Vec<SelectivityLabel>>,
}

/// Seed of the stimulus set recorded at sweep point `s`.
pub fn sweep_seed(master: u64, s: usize) -> u64 {
    crate::stimgen::derive_seed(master ^ 0x005E_ED0F_5A3E, StimulusSetKind::Standard, NumerosityLevel::from_index(0), s)
}

/// Selective fraction as a function of per-cell sample size, with fresh
/// stimuli at every point.
pub fn sample_size_sweep(
    model: &ModelCheckpoint,
    s_values: &[usize],
    params: &GenerationParams,
    seed: u64,
    alpha: f64,
) -> Result<SweepResult, ProbeError> {
    if s_values.is_empty() {
        return Err(ProbeError::InvalidArgument("no sample sizes given".into()));
    }
    if let Some(&s) = s_values.iter().find(|&&s| s < 2) {
        return Err(StatsError::InsufficientReplicates(s).into());
    }
    let mut out = SweepResult {
        s_values: s_values.to_vec(),
        fraction_selective: Vec::new(),
        labels: Vec::new(),
    };
    for &s in s_values {
        let resp = record_responses(model, s, params, sweep_seed(seed, s))?;
        let (f, labels) = selectivity_fraction(&resp, alpha);
        out.fraction_selective.push(f);
        out.labels.push(labels);
    }
    Ok(out)
}

/// Level with the largest mean response; ties go to the smaller level.
pub fn preferred_numerosity(means: &[f64]) -> NumerosityLevel {
    assert_eq!(means.len(), A, "one mean per level");
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = i;
        }
    }
    NumerosityLevel::from_index(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCurve {
    pub pn: NumerosityLevel,
    pub mean_response: Vec<f64>,
    pub se: Vec<f64>,
    pub n_units: usize,
}

fn min_max_normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        (v.iter().map(|x| (x - lo) / range).collect(), range)
    } else {
        (vec![0.0; v.len()], 0.0)
    }
}

/// Pooled tuning curves of the selective units, one per preferred
/// numerosity that has at least one unit, ordered by PN.
///
/// Each unit's level means are min-max normalized, units are grouped by PN,
/// the group mean and standard error (sample s.d. over units / √n) are
/// taken per level, and the pooled mean is normalized again; the SE is
/// scaled by the same factor.
pub fn tuning_curves(resp: &ResponseMatrix, labels: &[SelectivityLabel]) -> Result<Vec<TuningCurve>, ProbeError> {
    if labels.len() != resp.units {
        return Err(ProbeError::InvalidArgument(format!(
            "{} labels for {} units",
            labels.len(),
            resp.units
        )));
    }
    let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); A];
    for (u, l) in labels.iter().enumerate() {
        if l.selective {
            let means = resp.level_means(u);
            let pn = preferred_numerosity(&means);
            groups[pn.index()].push(min_max_normalize(&means).0);
        }
    }
    if groups.iter().all(Vec::is_empty) {
        return Err(ProbeError::NoSelectiveUnits);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(pn, g)| {
            let n = g.len() as f64;
            let mean: Vec<f64> = (0..A).map(|i| g.iter().map(|c| c[i]).sum::<f64>() / n).collect();
            let se: Vec<f64> = (0..A)
                .map(|i| {
                    if g.len() < 2 {
                        return 0.0;
                    }
                    let var = g.iter().map(|c| (c[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
                    var.sqrt() / n.sqrt()
                })
                .collect();
            let (curve, range) = min_max_normalize(&mean);
            let se = if range > 0.0 {
                se.iter().map(|e| e / range).collect()
            } else {
                se
            };
            TuningCurve {
                pn: NumerosityLevel::from_index(pn),
                mean_response: curve,
                se,
                n_units: g.len(),
            }
        })
        .collect())
}

/// Anything that labels a stimulus with a numerosity.
pub trait Classifier: Sync {
    fn classify(&self, image: &StimulusImage) -> Result<u32, ProbeError>;
}

impl Classifier for ModelCheckpoint {
    fn classify(&self, image: &StimulusImage) -> Result<u32, ProbeError> {
        Ok(net::predict(self, image)?)
    }
}

/// Predicted label of every sample of `ds`, in dataset order.
pub fn predict_dataset<C: Classifier + ?Sized>(model: &C, ds: &Dataset) -> Result<Vec<u32>, ProbeError> {
    ds.samples.par_iter().map(|s| model.classify(&s.image)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: f64,
    /// Per level, ascending; NaN for a level absent from the dataset.
    pub per_level: Vec<f64>,
}

pub fn accuracy_from_predictions(ds: &Dataset, predictions: &[u32]) -> AccuracyReport {
    let mut hits = [0usize; A];
    let mut counts = [0usize; A];
    for (s, &p) in ds.samples.iter().zip(predictions) {
        let i = s.numerosity.index();
        counts[i] += 1;
        hits[i] += usize::from(p == s.numerosity.value());
    }
    let total: usize = counts.iter().sum();
    AccuracyReport {
        overall: if total == 0 {
            0.0
        } else {
            hits.iter().sum::<usize>() as f64 / total as f64
        },
        per_level: (0..A)
            .map(|i| {
                if counts[i] == 0 {
                    f64::NAN
                } else {
                    hits[i] as f64 / counts[i] as f64
                }
            })
            .collect(),
    }
}

/// Exact-match accuracy, overall and per numerosity level.
pub fn evaluate_accuracy<C: Classifier + ?Sized>(model: &C, ds: &Dataset) -> Result<AccuracyReport, ProbeError> {
    Ok(accuracy_from_predictions(ds, &predict_dataset(model, ds)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceivedDistribution {
    pub presented: NumerosityLevel,
    /// Probability of each label, ascending label order.
    pub mass: Vec<f64>,
}

pub fn distribution_from_predictions(
    ds: &Dataset,
    predictions: &[u32],
    presented: NumerosityLevel,
) -> Result<PerceivedDistribution, ProbeError> {
    let mut counts = [0usize; A];
    let mut total = 0usize;
    for (s, &p) in ds.samples.iter().zip(predictions) {
        if s.numerosity == presented {
            let label = NumerosityLevel::new(p)?;
            counts[label.index()] += 1;
            total += 1;
        }
    }
    if total < MIN_DISTRIBUTION_SAMPLES {
        return Err(ProbeError::InsufficientSamples {
            presented: presented.value(),
            got: total,
            need: MIN_DISTRIBUTION_SAMPLES,
        });
    }
    Ok(PerceivedDistribution {
        presented,
        mass: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    })
}

/// Histogram of predicted labels over the images of one presented level.
pub fn perceived_distribution<C: Classifier + ?Sized>(
    model: &C,
    ds: &Dataset,
    presented: NumerosityLevel,
) -> Result<PerceivedDistribution, ProbeError> {
    let subset: Vec<_> = ds.samples.iter().filter(|s| s.numerosity == presented).cloned().collect();
    let sub = Dataset {
        per_cell: ds.per_cell,
        samples: subset,
    };
    let preds = predict_dataset(model, &sub)?;
    distribution_from_predictions(&sub, &preds, presented)
}

/// Number of labels in the smallest run of consecutive labels that contains
/// the presented label and holds probability mass strictly above
/// `coverage`. Window sums add masses in ascending label order.
pub fn estimation_interval_length(dist: &PerceivedDistribution, coverage: f64) -> Result<usize, ProbeError> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(ProbeError::InvalidArgument(format!("coverage {coverage} must be in (0, 1)")));
    }
    let m = &dist.mass;
    if m.len() != A || m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ProbeError::InvalidArgument("mass must be 16 finite non-negative values".into()));
    }
    let x = dist.presented.index();
    for len in 1..=A {
        let first = x.saturating_sub(len - 1);
        let last = x.min(A - len);
        for start in first..=last {
            if m[start..start + len].iter().sum::<f64>() > coverage {
                return Ok(len);
            }
        }
    }
    Err(ProbeError::Unsatisfiable {
        coverage,
        total: m.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init, ArchitectureSpec, InitScheme, LabelMap};
    use crate::stats::SelectivityReason;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> ModelCheckpoint {
        let arch = ArchitectureSpec::desk_scale(32, 16);
        init(arch, LabelMap::numerosity(), InitScheme::UniformRange { lo: -0.1, hi: 0.1 }, 5).unwrap()
    }

    fn small_params() -> GenerationParams {
        GenerationParams {
            resolution: 32,
            ..GenerationParams::default()
        }
    }

    fn matrix_from_fn(units: usize, s: usize, f: impl Fn(usize, usize, usize, usize) -> f32) -> ResponseMatrix {
        let mut data = Vec::new();
        for u in 0..units {
            for i in 0..A {
                for j in 0..B {
                    for k in 0..s {
                        data.push(f(u, i, j, k));
                    }
                }
            }
        }
        ResponseMatrix::new(units, s, data).unwrap()
    }

    #[test]
    fn record_shape_and_determinism() {
        let m = small_model();
        let r = record_responses(&m, 7, &small_params(), 3).unwrap();
        assert_eq!(r.units(), m.arch().final_conv_units());
        assert_eq!(r.data().len(), r.units() * 16 * 3 * 7);
        assert_eq!(r, record_responses(&m, 7, &small_params(), 3).unwrap());
    }

    #[test]
    fn zero_model_records_zeros() {
        let mut m = small_model();
        for p in &mut m.net.params {
            p.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let r = record_responses(&m, 2, &small_params(), 1).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        let (f, labels) = selectivity_fraction(&r, 0.01);
        assert_eq!(f, 0.0);
        assert!(labels.iter().all(|l| l.reason == SelectivityReason::Degenerate));
    }

    #[test]
    fn constant_units_are_never_selective() {
        let r = matrix_from_fn(5, 4, |u, _, _, _| u as f32);
        assert_eq!(selectivity_fraction(&r, 0.01).0, 0.0);
    }

    #[test]
    fn fraction_is_invariant_to_unit_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f32> = (0..40 * A * B * 5).map(|_| rng.gen()).collect();
        let r = matrix_from_fn(40, 5, |u, i, j, k| {
            let base = noise[((u * A + i) * B + j) * 5 + k];
            if u % 3 == 0 {
                base + i as f32
            } else {
                base
            }
        });
        let mut order: Vec<usize> = (0..40).collect();
        order.reverse();
        order.swap(3, 17);
        let (f1, l1) = selectivity_fraction(&r, 0.01);
        let (f2, l2) = selectivity_fraction(&r.permute_units(&order), 0.01);
        assert_eq!(f1, f2);
        for (k, &u) in order.iter().enumerate() {
            assert_eq!(l2[k], l1[u]);
        }
        assert!(f1 > 0.3);
    }

    #[test]
    fn preferred_numerosity_rules() {
        let mut peaked = [0.0; A];
        peaked[2] = 5.0;
        assert_eq!(preferred_numerosity(&peaked).value(), 4);
        let decreasing: Vec<f64> = (0..A).map(|i| -(i as f64)).collect();
        assert_eq!(preferred_numerosity(&decreasing).value(), 1);
        let mut tie = [0.0; A];
        tie[3] = 2.0;
        tie[4] = 2.0;
        assert_eq!(preferred_numerosity(&tie).value(), 6);
    }

    fn tuned_matrix(units: &[usize]) -> ResponseMatrix {
        // unit u peaks at level units[u], tiny set-independent jitter
        matrix_from_fn(units.len(), 3, |u, i, _, k| {
            let d = i as f32 - units[u] as f32;
            10.0 - d * d + 0.01 * k as f32
        })
    }

    #[test]
    fn singleton_pool_is_its_own_curve() {
        let r = tuned_matrix(&[5]);
        let labels = [SelectivityLabel {
            selective: true,
            reason: SelectivityReason::Selective,
        }];
        let curves = tuning_curves(&r, &labels).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert_eq!(c.pn.value(), LEVELS[5]);
        assert_eq!(c.n_units, 1);
        assert!(c.se.iter().all(|&e| e == 0.0));
        let (own, _) = min_max_normalize(&r.level_means(0));
        for (a, b) in c.mean_response.iter().zip(&own) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_units_have_zero_se_and_pooled_curves_span_unit_interval() {
        let r = tuned_matrix(&[3, 3, 9, 12, 12, 12]);
        let sel = SelectivityLabel {
            selective: true,
            reason: SelectivityReason::Selective,
        };
        let curves = tuning_curves(&r, &[sel; 6]).unwrap();
        assert_eq!(curves.iter().map(|c| c.n_units).collect::<Vec<_>>(), vec![2, 1, 3]);
        for c in &curves {
            assert!(c.se.iter().all(|&e| e.abs() < 1e-12));
            let lo = c.mean_response.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.mean_response.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
            assert_eq!(preferred_numerosity(&c.mean_response), c.pn);
        }
    }

    #[test]
    fn no_selective_units_is_typed() {
        let r = tuned_matrix(&[1, 2]);
        let not = SelectivityLabel {
            selective: false,
            reason: SelectivityReason::FailNumerosity,
        };
        assert_eq!(tuning_curves(&r, &[not, not]), Err(ProbeError::NoSelectiveUnits));
    }

    struct Oracle;
    impl Classifier for Oracle {
        fn classify(&self, image: &StimulusImage) -> Result<u32, ProbeError> {
            Ok(image.numerosity.value())
        }
    }

    #[test]
    fn oracle_classifier_is_perfect() {
        let ds = gen_dataset(30, &small_params(), 4).unwrap();
        let acc = evaluate_accuracy(&Oracle, &ds).unwrap();
        assert_eq!(acc.overall, 1.0);
        assert_eq!(acc.per_level.len(), 16);
        assert!(acc.per_level.iter().all(|&a| a == 1.0));
        let n16 = NumerosityLevel::new(16).unwrap();
        let d = perceived_distribution(&Oracle, &ds, n16).unwrap();
        assert_eq!(d.mass[n16.index()], 1.0);
        assert!((d.mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(estimation_interval_length(&d, 0.85).unwrap(), 1);
    }

    #[test]
    fn model_accuracy_matches_mean_of_predictions() {
        let m = small_model();
        let ds = gen_dataset(2, &small_params(), 8).unwrap();
        let preds = predict_dataset(&m, &ds).unwrap();
        let manual = ds.samples.iter().zip(&preds).filter(|(s, &p)| s.numerosity.value() == p).count() as f64
            / ds.len() as f64;
        assert_eq!(evaluate_accuracy(&m, &ds).unwrap().overall, manual);
    }

    #[test]
    fn too_few_samples_for_a_distribution() {
        let ds = gen_dataset(9, &small_params(), 4).unwrap();
        let r = perceived_distribution(&Oracle, &ds, NumerosityLevel::new(2).unwrap());
        assert!(matches!(r, Err(ProbeError::InsufficientSamples { got: 27, .. })));
    }

    fn dist(x: u32, mass: Vec<f64>) -> PerceivedDistribution {
        PerceivedDistribution {
            presented: NumerosityLevel::new(x).unwrap(),
            mass,
        }
    }

    #[test]
    fn interval_length_examples() {
        let x = NumerosityLevel::new(10).unwrap().index();
        let mut m = vec![0.0; A];
        m[x] = 0.8;
        m[x - 1] = 0.1;
        m[x + 1] = 0.1;
        assert_eq!(estimation_interval_length(&dist(10, m.clone()), 0.85).unwrap(), 2);
        assert_eq!(estimation_interval_length(&dist(10, m), 0.95).unwrap(), 3);
        // mass on the far side of the axis from x still counts only through x
        let mut far = vec![0.0; A];
        far[15] = 0.9;
        far[0] = 0.1;
        assert_eq!(estimation_interval_length(&dist(1, far), 0.85).unwrap(), 16);
        assert!(matches!(
            estimation_interval_length(&dist(1, vec![0.05; A]), 0.85),
            Err(ProbeError::Unsatisfiable { .. })
        ));
        assert!(estimation_interval_length(&dist(1, vec![1.0 / 16.0; A]), 1.0).is_err());
    }
}
