mod common;

use common::brute_force_interval;
use numprobe::net::{init, ArchitectureSpec, InitScheme, LabelMap};
use numprobe::probe::{
    estimation_interval_length, evaluate_accuracy, perceived_distribution, predict_dataset, record_responses,
    sample_size_sweep, selectivity_fraction, tuning_curves, PerceivedDistribution, ProbeError, ResponseMatrix,
};
use numprobe::stimgen::{gen_dataset, GenerationParams, NumerosityLevel, PROXY_CLASSES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn params32() -> GenerationParams {
    GenerationParams {
        resolution: 32,
        ..Default::default()
    }
}

#[test]
fn null_responses_are_selective_at_the_conjunction_rate() {
    let (units, s) = (3000, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let data: Vec<f32> = (0..units * 16 * 3 * s).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let resp = ResponseMatrix::new(units, s, data).unwrap();
    let (f, labels) = selectivity_fraction(&resp, 0.01);
    assert_eq!(labels.len(), units);
    assert!((f - 0.0098).abs() <= 0.003, "fraction {f}");
}

#[test]
fn planted_numerosity_units_are_found_and_tuned() {
    // unit u responds as a bump around level u % 16 plus noise
    let (units, s) = (64, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut data = Vec::with_capacity(units * 16 * 3 * s);
    for u in 0..units {
        for i in 0..16 {
            for _ in 0..3 {
                for _ in 0..s {
                    let d = i as f32 - (u % 16) as f32;
                    data.push((-d * d / 4.0).exp() + 0.1 * rng.sample::<f32, _>(StandardNormal));
                }
            }
        }
    }
    let resp = ResponseMatrix::new(units, s, data).unwrap();
    let (f, labels) = selectivity_fraction(&resp, 0.01);
    assert!(f > 0.9, "fraction {f}");
    let curves = tuning_curves(&resp, &labels).unwrap();
    assert_eq!(curves.len(), 16);
    for c in &curves {
        let peak = c.mean_response.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, 1.0);
        assert_eq!(c.mean_response[c.pn.index()], 1.0);
    }
}

#[test]
fn probing_pipeline_is_label_agnostic() {
    let arch = ArchitectureSpec::desk_scale(32, 16);
    let numerosity = init(arch.clone(), LabelMap::numerosity(), InitScheme::UniformRange { lo: -0.1, hi: 0.1 }, 4).unwrap();
    let proxy = init(
        arch.with_classes(PROXY_CLASSES),
        LabelMap::indexed("shape-size", PROXY_CLASSES),
        InitScheme::UniformRange { lo: -0.1, hi: 0.1 },
        4,
    )
    .unwrap();
    let a = record_responses(&numerosity, 3, &params32(), 1).unwrap();
    let b = record_responses(&proxy, 3, &params32(), 1).unwrap();
    assert_eq!(a.units(), b.units());
    // the probed layer sits before the head, so identical conv weights give identical responses
    assert_eq!(a, b);
    let sweep = sample_size_sweep(&proxy, &[3, 4], &params32(), 2, 0.01).unwrap();
    assert_eq!(sweep.fraction_selective.len(), 2);
    assert!(sweep.fraction_selective.iter().all(|f| (0.0..=1.0).contains(f)));
}

#[test]
fn sweep_points_are_reproducible_individually() {
    let m = init(ArchitectureSpec::desk_scale(32, 16), LabelMap::numerosity(), InitScheme::UniformRange { lo: -0.1, hi: 0.1 }, 8).unwrap();
    let all = sample_size_sweep(&m, &[3, 5], &params32(), 6, 0.01).unwrap();
    let one = sample_size_sweep(&m, &[5], &params32(), 6, 0.01).unwrap();
    assert_eq!(all.fraction_selective[1], one.fraction_selective[0]);
}

#[test]
fn accuracy_report_agrees_with_raw_predictions() {
    let m = init(ArchitectureSpec::desk_scale(32, 16), LabelMap::numerosity(), InitScheme::HeNormal, 3).unwrap();
    let ds = gen_dataset(10, &params32(), 4).unwrap();
    let preds = predict_dataset(&m, &ds).unwrap();
    let acc = evaluate_accuracy(&m, &ds).unwrap();
    let hits = ds.samples.iter().zip(&preds).filter(|(s, &p)| s.numerosity.value() == p).count();
    assert_eq!(acc.overall, hits as f64 / ds.len() as f64);
    for n in NumerosityLevel::all() {
        let d = perceived_distribution(&m, &ds, n).unwrap();
        assert!((d.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d.mass[n.index()], acc.per_level[n.index()]);
    }
}

fn random_mass() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 16).prop_filter_map("non-zero", |v| {
        let t: f64 = v.iter().sum();
        (t > 0.0).then(|| v.iter().map(|x| x / t).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn interval_matches_exhaustive_windows(mass in random_mass(), x in 0usize..16, coverage in 0.05f64..0.99) {
        let d = PerceivedDistribution { presented: NumerosityLevel::from_index(x), mass: mass.clone() };
        match (estimation_interval_length(&d, coverage), brute_force_interval(&mass, x, coverage)) {
            (Ok(len), Some(want)) => prop_assert_eq!(len, want),
            (Err(ProbeError::Unsatisfiable { .. }), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }
}
