use numprobe::stimgen::{
    gen_dataset, generate, rasterize, GenerationParams, NumerosityLevel, StimulusSetKind,
    AREA_TOLERANCE, HULL_TOLERANCE, LEVELS,
};
use proptest::prelude::*;

fn level() -> impl Strategy<Value = NumerosityLevel> {
    (0..LEVELS.len()).prop_map(NumerosityLevel::from_index)
}

fn set_kind() -> impl Strategy<Value = StimulusSetKind> {
    prop::sample::select(StimulusSetKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn displays_respect_their_constraints(n in level(), set in set_kind(), seed in any::<u64>(), wide in any::<bool>()) {
        let p = GenerationParams::with_variation(if wide { 1.5 } else { 1.0 });
        let d = generate(n, set, &p, seed).unwrap();
        prop_assert_eq!(d.objects.len(), n.value() as usize);
        prop_assert!(d.min_gap() >= p.gap_min - 1e-12);
        prop_assert!(d.objects.iter().all(|o| o.inside_field()));
        match set {
            StimulusSetKind::ControlAreaDensity => {
                prop_assert!((d.total_area() / p.area_total - 1.0).abs() <= AREA_TOLERANCE);
            }
            StimulusSetKind::ControlShapeHull if n.value() >= 3 => {
                prop_assert!(d.hull_constrained);
                prop_assert!((d.hull_area() / p.hull_total - 1.0).abs() <= HULL_TOLERANCE);
            }
            _ => {}
        }
    }

    #[test]
    fn standard_radii_stay_in_range(n in level(), seed in any::<u64>(), scale in 1.0f64..1.8) {
        let p = GenerationParams::with_variation(scale);
        let d = generate(n, StimulusSetKind::Standard, &p, seed).unwrap();
        for o in &d.objects {
            prop_assert!(o.size >= p.radius_min() - 1e-12 && o.size <= p.radius_max() + 1e-12);
        }
    }

    #[test]
    fn regeneration_is_byte_identical(n in level(), set in set_kind(), seed in any::<u64>()) {
        let p = GenerationParams::default();
        let a = rasterize(&generate(n, set, &p, seed).unwrap(), 64).unwrap();
        let b = rasterize(&generate(n, set, &p, seed).unwrap(), 64).unwrap();
        prop_assert_eq!(a.pixels, b.pixels);
    }
}

#[test]
fn area_density_set_ignores_size_variation() {
    let n = NumerosityLevel::new(12).unwrap();
    let a = generate(n, StimulusSetKind::ControlAreaDensity, &GenerationParams::default(), 5).unwrap();
    let b = generate(n, StimulusSetKind::ControlAreaDensity, &GenerationParams::with_variation(1.5), 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dataset_images_follow_generation_order() {
    let ds = gen_dataset(2, &GenerationParams::default(), 11).unwrap();
    assert_eq!(ds.len(), 2 * 16 * 3);
    for (i, s) in ds.samples.iter().enumerate() {
        assert_eq!(s.set_kind, StimulusSetKind::ALL[i / 32]);
        assert_eq!(s.numerosity.index(), (i / 2) % 16);
        assert_eq!(s.replicate, i % 2);
        let again = rasterize(&generate(s.numerosity, s.set_kind, &GenerationParams::default(), s.seed).unwrap(), 64).unwrap();
        assert_eq!(again.pixels, s.image.pixels);
    }
}

#[test]
fn larger_numbers_cover_more_pixels_in_the_standard_set() {
    let ds = gen_dataset(20, &GenerationParams::default(), 2).unwrap();
    let mean = |v: u32| {
        let px: Vec<usize> = ds
            .samples
            .iter()
            .filter(|s| s.set_kind == StimulusSetKind::Standard && s.numerosity.value() == v)
            .map(|s| s.image.foreground_count())
            .collect();
        px.iter().sum::<usize>() as f64 / px.len() as f64
    };
    assert!(mean(30) > 5.0 * mean(2));
}
