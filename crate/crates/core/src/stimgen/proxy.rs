//! Single-object shape recognition images, a non-numerosity training task.
//! Class = shape × size bucket, ten classes in all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::mix;
use super::{
    rasterize, DotDisplay, NumerosityLevel, SceneObject, Shape, StimError, StimulusImage,
    StimulusSetKind,
};

pub const PROXY_CLASSES: usize = 2 * Shape::ALL.len();

/// Circumradius ranges of the two size buckets, field units.
const SMALL: (f64, f64) = (0.07, 0.12);
const LARGE: (f64, f64) = (0.18, 0.28);

#[derive(Debug, Clone)]
pub struct ProxySample {
    pub image: StimulusImage,
    /// `2 · shape index + (1 if large)`.
    pub class: u32,
}

pub fn proxy_class(shape: Shape, large: bool) -> u32 {
    let idx = Shape::ALL.iter().position(|&s| s == shape).expect("known shape");
    2 * idx as u32 + u32::from(large)
}

fn proxy_object(class: u32, rng: &mut ChaCha8Rng) -> SceneObject {
    let shape = Shape::ALL[class as usize / 2];
    let (lo, hi) = if class % 2 == 1 { LARGE } else { SMALL };
    let size = rng.gen_range(lo..=hi);
    let aspect = match shape {
        Shape::Ellipse => rng.gen_range(0.5..=0.7),
        Shape::Rectangle => rng.gen_range(0.4..=0.6),
        _ => 1.0,
    };
    SceneObject {
        shape,
        center: [rng.gen_range(size..=1.0 - size), rng.gen_range(size..=1.0 - size)],
        size,
        aspect,
        orientation: rng.gen_range(0.0..std::f64::consts::TAU),
    }
}

/// `per_class` images of every class, ordered by class then replicate.
pub fn gen_proxy_dataset(per_class: usize, resolution: usize, seed: u64) -> Result<Vec<ProxySample>, StimError> {
    if per_class == 0 {
        return Err(StimError::InvalidArgument("per_class must be at least 1".into()));
    }
    (0..PROXY_CLASSES * per_class)
        .into_par_iter()
        .map(|i| {
            let class = (i / per_class) as u32;
            let image_seed = mix(seed ^ mix(i as u64 + 1));
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed);
            let display = DotDisplay {
                numerosity: NumerosityLevel::from_index(0),
                set_kind: StimulusSetKind::Standard,
                objects: vec![proxy_object(class, &mut rng)],
                seed: image_seed,
                hull_constrained: false,
            };
            Ok(ProxySample {
                image: rasterize(&display, resolution)?,
                class,
            })
        })
        .collect()
}
