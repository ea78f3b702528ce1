//! Dot-display stimuli: three controlled stimulus sets, rasterization and
//! balanced datasets.
//!
//! A display lives in the unit field `[0,1]²`. Every randomized choice is
//! drawn from a ChaCha stream seeded with the display seed, so a display is a
//! pure function of `(numerosity, set, params, seed)`.

mod dataset;
pub mod hull;
mod proxy;
mod raster;
mod shapes;

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{derive_seed, gen_dataset, Dataset, Sample};
pub(crate) use dataset::mix;
pub use hull::convex_hull_area;
pub use proxy::{gen_proxy_dataset, proxy_class, ProxySample, PROXY_CLASSES};
pub use raster::{rasterize, StimulusImage};
pub use shapes::{SceneObject, Shape};

/// The sixteen numerosities probed, ascending.
pub const LEVELS: [u32; 16] = [1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30];

/// Relative tolerance on the hull area of `ControlShapeHull` displays.
pub const HULL_TOLERANCE: f64 = 0.05;
/// Relative tolerance on total object area of `ControlAreaDensity` displays.
pub const AREA_TOLERANCE: f64 = 0.02;

const HULL_MAX_ITERATIONS: usize = 100;
// Iteration stops once inside this band, leaving headroom below HULL_TOLERANCE.
const HULL_CONVERGED: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StimError {
    #[error("placement failed for n={numerosity} ({set}) after {restarts} display restarts")]
    PlacementFailure {
        numerosity: u32,
        set: StimulusSetKind,
        restarts: usize,
    },
    #[error("infeasible constraint for n={numerosity} ({set}): {reason}")]
    InfeasibleConstraint {
        numerosity: u32,
        set: StimulusSetKind,
        reason: String,
    },
    #[error("invalid numerosity {0}: must be one of 1, 2, 4, ..., 30")]
    InvalidNumerosity(u32),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for StimError {
    fn from(e: std::io::Error) -> Self {
        StimError::Io(e.to_string())
    }
}

/// A count of objects restricted to the sixteen probed levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct NumerosityLevel(u32);

impl NumerosityLevel {
    pub fn new(value: u32) -> Result<Self, StimError> {
        if LEVELS.contains(&value) {
            Ok(NumerosityLevel(value))
        } else {
            Err(StimError::InvalidNumerosity(value))
        }
    }

    pub fn from_index(index: usize) -> Self {
        NumerosityLevel(LEVELS[index])
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Position on the ascending level axis, `0..16`.
    pub fn index(self) -> usize {
        LEVELS.iter().position(|&v| v == self.0).expect("validated level")
    }

    pub fn all() -> impl Iterator<Item = NumerosityLevel> {
        LEVELS.iter().map(|&v| NumerosityLevel(v))
    }
}

impl TryFrom<u32> for NumerosityLevel {
    type Error = StimError;
    fn try_from(v: u32) -> Result<Self, StimError> {
        NumerosityLevel::new(v)
    }
}

impl From<NumerosityLevel> for u32 {
    fn from(n: NumerosityLevel) -> u32 {
        n.0
    }
}

impl fmt::Display for NumerosityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StimulusSetKind {
    /// Circular dots of random size and spacing.
    Standard,
    /// Equal-radius dots with constant total area and constant density.
    ControlAreaDensity,
    /// Mixed shapes with constant convex-hull area.
    ControlShapeHull,
}

impl StimulusSetKind {
    pub const ALL: [StimulusSetKind; 3] = [
        StimulusSetKind::Standard,
        StimulusSetKind::ControlAreaDensity,
        StimulusSetKind::ControlShapeHull,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used in file names and CSV columns.
    pub fn name(self) -> &'static str {
        match self {
            StimulusSetKind::Standard => "standard",
            StimulusSetKind::ControlAreaDensity => "area_density",
            StimulusSetKind::ControlShapeHull => "shape_hull",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for StimulusSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stimulus generation parameters. Lengths are in field units (the field is
/// the unit square), areas in field units squared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    /// Raster side in pixels.
    pub resolution: usize,
    pub radius_mean: f64,
    pub radius_halfrange: f64,
    /// Multiplier on `radius_halfrange`; 1.0 is the training distribution.
    pub variation_scale: f64,
    /// Minimum gap between object bounding discs.
    pub gap_min: f64,
    /// Target total dot area of the area/density control set.
    pub area_total: f64,
    /// Placement-disc area per dot in the area/density control set.
    pub density_area_per_object: f64,
    /// Target convex-hull area of the shape/hull control set.
    pub hull_total: f64,
    /// Upper bound on the mean fraction of the hull covered by objects in the
    /// shape/hull control set; object sizes shrink with n to respect it.
    pub hull_fill: f64,
    /// Candidate positions tried per object before a display restart.
    pub object_attempts: usize,
    /// Full-display restarts before giving up.
    pub max_rejection_attempts: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            resolution: 64,
            radius_mean: 0.06,
            radius_halfrange: 0.025,
            variation_scale: 1.0,
            gap_min: 0.02,
            area_total: 0.04,
            density_area_per_object: 0.023,
            hull_total: 0.3,
            hull_fill: 0.35,
            object_attempts: 200,
            max_rejection_attempts: 50,
        }
    }
}

impl GenerationParams {
    /// Training-distribution defaults with object-size variation widened by
    /// `scale`.
    pub fn with_variation(scale: f64) -> Self {
        GenerationParams {
            variation_scale: scale,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), StimError> {
        let bad = |m: &str| Err(StimError::InvalidParams(m.to_string()));
        if self.resolution < 32 {
            return bad("resolution must be at least 32");
        }
        if !(self.variation_scale >= 1.0) {
            return bad("variation_scale must be >= 1.0");
        }
        if !(self.radius_halfrange >= 0.0) {
            return bad("radius_halfrange must be >= 0");
        }
        if !(self.radius_min() > 0.0) {
            return bad("radius_mean - variation_scale * radius_halfrange must be > 0");
        }
        if !(self.radius_max() < 0.5) {
            return bad("largest radius must be < 0.5");
        }
        if !(self.gap_min >= 0.0) {
            return bad("gap_min must be >= 0");
        }
        for (name, v) in [
            ("area_total", self.area_total),
            ("density_area_per_object", self.density_area_per_object),
            ("hull_total", self.hull_total),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(StimError::InvalidParams(format!("{name} must be in (0, 1)")));
            }
        }
        if !(self.hull_fill > 0.0 && self.hull_fill <= 1.0) {
            return bad("hull_fill must be in (0, 1]");
        }
        if self.object_attempts == 0 || self.max_rejection_attempts == 0 {
            return bad("attempt budgets must be positive");
        }
        Ok(())
    }

    pub fn radius_min(&self) -> f64 {
        self.radius_mean - self.variation_scale * self.radius_halfrange
    }

    pub fn radius_max(&self) -> f64 {
        self.radius_mean + self.variation_scale * self.radius_halfrange
    }

    /// Dot radius of the area/density set at numerosity `n`.
    pub fn equal_radius(&self, n: NumerosityLevel) -> f64 {
        (self.area_total / (n.value() as f64 * PI)).sqrt()
    }

    /// Area of the centered disc that confines dot centers of the
    /// area/density set; proportional to n, so density is constant.
    pub fn placement_disc_area(&self, n: NumerosityLevel) -> f64 {
        self.density_area_per_object * n.value() as f64
    }

    /// Size multiplier applied to shape/hull objects so that their expected
    /// total area stays below `hull_fill * hull_total`.
    pub fn hull_size_scale(&self, n: NumerosityLevel) -> f64 {
        let mean_sq = self.radius_mean.powi(2) + (self.variation_scale * self.radius_halfrange).powi(2) / 3.0;
        let budget = self.hull_fill * self.hull_total / (n.value() as f64 * PI);
        (budget / mean_sq).sqrt().min(1.0)
    }
}

/// A symbolic scene: the objects of one stimulus before rasterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotDisplay {
    pub numerosity: NumerosityLevel,
    pub set_kind: StimulusSetKind,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
    /// False when the hull-area target was not applied (shape/hull set with
    /// n < 3, where the hull degenerates). Always true for other sets.
    pub hull_constrained: bool,
}

impl DotDisplay {
    pub fn total_area(&self) -> f64 {
        self.objects.iter().map(SceneObject::area).sum()
    }

    /// Area of the convex hull of all object boundary points.
    pub fn hull_area(&self) -> f64 {
        objects_hull_area(&self.objects)
    }

    /// Smallest pairwise gap between object bounding discs; `+inf` for fewer
    /// than two objects.
    pub fn min_gap(&self) -> f64 {
        min_gap(&self.objects)
    }
}

fn objects_hull_area(objects: &[SceneObject]) -> f64 {
    let pts: Vec<_> = objects.iter().flat_map(|o| o.boundary_points()).collect();
    if pts.is_empty() {
        return 0.0;
    }
    convex_hull_area(&pts)
}

fn min_gap(objects: &[SceneObject]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            best = best.min(a.gap_to(b));
        }
    }
    best
}

/// Generates one display of the given set.
pub fn generate(
    n: NumerosityLevel,
    set: StimulusSetKind,
    params: &GenerationParams,
    seed: u64,
) -> Result<DotDisplay, StimError> {
    match set {
        StimulusSetKind::Standard => gen_standard(n, params, seed),
        StimulusSetKind::ControlAreaDensity => gen_control_area_density(n, params, seed),
        StimulusSetKind::ControlShapeHull => gen_control_shape_hull(n, params, seed),
    }
}

/// Circles with radii uniform in `radius_mean ± variation_scale·radius_halfrange`
/// at uniformly random non-overlapping positions.
pub fn gen_standard(
    n: NumerosityLevel,
    params: &GenerationParams,
    seed: u64,
) -> Result<DotDisplay, StimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (params.radius_min(), params.radius_max());
    for _ in 0..params.max_rejection_attempts {
        let mut radii: Vec<f64> = (0..n.value()).map(|_| rng.gen_range(lo..=hi)).collect();
        // largest first: packing fails far less often
        radii.sort_by(|a, b| b.total_cmp(a));
        let templates = radii.into_iter().map(|r| SceneObject::circle([0.0, 0.0], r));
        let placed = place_objects(&mut rng, templates, params, |rng, r| {
            [rng.gen_range(r..=1.0 - r), rng.gen_range(r..=1.0 - r)]
        });
        if let Some(objects) = placed {
            return Ok(DotDisplay {
                numerosity: n,
                set_kind: StimulusSetKind::Standard,
                objects,
                seed,
                hull_constrained: true,
            });
        }
    }
    Err(StimError::PlacementFailure {
        numerosity: n.value(),
        set: StimulusSetKind::Standard,
        restarts: params.max_rejection_attempts,
    })
}

/// `n` equal circles of radius `sqrt(area_total / (n π))` whose centers lie
/// in a centered disc of area `density_area_per_object · n`.
pub fn gen_control_area_density(
    n: NumerosityLevel,
    params: &GenerationParams,
    seed: u64,
) -> Result<DotDisplay, StimError> {
    params.validate()?;
    let set = StimulusSetKind::ControlAreaDensity;
    let r = params.equal_radius(n);
    let disc_r = (params.placement_disc_area(n) / PI).sqrt();
    let infeasible = |reason: String| StimError::InfeasibleConstraint {
        numerosity: n.value(),
        set,
        reason,
    };
    if disc_r + r > 0.5 {
        return Err(infeasible(format!(
            "placement disc radius {disc_r:.4} plus dot radius {r:.4} exceeds the field"
        )));
    }
    if n.value() >= 2 && 2.0 * disc_r < 2.0 * r + params.gap_min {
        return Err(infeasible(format!(
            "dots of radius {r:.4} cannot keep gap {} inside a disc of radius {disc_r:.4}",
            params.gap_min
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_rejection_attempts {
        let templates = (0..n.value()).map(|_| SceneObject::circle([0.0, 0.0], r));
        let placed = place_objects(&mut rng, templates, params, |rng, _| {
            let rho = disc_r * rng.gen::<f64>().sqrt();
            let theta = rng.gen_range(0.0..2.0 * PI);
            [0.5 + rho * theta.cos(), 0.5 + rho * theta.sin()]
        });
        if let Some(objects) = placed {
            return Ok(DotDisplay {
                numerosity: n,
                set_kind: set,
                objects,
                seed,
                hull_constrained: true,
            });
        }
    }
    Err(StimError::PlacementFailure {
        numerosity: n.value(),
        set,
        restarts: params.max_rejection_attempts,
    })
}

/// Mixed shapes whose joint convex hull has area `hull_total` (n ≥ 3).
///
/// Objects are first placed in a centered square of area `hull_total`, then
/// their centers are repeatedly rescaled about the centroid by
/// `sqrt(target / current)` until the hull is on target. The display is
/// re-centered and re-validated for overlap and containment; failures restart
/// with fresh draws. For n ∈ {1, 2} the hull target is not applied and
/// `hull_constrained` is false.
pub fn gen_control_shape_hull(
    n: NumerosityLevel,
    params: &GenerationParams,
    seed: u64,
) -> Result<DotDisplay, StimError> {
    let (objects, hull_constrained) =
        shape_hull_objects(n.value(), params.hull_size_scale(n), params, seed)?;
    Ok(DotDisplay {
        numerosity: n,
        set_kind: StimulusSetKind::ControlShapeHull,
        objects,
        seed,
        hull_constrained,
    })
}

/// Shape/hull placement for an arbitrary object count; sizes are multiplied
/// by `scale`. Returns the objects and whether the hull target was applied.
fn shape_hull_objects(
    count: u32,
    scale: f64,
    params: &GenerationParams,
    seed: u64,
) -> Result<(Vec<SceneObject>, bool), StimError> {
    params.validate()?;
    let set = StimulusSetKind::ControlShapeHull;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (params.radius_min() * scale, params.radius_max() * scale);
    let constrained = count >= 3;
    let side = params.hull_total.sqrt().min(1.0);
    let mut hull_misses = 0usize;

    for _ in 0..params.max_rejection_attempts {
        let mut templates: Vec<SceneObject> =
            (0..count).map(|_| random_shape(&mut rng, lo, hi)).collect();
        templates.sort_by(|a, b| b.size.total_cmp(&a.size));

        let placed = if constrained {
            place_objects(&mut rng, templates.into_iter(), params, |rng, r| {
                let half = (side / 2.0 - r).max(0.0);
                [0.5 + rng.gen_range(-half..=half), 0.5 + rng.gen_range(-half..=half)]
            })
        } else {
            place_objects(&mut rng, templates.into_iter(), params, |rng, r| {
                [rng.gen_range(r..=1.0 - r), rng.gen_range(r..=1.0 - r)]
            })
        };
        let Some(mut objects) = placed else { continue };
        if !constrained {
            return Ok((objects, false));
        }
        if fit_hull(&mut objects, params) {
            return Ok((objects, true));
        }
        hull_misses += 1;
    }
    if hull_misses > 0 {
        Err(StimError::InfeasibleConstraint {
            numerosity: count,
            set,
            reason: format!(
                "hull target {} not met within {} restarts",
                params.hull_total, params.max_rejection_attempts
            ),
        })
    } else {
        Err(StimError::PlacementFailure {
            numerosity: count,
            set,
            restarts: params.max_rejection_attempts,
        })
    }
}

fn random_shape(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> SceneObject {
    let shape = Shape::ALL[rng.gen_range(0..Shape::ALL.len())];
    let size = rng.gen_range(lo..=hi);
    let aspect = match shape {
        Shape::Ellipse => rng.gen_range(0.6..=0.9),
        Shape::Rectangle => rng.gen_range(0.5..=0.8),
        _ => 1.0,
    };
    let orientation = match shape {
        Shape::Circle => 0.0,
        _ => rng.gen_range(0.0..2.0 * PI),
    };
    SceneObject {
        shape,
        center: [0.0, 0.0],
        size,
        aspect,
        orientation,
    }
}

/// Rescale centers about the centroid until the hull area is on target, then
/// re-center and validate. Returns false if the result is unusable.
fn fit_hull(objects: &mut [SceneObject], params: &GenerationParams) -> bool {
    let target = params.hull_total;
    for _ in 0..HULL_MAX_ITERATIONS {
        let area = objects_hull_area(objects);
        if area <= 0.0 {
            return false;
        }
        if ((area - target) / target).abs() <= HULL_CONVERGED {
            break;
        }
        let step = (target / area).sqrt();
        let count = objects.len() as f64;
        let cx = objects.iter().map(|o| o.center[0]).sum::<f64>() / count;
        let cy = objects.iter().map(|o| o.center[1]).sum::<f64>() / count;
        for o in objects.iter_mut() {
            o.center = [cx + step * (o.center[0] - cx), cy + step * (o.center[1] - cy)];
        }
    }

    // center the bounding box of the bounding discs in the field
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for o in objects.iter() {
        x0 = x0.min(o.center[0] - o.size);
        y0 = y0.min(o.center[1] - o.size);
        x1 = x1.max(o.center[0] + o.size);
        y1 = y1.max(o.center[1] + o.size);
    }
    let (dx, dy) = (0.5 - (x0 + x1) / 2.0, 0.5 - (y0 + y1) / 2.0);
    for o in objects.iter_mut() {
        o.center = [o.center[0] + dx, o.center[1] + dy];
    }

    let area = objects_hull_area(objects);
    objects.iter().all(SceneObject::inside_field)
        && min_gap(objects) >= params.gap_min
        && ((area - target) / target).abs() <= HULL_CONVERGED
}

/// Sequential rejection placement. Each template gets up to
/// `object_attempts` candidate centers; `None` when any object cannot be
/// placed.
fn place_objects<I, F>(
    rng: &mut ChaCha8Rng,
    templates: I,
    params: &GenerationParams,
    mut sample_center: F,
) -> Option<Vec<SceneObject>>
where
    I: Iterator<Item = SceneObject>,
    F: FnMut(&mut ChaCha8Rng, f64) -> [f64; 2],
{
    let mut placed: Vec<SceneObject> = Vec::new();
    for template in templates {
        let mut ok = false;
        for _ in 0..params.object_attempts {
            let mut candidate = template;
            candidate.center = sample_center(rng, template.size);
            if candidate.inside_field()
                && placed.iter().all(|p| p.gap_to(&candidate) >= params.gap_min)
            {
                placed.push(candidate);
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(v: u32) -> NumerosityLevel {
        NumerosityLevel::new(v).unwrap()
    }

    fn check_geometry(d: &DotDisplay, params: &GenerationParams) {
        assert_eq!(d.objects.len() as u32, d.numerosity.value());
        assert!(d.objects.iter().all(|o| o.size > 0.0 && o.inside_field()));
        assert!(d.min_gap() >= params.gap_min);
    }

    #[test]
    fn numerosity_levels() {
        assert_eq!(NumerosityLevel::all().count(), 16);
        assert!(NumerosityLevel::new(3).is_err());
        assert!(NumerosityLevel::new(0).is_err());
        assert_eq!(lvl(30).index(), 15);
        assert_eq!(NumerosityLevel::from_index(2).value(), 4);
    }

    #[test]
    fn standard_single_and_thirty() {
        let p = GenerationParams::default();
        let d = gen_standard(lvl(1), &p, 3).unwrap();
        assert_eq!(d.objects.len(), 1);
        for seed in 0..20 {
            let d = gen_standard(lvl(30), &p, seed).unwrap();
            check_geometry(&d, &p);
            for o in &d.objects {
                assert!(o.size >= p.radius_min() && o.size <= p.radius_max());
            }
        }
    }

    #[test]
    fn area_density_properties() {
        let p = GenerationParams::default();
        let d = gen_control_area_density(lvl(1), &p, 9).unwrap();
        assert!((d.objects[0].size - (p.area_total / PI).sqrt()).abs() < 1e-15);
        for n in NumerosityLevel::all() {
            let d = gen_control_area_density(n, &p, 11).unwrap();
            check_geometry(&d, &p);
            assert!(((d.total_area() - p.area_total) / p.area_total).abs() <= AREA_TOLERANCE);
            let r0 = d.objects[0].size;
            assert!(d.objects.iter().all(|o| o.shape == Shape::Circle && o.size == r0));
        }
        let ratio = p.placement_disc_area(lvl(16)) / p.placement_disc_area(lvl(4));
        assert_eq!(ratio, 4.0);
    }

    #[test]
    fn area_density_infeasible_when_disc_too_small() {
        let p = GenerationParams {
            area_total: 0.2,
            density_area_per_object: 0.01,
            ..Default::default()
        };
        let err = gen_control_area_density(lvl(2), &p, 0).unwrap_err();
        assert!(matches!(err, StimError::InfeasibleConstraint { .. }), "{err}");
    }

    #[test]
    fn shape_hull_hits_target() {
        let p = GenerationParams {
            hull_total: 0.09,
            ..Default::default()
        };
        // three objects is not a probed level; exercise the placement core
        let (objects, constrained) = shape_hull_objects(3, 1.0, &p, 5).unwrap();
        assert!(constrained);
        assert_eq!(objects.len(), 3);
        let a = objects_hull_area(&objects);
        assert!((0.0855..=0.0945).contains(&a), "{a}");

        let p = GenerationParams::default();
        for n in NumerosityLevel::all().filter(|n| n.value() >= 4) {
            let d = gen_control_shape_hull(n, &p, 21).unwrap();
            check_geometry(&d, &p);
            assert!(d.hull_constrained);
            assert!(((d.hull_area() - p.hull_total) / p.hull_total).abs() <= HULL_TOLERANCE);
        }
    }

    #[test]
    fn shape_hull_degenerate_counts_skip_constraint() {
        let p = GenerationParams::default();
        let d = gen_control_shape_hull(lvl(1), &p, 2).unwrap();
        assert_eq!(d.objects.len(), 1);
        assert!(!d.hull_constrained);
        assert!(!gen_control_shape_hull(lvl(2), &p, 2).unwrap().hull_constrained);
    }

    #[test]
    fn deterministic_in_seed() {
        let p = GenerationParams::default();
        let a = gen_control_shape_hull(lvl(10), &p, 77).unwrap();
        let b = gen_control_shape_hull(lvl(10), &p, 77).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = gen_control_shape_hull(lvl(10), &p, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn placement_failure_is_reported() {
        let p = GenerationParams {
            radius_mean: 0.2,
            radius_halfrange: 0.01,
            object_attempts: 20,
            max_rejection_attempts: 3,
            ..Default::default()
        };
        let err = gen_standard(lvl(30), &p, 0).unwrap_err();
        assert!(matches!(err, StimError::PlacementFailure { numerosity: 30, .. }));
    }

    #[test]
    fn invalid_params_rejected() {
        let p = GenerationParams {
            variation_scale: 0.5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = GenerationParams {
            variation_scale: 3.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(GenerationParams::with_variation(1.5).validate().is_ok());
    }
}
