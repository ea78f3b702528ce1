use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    generate, rasterize, GenerationParams, NumerosityLevel, StimError, StimulusImage,
    StimulusSetKind,
};

/// One labelled stimulus with its geometric summary.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: StimulusImage,
    pub numerosity: NumerosityLevel,
    pub set_kind: StimulusSetKind,
    pub replicate: usize,
    pub seed: u64,
    pub total_area: f64,
    pub hull_area: f64,
}

/// A balanced stimulus set: `per_cell` samples for every (set, numerosity)
/// cell, ordered by set, then numerosity, then replicate.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub per_cell: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples of one numerosity level.
    pub fn level(&self, n: NumerosityLevel) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.numerosity == n)
    }

    /// Writes one PGM per sample plus `manifest.csv` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>, StimError> {
        std::fs::create_dir_all(dir)?;
        let manifest = dir.join("manifest.csv");
        let mut w = csv::Writer::from_path(&manifest).map_err(|e| StimError::Io(e.to_string()))?;
        w.write_record([
            "seed",
            "set_kind",
            "numerosity",
            "replicate",
            "file_path",
            "total_area",
            "hull_area",
        ])
        .map_err(|e| StimError::Io(e.to_string()))?;
        let mut written = Vec::with_capacity(self.samples.len() + 1);
        for s in &self.samples {
            let name = format!("{}_{}_{}.pgm", s.set_kind.name(), s.numerosity, s.replicate);
            let path = dir.join(&name);
            s.image.write_pgm(&path)?;
            w.write_record([
                s.seed.to_string(),
                s.set_kind.name().to_string(),
                s.numerosity.to_string(),
                s.replicate.to_string(),
                name,
                format!("{:.8}", s.total_area),
                format!("{:.8}", s.hull_area),
            ])
            .map_err(|e| StimError::Io(e.to_string()))?;
            written.push(path);
        }
        w.flush()?;
        written.push(manifest);
        Ok(written)
    }
}

/// splitmix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-image seed, a function of the master seed and the image's cell and
/// replicate index only.
pub fn derive_seed(master: u64, set: StimulusSetKind, n: NumerosityLevel, replicate: usize) -> u64 {
    let mut h = mix(master);
    h = mix(h ^ set.index() as u64);
    h = mix(h ^ n.value() as u64);
    mix(h ^ replicate as u64)
}

/// Generates `per_cell` images for each of the 16 × 3 cells.
pub fn gen_dataset(
    per_cell: usize,
    params: &GenerationParams,
    master_seed: u64,
) -> Result<Dataset, StimError> {
    if per_cell == 0 {
        return Err(StimError::InvalidArgument("per_cell must be at least 1".into()));
    }
    params.validate()?;
    let jobs: Vec<(StimulusSetKind, NumerosityLevel, usize)> = StimulusSetKind::ALL
        .iter()
        .flat_map(|&set| {
            NumerosityLevel::all().flat_map(move |n| (0..per_cell).map(move |r| (set, n, r)))
        })
        .collect();
    let samples = jobs
        .into_par_iter()
        .map(|(set, n, replicate)| {
            let seed = derive_seed(master_seed, set, n, replicate);
            let display = generate(n, set, params, seed)?;
            let image = rasterize(&display, params.resolution)?;
            Ok(Sample {
                image,
                numerosity: n,
                set_kind: set,
                replicate,
                seed,
                total_area: display.total_area(),
                hull_area: display.hull_area(),
            })
        })
        .collect::<Result<Vec<_>, StimError>>()?;
    Ok(Dataset { per_cell, samples })
}
