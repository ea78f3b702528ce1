use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DotDisplay, NumerosityLevel, StimError, StimulusSetKind};

/// A square binary raster of a display (foreground 1, background 0),
/// row-major with row 0 at field y = 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusImage {
    pub resolution: usize,
    pub pixels: Vec<u8>,
    pub numerosity: NumerosityLevel,
    pub set_kind: StimulusSetKind,
    pub seed: u64,
}

impl StimulusImage {
    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    /// Binary PGM (P5), foreground white.
    pub fn write_pgm(&self, path: &Path) -> Result<(), StimError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P5\n{} {}\n255\n", self.resolution, self.resolution)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| if p != 0 { 255 } else { 0 }).collect();
        f.write_all(&bytes)?;
        f.flush()?;
        Ok(())
    }
}

/// Rasterizes a display: a pixel is foreground iff its center lies inside
/// some object.
pub fn rasterize(display: &DotDisplay, resolution: usize) -> Result<StimulusImage, StimError> {
    if resolution < 32 {
        return Err(StimError::InvalidArgument(format!(
            "resolution {resolution} is below the minimum of 32"
        )));
    }
    let res = resolution as f64;
    let mut pixels = vec![0u8; resolution * resolution];
    for obj in &display.objects {
        let lo_col = ((obj.center[0] - obj.size) * res - 0.5).floor().max(0.0) as usize;
        let hi_col = (((obj.center[0] + obj.size) * res - 0.5).ceil().max(0.0) as usize).min(resolution - 1);
        let lo_row = ((obj.center[1] - obj.size) * res - 0.5).floor().max(0.0) as usize;
        let hi_row = (((obj.center[1] + obj.size) * res - 0.5).ceil().max(0.0) as usize).min(resolution - 1);
        for row in lo_row..=hi_row {
            let y = (row as f64 + 0.5) / res;
            for col in lo_col..=hi_col {
                let x = (col as f64 + 0.5) / res;
                if obj.contains([x, y]) {
                    pixels[row * resolution + col] = 1;
                }
            }
        }
    }
    Ok(StimulusImage {
        resolution,
        pixels,
        numerosity: display.numerosity,
        set_kind: display.set_kind,
        seed: display.seed,
    })
}
