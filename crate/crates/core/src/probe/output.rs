use std::path::Path;

use super::{AccuracyReport, PerceivedDistribution, ProbeError, SweepResult, TuningCurve};
use crate::stimgen::LEVELS;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ProbeError> {
    Ok(csv::Writer::from_path(path)?)
}

/// Columns: s, fraction.
pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<(), ProbeError> {
    let mut w = writer(path)?;
    w.write_record(["s", "fraction"])?;
    for (s, f) in sweep.s_values.iter().zip(&sweep.fraction_selective) {
        w.write_record([s.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: pn, level, mean, se, n_units.
pub fn write_tuning_csv(curves: &[TuningCurve], path: &Path) -> Result<(), ProbeError> {
    let mut w = writer(path)?;
    w.write_record(["pn", "level", "mean", "se", "n_units"])?;
    for c in curves {
        for (i, level) in LEVELS.iter().enumerate() {
            w.write_record([
                c.pn.value().to_string(),
                level.to_string(),
                c.mean_response[i].to_string(),
                c.se[i].to_string(),
                c.n_units.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: level, acc.
pub fn write_accuracy_csv(acc: &AccuracyReport, path: &Path) -> Result<(), ProbeError> {
    let mut w = writer(path)?;
    w.write_record(["level", "acc"])?;
    for (level, a) in LEVELS.iter().zip(&acc.per_level) {
        w.write_record([level.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: presented, label, mass.
pub fn write_distribution_csv(dists: &[PerceivedDistribution], path: &Path) -> Result<(), ProbeError> {
    let mut w = writer(path)?;
    w.write_record(["presented", "label", "mass"])?;
    for d in dists {
        for (label, m) in LEVELS.iter().zip(&d.mass) {
            w.write_record([d.presented.value().to_string(), label.to_string(), m.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: presented, length.
pub fn write_interval_csv(rows: &[(u32, usize)], path: &Path) -> Result<(), ProbeError> {
    let mut w = writer(path)?;
    w.write_record(["presented", "length"])?;
    for (n, len) in rows {
        w.write_record([n.to_string(), len.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
