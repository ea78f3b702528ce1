use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::{RunContext, RunError, RunManifest};
use crate::probe::svg::{bar_chart, line_chart, Series};
use crate::stimgen::LEVELS;

pub const REPORT_FILE: &str = "report.md";

type Table = Vec<BTreeMap<String, String>>;

fn read_csv(path: &Path) -> Result<Table, RunError> {
    let missing = |e: &dyn std::fmt::Display| RunError::MissingArtifacts(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| missing(&e))?;
    let headers = r.headers().map_err(|e| missing(&e))?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| missing(&e))?;
            Ok(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "n/a".into()
    }
}

struct LoadedRun {
    name: String,
    dir: PathBuf,
    manifest: RunManifest,
}

impl LoadedRun {
    fn csv(&self, name: &str) -> Result<Option<Table>, RunError> {
        let path = self.dir.join(name);
        if path.exists() {
            read_csv(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn load_runs(runs: &[PathBuf]) -> Result<Vec<LoadedRun>, RunError> {
    if runs.is_empty() {
        return Err(RunError::MissingArtifacts("no run directories given".into()));
    }
    let mut out = Vec::new();
    for (k, dir) in runs.iter().enumerate() {
        let manifest = RunManifest::load(dir)?;
        for csv in manifest.config.recipe.required_csvs() {
            if !dir.join(csv).is_file() {
                return Err(RunError::MissingArtifacts(format!("{} lacks {csv}", dir.display())));
            }
        }
        let base = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(LoadedRun {
            name: format!("{}:{}", k + 1, if base.is_empty() { "run" } else { &base }),
            dir: dir.clone(),
            manifest,
        });
    }
    Ok(out)
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

/// Writes `report.md` and its comparison plots into `out_dir`; returns the
/// written paths. Every run must hold a manifest and the CSVs its recipe
/// requires.
pub fn report(runs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let runs = load_runs(runs)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut md = String::from("# Run report\n\n");

    let header: Vec<String> = ["run", "recipe", "seed", "model", "directory"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let c = &r.manifest.config;
            vec![
                r.name.clone(),
                c.recipe.name().to_string(),
                c.seed.to_string(),
                if c.model.is_empty() { "fresh init".into() } else { c.model.clone() },
                r.dir.display().to_string(),
            ]
        })
        .collect();
    md_table(&mut md, &header, &rows);

    // Summary metrics of every run that has them.
    let mut summaries = Vec::new();
    for r in &runs {
        if let Some(t) = r.csv("summary.csv")? {
            for row in t {
                summaries.push(vec![
                    r.name.clone(),
                    row.get("metric").cloned().unwrap_or_default(),
                    row.get("value").cloned().unwrap_or_default(),
                ]);
            }
        }
    }
    if !summaries.is_empty() {
        md.push_str("## Summary metrics\n\n");
        md_table(&mut md, &["run".into(), "metric".into(), "value".into()], &summaries);
    }

    // Sweeps, overlaid.
    let mut sweeps: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &runs {
        for (file, tag) in [("sweep.csv", ""), ("sweep_iid.csv", " i.i.d."), ("sweep_ood.csv", " shifted")] {
            if let Some(t) = r.csv(file)? {
                sweeps.push((format!("{}{tag}", r.name), t.iter().map(|row| (num(row, "s"), num(row, "fraction"))).collect()));
            }
        }
    }
    if !sweeps.is_empty() {
        let mut s_all: Vec<f64> = sweeps.iter().flat_map(|(_, p)| p.iter().map(|x| x.0)).collect();
        s_all.sort_by(f64::total_cmp);
        s_all.dedup();
        let header: Vec<String> = std::iter::once("s".to_string()).chain(sweeps.iter().map(|(n, _)| n.clone())).collect();
        let rows: Vec<Vec<String>> = s_all
            .iter()
            .map(|&s| {
                std::iter::once(format!("{s}"))
                    .chain(sweeps.iter().map(|(_, p)| p.iter().find(|x| x.0 == s).map_or("".into(), |x| fmt(x.1))))
                    .collect()
            })
            .collect();
        md.push_str("## Selective fraction vs. sample size\n\n");
        md_table(&mut md, &header, &rows);
        let series: Vec<Series> = sweeps.iter().map(|(n, p)| Series { name: n.clone(), points: p.clone() }).collect();
        let path = out_dir.join("sweep_comparison.svg");
        std::fs::write(
            &path,
            line_chart("Selective fraction vs. sample size", "images per cell (s)", "fraction selective", &series, 0.0),
        )?;
        md.push_str("![selective fraction vs. sample size](sweep_comparison.svg)\n\n");
        written.push(path);
    }

    // Per-number accuracy, side by side.
    let mut accs: Vec<(String, Vec<f64>)> = Vec::new();
    for r in &runs {
        for (file, tag) in [("accuracy_iid.csv", "i.i.d."), ("accuracy_ood.csv", "shifted")] {
            if let Some(t) = r.csv(file)? {
                let per: Vec<f64> = LEVELS
                    .iter()
                    .map(|&n| t.iter().find(|row| num(row, "level") == n as f64).map_or(f64::NAN, |row| num(row, "acc")))
                    .collect();
                accs.push((format!("{} {tag}", r.name), per));
            }
        }
    }
    if !accs.is_empty() {
        let header: Vec<String> = std::iter::once("number".to_string()).chain(accs.iter().map(|(n, _)| n.clone())).collect();
        let rows: Vec<Vec<String>> = LEVELS
            .iter()
            .enumerate()
            .map(|(i, n)| std::iter::once(n.to_string()).chain(accs.iter().map(|(_, v)| fmt(v[i]))).collect())
            .collect();
        md.push_str("## Accuracy per presented number\n\n");
        md_table(&mut md, &header, &rows);
        let cats: Vec<String> = LEVELS.iter().map(|n| n.to_string()).collect();
        let path = out_dir.join("accuracy_comparison.svg");
        std::fs::write(&path, bar_chart("Accuracy per number", "presented number", "accuracy", &cats, &accs, 1.0))?;
        md.push_str("![accuracy per number](accuracy_comparison.svg)\n\n");
        written.push(path);
    }

    // Estimation intervals.
    let mut ints: Vec<(String, Vec<String>)> = Vec::new();
    for r in &runs {
        for (file, tag) in [("intervals_iid.csv", "i.i.d."), ("intervals_ood.csv", "shifted")] {
            if let Some(t) = r.csv(file)? {
                let per = LEVELS
                    .iter()
                    .map(|&n| {
                        t.iter()
                            .find(|row| num(row, "presented") == n as f64)
                            .and_then(|row| row.get("length").cloned())
                            .unwrap_or_default()
                    })
                    .collect();
                ints.push((format!("{} {tag}", r.name), per));
            }
        }
    }
    if !ints.is_empty() {
        let header: Vec<String> = std::iter::once("number".to_string()).chain(ints.iter().map(|(n, _)| n.clone())).collect();
        let rows: Vec<Vec<String>> = LEVELS
            .iter()
            .enumerate()
            .map(|(i, n)| std::iter::once(n.to_string()).chain(ints.iter().map(|(_, v)| v[i].clone())).collect())
            .collect();
        md.push_str("## Estimation interval length (labels)\n\n");
        md_table(&mut md, &header, &rows);
    }

    // Training curves.
    let mut losses = Vec::new();
    for r in &runs {
        if let Some(t) = r.csv("training_log.csv")? {
            losses.push(Series {
                name: r.name.clone(),
                points: t.iter().map(|row| (num(row, "epoch"), num(row, "train_loss"))).collect(),
            });
        }
    }
    if !losses.is_empty() {
        let path = out_dir.join("training_comparison.svg");
        std::fs::write(&path, line_chart("Training loss", "epoch", "cross-entropy", &losses, 0.0))?;
        md.push_str("## Training loss\n\n![training loss](training_comparison.svg)\n\n");
        written.push(path);
    }

    let path = out_dir.join(REPORT_FILE);
    std::fs::write(&path, md)?;
    written.push(path);
    Ok(written)
}

pub(crate) fn report_into(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let t = std::time::Instant::now();
    let written = report(&cfg.runs, &ctx.out)?;
    for run in &cfg.runs {
        ctx.add_input(&run.join(super::MANIFEST_FILE))?;
    }
    ctx.note(&format!("[report] wrote {} files in {:.1}s", written.len(), t.elapsed().as_secs_f64()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_list_is_missing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(&[], dir.path()), Err(RunError::MissingArtifacts(_))));
    }

    #[test]
    fn run_without_manifest_is_missing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let err = report(&[dir.path().to_path_buf()], &dir.path().join("r")).unwrap_err();
        assert!(matches!(err, RunError::MissingArtifacts(m) if m.contains("manifest")));
    }
}
