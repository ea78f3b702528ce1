use std::path::Path;

use super::{ModuleError, RunContext, RunError};
use crate::net::{self, LabelMap, LabeledImages, ModelCheckpoint};
use crate::probe::svg::{bar_chart, line_chart, Series};
use crate::probe::{self, AccuracyReport, ProbeError, SweepResult};
use crate::stimgen::{gen_dataset, gen_proxy_dataset, Dataset, GenerationParams, NumerosityLevel, LEVELS, PROXY_CLASSES};

pub(crate) const PROXY_TASK: &str = "shape-size";

/// Two-column `metric,value` table.
pub(crate) fn write_summary(path: &Path, rows: &[(&str, String)]) -> Result<(), ModuleError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ModuleError::Io(e.to_string()))?;
    let io = |e: csv::Error| ModuleError::Io(e.to_string());
    w.write_record(["metric", "value"]).map_err(io)?;
    for (k, v) in rows {
        w.write_record([*k, v.as_str()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), ModuleError> {
    Ok(std::fs::write(path, text)?)
}

fn with_variation(base: &GenerationParams, scale: f64) -> GenerationParams {
    GenerationParams {
        variation_scale: scale,
        ..base.clone()
    }
}

fn level_names() -> Vec<String> {
    LEVELS.iter().map(|n| n.to_string()).collect()
}

/// The configured checkpoint, or a fresh numerosity model when none is set.
fn model_under_test(ctx: &mut RunContext) -> Result<ModelCheckpoint, RunError> {
    let cfg = ctx.config;
    if cfg.model.is_empty() {
        ctx.stage("init", |_| {
            net::init(cfg.architecture.clone(), LabelMap::numerosity(), cfg.init, cfg.seeds.init)
        })
    } else {
        let path = Path::new(&cfg.model).to_path_buf();
        let model = ctx.stage("load-model", |_| net::load_checkpoint(&path))?;
        ctx.add_input(&path)?;
        Ok(model)
    }
}

fn training_plot(ctx: &RunContext, history: &[net::EpochRecord]) -> Result<(), ModuleError> {
    let loss = Series {
        name: "train loss".into(),
        points: history.iter().map(|r| (r.epoch as f64, r.train_loss)).collect(),
    };
    write_text(&ctx.path("training_loss.svg"), &line_chart("Training loss", "epoch", "cross-entropy", &[loss], 0.0))?;
    let mut acc = vec![Series {
        name: "train".into(),
        points: history.iter().map(|r| (r.epoch as f64, r.train_acc)).collect(),
    }];
    if history.iter().all(|r| r.eval_acc.is_some()) {
        acc.push(Series {
            name: "test".into(),
            points: history.iter().map(|r| (r.epoch as f64, r.eval_acc.unwrap_or(f64::NAN))).collect(),
        });
    }
    write_text(&ctx.path("training_accuracy.svg"), &line_chart("Accuracy by epoch", "epoch", "accuracy", &acc, 1.0))
}

pub(crate) fn gen_stimuli(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let ds = ctx.stage("generate", |_| gen_dataset(cfg.data.export_per_cell, &cfg.stimulus, cfg.seeds.stimuli))?;
    ctx.stage("export", |c| ds.export(&c.path("stimuli")).map(|_| ()))
}

pub(crate) fn train_nu_net(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let train = ctx.stage("gen-train", |_| gen_dataset(cfg.data.train_per_cell, &cfg.stimulus, cfg.seeds.train_data))?;
    let test = ctx.stage("gen-test", |_| gen_dataset(cfg.data.test_per_cell, &cfg.stimulus, cfg.seeds.test_data))?;
    let model = ctx.stage("init", |_| {
        net::init(cfg.architecture.clone(), LabelMap::numerosity(), cfg.init, cfg.seeds.init)
    })?;
    let hyper = cfg.train.hyper(cfg.seeds.shuffle);
    let outcome = ctx.stage("train", |c| {
        let tr = LabeledImages::from_dataset(&train);
        let te = LabeledImages::from_dataset(&test);
        net::train(&model, &tr, &hyper, Some(&te), |r| {
            c.note(&format!(
                "epoch {:>3}  loss {:.4}  train {:.4}  test {:.4}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                r.eval_acc.unwrap_or(f64::NAN)
            ))
        })
    })?;
    ctx.stage("save", |c| {
        net::save_checkpoint(&outcome.model, &c.path("model.ckpt"))?;
        net::write_training_log(&outcome.history, &c.path("training_log.csv"))
    })?;
    let acc = ctx.stage("evaluate", |_| probe::evaluate_accuracy(&outcome.model, &test))?;
    ctx.stage("write-results", |c| -> Result<(), ModuleError> {
        probe::write_accuracy_csv(&acc, &c.path("accuracy_iid.csv"))?;
        write_summary(
            &c.path("summary.csv"),
            &[
                ("train_images", train.len().to_string()),
                ("test_images", test.len().to_string()),
                ("epochs", hyper.epochs.to_string()),
                ("final_train_loss", outcome.history.last().map_or(f64::NAN, |r| r.train_loss).to_string()),
                ("final_train_accuracy", outcome.final_train_accuracy.to_string()),
                ("test_accuracy", acc.overall.to_string()),
            ],
        )?;
        training_plot(c, &outcome.history)?;
        write_text(
            &c.path("accuracy.svg"),
            &bar_chart(
                "Test accuracy per number",
                "presented number",
                "accuracy",
                &level_names(),
                &[("i.i.d.".into(), acc.per_level.clone())],
                1.0,
            ),
        )
    })
}

pub(crate) fn train_proxy(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let data = ctx.stage("gen-proxy", |_| {
        gen_proxy_dataset(cfg.data.proxy_per_class, cfg.stimulus.resolution, cfg.seeds.proxy_data)
    })?;
    let model = ctx.stage("init", |_| {
        net::init(
            cfg.architecture.with_classes(PROXY_CLASSES),
            LabelMap::indexed(PROXY_TASK, PROXY_CLASSES),
            cfg.init,
            cfg.seeds.init,
        )
    })?;
    let hyper = cfg.train.hyper(cfg.seeds.shuffle);
    let outcome = ctx.stage("train", |c| {
        let tr = LabeledImages::from_images(data.iter().map(|s| (&s.image, s.class)));
        net::train(&model, &tr, &hyper, None, |r| {
            c.note(&format!("epoch {:>3}  loss {:.4}  train {:.4}", r.epoch, r.train_loss, r.train_acc))
        })
    })?;
    ctx.stage("save", |c| -> Result<(), ModuleError> {
        net::save_checkpoint(&outcome.model, &c.path("model.ckpt"))?;
        net::write_training_log(&outcome.history, &c.path("training_log.csv"))?;
        write_summary(
            &c.path("summary.csv"),
            &[
                ("classes", PROXY_CLASSES.to_string()),
                ("train_images", data.len().to_string()),
                ("epochs", hyper.epochs.to_string()),
                ("final_train_accuracy", outcome.final_train_accuracy.to_string()),
            ],
        )?;
        training_plot(c, &outcome.history)
    })
}

pub(crate) fn probe(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let model = model_under_test(ctx)?;
    let params = with_variation(&cfg.stimulus, cfg.probe.variation_scale);
    let resp = ctx.stage("record", |_| probe::record_responses(&model, cfg.probe.s, &params, cfg.seeds.probe))?;
    let (fraction, labels) = ctx.stage("anova", |_| {
        Ok::<_, ProbeError>(probe::selectivity_fraction(&resp, cfg.probe.alpha))
    })?;
    let curves = ctx.stage("tuning", |_| match probe::tuning_curves(&resp, &labels) {
        Err(ProbeError::NoSelectiveUnits) => Ok(Vec::new()),
        r => r,
    })?;
    ctx.stage("write-results", |c| -> Result<(), ModuleError> {
        let mut w = csv::Writer::from_path(c.path("selectivity.csv")).map_err(|e| ModuleError::Io(e.to_string()))?;
        let io = |e: csv::Error| ModuleError::Io(e.to_string());
        w.write_record(["unit", "selective", "reason"]).map_err(io)?;
        for (u, l) in labels.iter().enumerate() {
            w.write_record([u.to_string(), l.selective.to_string(), l.reason.name().to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        probe::write_tuning_csv(&curves, &c.path("tuning.csv"))?;
        let selective = labels.iter().filter(|l| l.selective).count();
        write_summary(
            &c.path("summary.csv"),
            &[
                ("s", cfg.probe.s.to_string()),
                ("units", resp.units().to_string()),
                ("selective_units", selective.to_string()),
                ("fraction_selective", fraction.to_string()),
            ],
        )?;
        let series: Vec<Series> = curves
            .iter()
            .map(|t| Series {
                name: format!("PN {} ({} units)", t.pn, t.n_units),
                points: LEVELS.iter().zip(&t.mean_response).map(|(&n, &m)| (n as f64, m)).collect(),
            })
            .collect();
        write_text(
            &c.path("tuning.svg"),
            &line_chart("Tuning curves of selective units", "number", "normalized response", &series, 1.0),
        )
    })
}

fn sweep_plot(sweeps: &[(&str, &SweepResult)]) -> String {
    let series: Vec<Series> = sweeps
        .iter()
        .map(|(name, s)| Series {
            name: name.to_string(),
            points: s.s_values.iter().zip(&s.fraction_selective).map(|(&s, &f)| (s as f64, f)).collect(),
        })
        .collect();
    line_chart("Selective fraction vs. sample size", "images per cell (s)", "fraction selective", &series, 0.0)
}

pub(crate) fn sweep(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let model = model_under_test(ctx)?;
    let params = with_variation(&cfg.stimulus, cfg.probe.variation_scale);
    let result = ctx.stage("sweep", |c| {
        let mut out = SweepResult {
            s_values: Vec::new(),
            fraction_selective: Vec::new(),
            labels: Vec::new(),
        };
        for &s in &cfg.probe.s_values {
            let r = probe::sample_size_sweep(&model, &[s], &params, cfg.seeds.probe, cfg.probe.alpha)?;
            c.note(&format!("s = {s:>3}  fraction {:.5}", r.fraction_selective[0]));
            out.s_values.push(s);
            out.fraction_selective.push(r.fraction_selective[0]);
        }
        Ok::<_, ProbeError>(out)
    })?;
    ctx.stage("write-results", |c| -> Result<(), ModuleError> {
        probe::write_sweep_csv(&result, &c.path("sweep.csv"))?;
        write_text(&c.path("sweep.svg"), &sweep_plot(&[("model", &result)]))
    })
}

struct Evaluation {
    accuracy: AccuracyReport,
    dists: Vec<probe::PerceivedDistribution>,
    intervals: Vec<(u32, usize)>,
}

fn evaluate(model: &ModelCheckpoint, ds: &Dataset, coverage: f64) -> Result<Evaluation, ProbeError> {
    let preds = probe::predict_dataset(model, ds)?;
    let accuracy = probe::accuracy_from_predictions(ds, &preds);
    let dists = NumerosityLevel::all()
        .map(|n| probe::distribution_from_predictions(ds, &preds, n))
        .collect::<Result<Vec<_>, _>>()?;
    let intervals = dists
        .iter()
        .map(|d| Ok((d.presented.value(), probe::estimation_interval_length(d, coverage)?)))
        .collect::<Result<Vec<_>, ProbeError>>()?;
    Ok(Evaluation {
        accuracy,
        dists,
        intervals,
    })
}

pub(crate) fn generalize(ctx: &mut RunContext) -> Result<(), RunError> {
    let cfg = ctx.config;
    let model = model_under_test(ctx)?;
    let ood_params = with_variation(&cfg.stimulus, cfg.ood_variation_scale);
    let iid = ctx.stage("gen-test", |_| gen_dataset(cfg.data.test_per_cell, &cfg.stimulus, cfg.seeds.test_data))?;
    let ood = ctx.stage("gen-ood", |_| gen_dataset(cfg.data.test_per_cell, &ood_params, cfg.seeds.ood_data))?;
    let e_iid = ctx.stage("evaluate-iid", |_| evaluate(&model, &iid, cfg.probe.coverage))?;
    let e_ood = ctx.stage("evaluate-ood", |_| evaluate(&model, &ood, cfg.probe.coverage))?;
    let s_values = &cfg.probe.s_values;
    let (alpha, seed) = (cfg.probe.alpha, cfg.seeds.probe);
    let sw_iid = ctx.stage("sweep-iid", |_| probe::sample_size_sweep(&model, s_values, &cfg.stimulus, seed, alpha))?;
    let sw_ood = ctx.stage("sweep-ood", |_| probe::sample_size_sweep(&model, s_values, &ood_params, seed, alpha))?;
    ctx.stage("write-results", |c| -> Result<(), ModuleError> {
        for (tag, e) in [("iid", &e_iid), ("ood", &e_ood)] {
            probe::write_accuracy_csv(&e.accuracy, &c.path(&format!("accuracy_{tag}.csv")))?;
            probe::write_distribution_csv(&e.dists, &c.path(&format!("distribution_{tag}.csv")))?;
            probe::write_interval_csv(&e.intervals, &c.path(&format!("intervals_{tag}.csv")))?;
        }
        probe::write_sweep_csv(&sw_iid, &c.path("sweep_iid.csv"))?;
        probe::write_sweep_csv(&sw_ood, &c.path("sweep_ood.csv"))?;
        write_summary(
            &c.path("summary.csv"),
            &[
                ("accuracy_iid", e_iid.accuracy.overall.to_string()),
                ("accuracy_ood", e_ood.accuracy.overall.to_string()),
                ("accuracy_drop", (e_iid.accuracy.overall - e_ood.accuracy.overall).to_string()),
                ("ood_variation_scale", cfg.ood_variation_scale.to_string()),
            ],
        )?;
        write_text(
            &c.path("accuracy.svg"),
            &bar_chart(
                "Accuracy per number",
                "presented number",
                "accuracy",
                &level_names(),
                &[
                    ("i.i.d.".into(), e_iid.accuracy.per_level.clone()),
                    ("shifted".into(), e_ood.accuracy.per_level.clone()),
                ],
                1.0,
            ),
        )?;
        let lengths = |e: &Evaluation| e.intervals.iter().map(|&(_, l)| l as f64).collect::<Vec<_>>();
        write_text(
            &c.path("intervals.svg"),
            &bar_chart(
                &format!("{:.0}% estimation interval length", cfg.probe.coverage * 100.0),
                "presented number",
                "labels in interval",
                &level_names(),
                &[("i.i.d.".into(), lengths(&e_iid)), ("shifted".into(), lengths(&e_ood))],
                1.0,
            ),
        )?;
        write_text(&c.path("sweep.svg"), &sweep_plot(&[("i.i.d. stimuli", &sw_iid), ("shifted stimuli", &sw_ood)]))
    })
}
