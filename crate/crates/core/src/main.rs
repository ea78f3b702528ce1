use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use numprobe::runner::{load_config, run_with_progress, ConfigSources, Recipe};

/// Numerosity probing experiments: stimuli, training, unit probing, reports.
#[derive(Parser)]
#[command(name = "numprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; missing keys take the recipe defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; re-derives every per-step seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (must be empty or absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to load (probe, sweep, generalize).
    #[arg(long)]
    model: Option<PathBuf>,
    /// `dotted.key=value`, applied last; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and export a balanced stimulus set.
    GenStimuli {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        per_cell: Option<usize>,
        #[arg(long)]
        variation_scale: Option<f64>,
    },
    /// Train the numerosity network and report test accuracy.
    Train(Common),
    /// Train on the shape-recognition proxy task.
    TrainProxy(Common),
    /// Selectivity and tuning curves at one sample size.
    Probe(Common),
    /// Selective fraction across sample sizes.
    Sweep(Common),
    /// Accuracy, perceived distributions and sweeps under a size shift.
    Generalize(Common),
    /// Summarize finished runs.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories to compare.
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (recipe, common, mut extra) = match cli.command {
        Command::GenStimuli {
            common,
            per_cell,
            variation_scale,
        } => {
            let mut extra = Vec::new();
            if let Some(k) = per_cell {
                extra.push(format!("data.export_per_cell={k}"));
            }
            if let Some(x) = variation_scale {
                extra.push(format!("stimulus.variation_scale={x}"));
            }
            (Recipe::GenStimuli, common, extra)
        }
        Command::Train(c) => (Recipe::TrainNuNet, c, Vec::new()),
        Command::TrainProxy(c) => (Recipe::TrainProxy, c, Vec::new()),
        Command::Probe(c) => (Recipe::Probe, c, Vec::new()),
        Command::Sweep(c) => (Recipe::Sweep, c, Vec::new()),
        Command::Generalize(c) => (Recipe::Generalize, c, Vec::new()),
        Command::Report { common, runs } => {
            let list: Vec<String> = runs.iter().map(|r| format!("{:?}", r.to_string_lossy())).collect();
            let extra = if runs.is_empty() { Vec::new() } else { vec![format!("runs=[{}]", list.join(", "))] };
            (Recipe::Report, common, extra)
        }
    };
    if let Some(m) = &common.model {
        extra.push(format!("model={:?}", m.to_string_lossy()));
    }
    extra.extend(common.overrides.iter().cloned());

    let config = match load_config(
        recipe,
        &ConfigSources {
            file: common.config.as_deref(),
            seed: common.seed,
            out_dir: common.out.as_deref(),
            overrides: &extra,
        },
    ) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if common.print_config {
        match config.to_toml() {
            Ok(t) => {
                print!("{t}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    match run_with_progress(&config, &mut |line| eprintln!("{line}")) {
        Ok(m) => {
            println!(
                "{} finished: {} files in {}",
                recipe.name(),
                m.artifacts.len() + 1,
                config.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
