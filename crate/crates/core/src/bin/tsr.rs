use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tsr_core::pipeline::{
    build_gateway, cmd_describe, cmd_detect, cmd_evaluate, cmd_recognize, BackendKind, RunConfig,
    SampleStatus,
};
use tsr_core::recognizer::Variant;

/// Traffic sign extraction and MLLM-based recognition.
#[derive(Parser)]
#[command(name = "tsr", version)]
struct Cli {
    /// Run configuration (key = value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides output_dir.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Backend: live or mock.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Strategy: full, baseline or baseline_o.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Seed for subset sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluate on a random subset of this many samples.
    #[arg(long, global = true)]
    subset: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract masks, detections and sign crops.
    Detect,
    /// Generate class descriptions from template images.
    Describe,
    /// Recognize crops (or sign / road images) with the chosen strategy.
    Recognize,
    /// Compute Top-k reports over all recognized strategies.
    Evaluate,
    /// Write the bundled 3-class synthetic dataset and a mock run config.
    Synth {
        /// Target directory.
        dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config is required for this command")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(b) = &cli.backend {
        cfg.backend = b.parse::<BackendKind>()?;
    }
    if let Some(s) = &cli.strategy {
        cfg.strategy = s.parse::<Variant>()?;
    }
    if let Some(n) = cli.subset {
        cfg.subset_n = Some(n);
    }
    if let Some(seed) = cli.seed {
        cfg.subset_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Command::Synth { dir } = &cli.command {
        let paths = tsr_core::synthetic::write_dataset(dir)?;
        let conf = paths.root.join("run.conf");
        std::fs::write(
            &conf,
            "catalog = catalog.tsv\nmanifest = manifest.tsv\nlegend = legend.txt\n\
             output_dir = run\ndataset_name = synthetic\nbackend = mock\n",
        )
        .with_context(|| conf.display().to_string())?;
        println!("wrote synthetic dataset to {}", paths.root.display());
        println!("config: {}", conf.display());
        return Ok(true);
    }

    let cfg = load_config(cli)?;
    match cli.command {
        Command::Detect => {
            let summary = cmd_detect(&cfg)?;
            if summary.samples.is_empty() {
                println!("nothing to detect");
                return Ok(true);
            }
            for (id, status) in &summary.samples {
                match status {
                    SampleStatus::Ok { detections } => println!("{id}\t{detections}"),
                    SampleStatus::Failed(msg) => println!("{id}\tFAILED\t{msg}"),
                }
            }
            println!(
                "{} sample(s), {} detection(s), {} failed",
                summary.samples.len(),
                summary.total_detections(),
                summary.failed()
            );
            Ok(summary.failed() == 0)
        }
        Command::Describe => {
            let gw = build_gateway(&cfg)?;
            let s = cmd_describe(&cfg, &gw)?;
            println!(
                "{} description(s), {} backend call(s), {} hand correction(s) kept",
                s.classes, s.backend_calls, s.preserved_corrections
            );
            Ok(true)
        }
        Command::Recognize => {
            let gw = build_gateway(&cfg)?;
            let s = cmd_recognize(&cfg, &gw)?;
            println!(
                "{}: {} record(s), {} reused, {} backend call(s), {} without a ranking -> {}",
                s.strategy.as_str(),
                s.records,
                s.skipped,
                s.backend_calls,
                s.failed,
                s.results_file.display()
            );
            Ok(true)
        }
        Command::Evaluate => {
            let s = cmd_evaluate(&cfg)?;
            print!("{}", s.table);
            println!("report: {}", s.report_file.display());
            Ok(true)
        }
        Command::Synth { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
