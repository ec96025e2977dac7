use std::path::PathBuf;
use std::process::ExitCode;

use abp::config::ExperimentConfig;
use abp::dynamics::Variant;
use abp::harness::{load_config, load_manifest_config, run_experiment};
use clap::{Parser, Subcommand, ValueEnum};

/// Adaptive biasing potential experiments on the flat torus.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        /// TOML config file, or a manifest.json from an earlier run.
        config: Option<PathBuf>,
        /// Built-in experiment instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Output directory (defaults to the config's, then `runs/<name>`).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Replace the configured seeds.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<u64>>,
        /// Only run these variants.
        #[arg(long, value_enum, value_delimiter = ',')]
        variant: Option<Vec<VariantArg>>,
        /// Evaluate the acceptance thresholds and set the exit code.
        #[arg(long)]
        check: bool,
    },
    /// Print a built-in experiment config as TOML.
    Preset {
        name: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Unbiased,
    Star,
    Abp,
    AbpTimeChanged,
    Frozen,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Unbiased => Variant::Unbiased,
            VariantArg::Star => Variant::Star,
            VariantArg::Abp => Variant::Abp,
            VariantArg::AbpTimeChanged => Variant::AbpTimeChanged,
            VariantArg::Frozen => Variant::Frozen,
        }
    }
}

fn configure_threads() -> Result<(), String> {
    if let Ok(n) = std::env::var("ABP_THREADS") {
        let n: usize = n.parse().map_err(|_| format!("ABP_THREADS must be a positive integer, got `{n}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Preset { name } => {
            match name {
                Some(n) => print!("{}", ExperimentConfig::builtin(&n).map_err(|e| e.to_string())?.to_toml()),
                None => ExperimentConfig::builtin_names().iter().for_each(|n| println!("{n}")),
            }
            Ok(0)
        }
        Command::Run {
            config,
            preset,
            out,
            seed,
            variant,
            check,
        } => {
            configure_threads()?;
            let mut cfg = match (config, preset) {
                (Some(p), _) if p.extension().is_some_and(|e| e == "json") => load_manifest_config(&p),
                (Some(p), _) => load_config(&p),
                (None, Some(name)) => ExperimentConfig::builtin(&name),
                (None, None) => return Err("give a config file or --preset".into()),
            }
            .map_err(|e| e.to_string())?;
            if let Some(seeds) = seed {
                cfg.seed = None;
                cfg.seeds = Some(seeds);
            }
            if let Some(vs) = variant {
                cfg.variants = vs.into_iter().map(Variant::from).collect();
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let outcome = run_experiment(&cfg, &dir, check).map_err(|e| e.to_string())?;
            for row in &outcome.report.rows {
                let r = &row.result;
                println!(
                    "{} {:<28} {:<40} value={:.4e} threshold={:.4e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    row.run,
                    r.criterion,
                    r.value,
                    r.threshold
                );
            }
            println!("artifacts written to {}", outcome.output_dir.display());
            Ok(outcome.exit_code)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
