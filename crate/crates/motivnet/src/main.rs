use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use motivnet::error::{Error, Result};
use motivnet::harness;
use motivnet::trainer;
use motivnet::zoo;

#[derive(Parser)]
#[command(name = "motivnet", about = "Dual-model training with conditional capacity expansion")]
struct Cli {
    /// Override the seed(s) in the config with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where run directories and reports are written.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Directory with dataset files (overrides the config's dir).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Worker threads for parallel execution (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run: the config's first variant and first seed.
    Train { config: PathBuf },
    /// Execute every (variant, seed) cell of an experiment spec.
    Experiment { spec: PathBuf },
    /// Print the per-forward FLOPs of an architecture config.
    Flops { archconfig: PathBuf },
    /// Regenerate report.txt/report.csv from persisted run directories.
    Report { spec_dir: PathBuf },
    /// Emit an SVG loss/switch plot from a trace CSV.
    Plot {
        trace: PathBuf,
        /// Output file (defaults to the trace path with .svg).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle suites.
    Selftest,
}

fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn apply_overrides(cli: &Cli, file: &mut harness::ExperimentFile) {
    if let Some(seed) = cli.seed {
        file.run.seeds = vec![seed];
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train { config } => {
            let mut file = harness::load_experiment(config)?;
            apply_overrides(cli, &mut file);
            file.validate()?;
            let variant = file.variants[0].clone();
            let seed = file.run.seeds[0];
            let data = file.dataset.load(cli.data_dir.as_deref())?;
            let run_config = file.run_config(&variant, seed)?;
            let report = trainer::train(&run_config, &data)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            let dir = cli.out_dir.join(format!("{}-s{seed}", variant.name));
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("trace.csv"), trainer::trace_to_csv(&report.trace))?;
            std::fs::write(dir.join("base.ckpt"), &report.base_checkpoint)?;
            if let Some(ckpt) = &report.mot_checkpoint {
                std::fs::write(dir.join("motivated.ckpt"), ckpt)?;
            }
            println!(
                "{}: base acc {:.2}%{}  activations {:?}{}",
                variant.name,
                report.base_eval_acc * 100.0,
                report
                    .mot_eval_acc
                    .map(|a| format!(", motivated acc {:.2}%", a * 100.0))
                    .unwrap_or_default(),
                report.activations,
                if report.valid { "" } else { "  [ABORTED]" }
            );
            if let Some(reason) = &report.abort_reason {
                eprintln!("aborted: {reason}");
            }
            Ok(!report.valid)
        }
        Command::Experiment { spec } => {
            let mut file = harness::load_experiment(spec)?;
            apply_overrides(cli, &mut file);
            let outcome = harness::run_experiment(&file, cli.data_dir.as_deref(), &cli.out_dir)?;
            print!("{}", outcome.report_text);
            Ok(outcome.any_aborted)
        }
        Command::Flops { archconfig } => {
            let text = std::fs::read_to_string(archconfig)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", archconfig.display())))?;
            let config: zoo::ArchConfig =
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            println!("{}", zoo::flops_forward(&config)?);
            Ok(false)
        }
        Command::Report { spec_dir } => {
            let (text, csv) = harness::report_from_dir(spec_dir)?;
            std::fs::write(spec_dir.join("report.txt"), &text)?;
            std::fs::write(spec_dir.join("report.csv"), &csv)?;
            print!("{text}");
            Ok(false)
        }
        Command::Plot { trace, out } => {
            let csv = std::fs::read_to_string(trace)
                .map_err(|e| Error::Data(format!("cannot read {}: {e}", trace.display())))?;
            let svg = harness::plot_trace_svg(&csv)?;
            let out = out
                .clone()
                .unwrap_or_else(|| trace.with_extension("svg"));
            std::fs::write(&out, svg)?;
            println!("wrote {}", out.display());
            Ok(false)
        }
        Command::Selftest => {
            let mut failed = false;
            for (name, ok, detail) in harness::selftest()? {
                println!("{} {name}: {detail}", if ok { "ok  " } else { "FAIL" });
                failed |= !ok;
            }
            Ok(failed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
