use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qopt::config::RunConfig;
use qopt::harness::{self, Selection};
use qopt::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "qopt", version, about = "Per-image JPEG quantization table optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train tables for one image and export the best candidate per MS-SSIM bin.
    Optimize {
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Run directory.
        #[arg(long, default_value = "qopt-run")]
        out: PathBuf,
    },
    /// Pick one candidate of a finished run.
    Select {
        run_dir: PathBuf,
        /// Choose automatically with --threshold instead of prompting.
        #[arg(long)]
        non_interactive: bool,
        /// Minimum MS-SSIM for the automatic choice.
        #[arg(long, default_value_t = 0.97)]
        threshold: f64,
        /// Destination file (default: final.jpg in the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode an image with a stored table set.
    Encode {
        input: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score files against the input and the scaled standard tables.
    Compare {
        input: PathBuf,
        candidates: Vec<PathBuf>,
        #[arg(long, default_value = "compare.csv")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Flat key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    top_frac: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bins_width: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        let overrides = [
            ("samples", self.samples.map(|v| v.to_string())),
            ("top_frac", self.top_frac.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("bins_width", self.bins_width.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize { input, run, out } => {
            let cfg = run.resolve()?;
            let outcome = harness::cmd_optimize(&input, &cfg, &out)?;
            println!(
                "{} candidate(s) in {}, {} dropped",
                outcome.candidates.len(),
                out.display(),
                outcome.record.bins.dropped
            );
            for c in &outcome.candidates {
                println!("  {:>9} bytes  ms-ssim {:.5}  {}", c.size_bytes, c.ms_ssim, c.jpeg);
            }
        }
        Command::Select {
            run_dir,
            non_interactive,
            threshold,
            out,
        } => {
            let dest = if non_interactive {
                harness::cmd_select(&run_dir, Selection::Threshold(threshold), out.as_deref())?
            } else {
                let stdin = std::io::stdin();
                let mut input = stdin.lock();
                let mut output = std::io::stdout();
                harness::cmd_select(
                    &run_dir,
                    Selection::Interactive {
                        input: &mut input,
                        output: &mut output,
                    },
                    out.as_deref(),
                )?
            };
            println!("{}", dest.display());
        }
        Command::Encode { input, tables, out } => {
            let size = harness::cmd_encode(&input, &tables, &out)?;
            println!("{} ({size} bytes)", out.display());
        }
        Command::Compare {
            input,
            candidates,
            out,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let (rows, failures) = harness::cmd_compare(&input, &candidates, &out, &cfg)?;
            for (method, err) in &failures {
                eprintln!("warning: {method}: {err}");
            }
            println!("{} row(s) written to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidParams(_) | Error::InvalidPlan(_) | Error::InvalidTable(_)) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
