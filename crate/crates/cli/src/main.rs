use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use gradlab_cli::{harness, plot, report, verify, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "bench",
    version,
    about = "Train and compare gradient-descent optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured optimizer and write metrics.csv, summary.csv and summary.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Also render the learning curves into the output directory.
        #[arg(long)]
        plot: bool,
    },
    /// Render loss and accuracy curves from a metrics CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property checks.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            plot,
        } => {
            let mut spec = ExperimentSpec::load(&config)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(out) = out {
                spec.out = out;
            }
            let result = harness::run(&spec)?;
            let files = report::write_outputs(&spec.out, &result)?;
            print!("{}", report::summary_table(&result));
            println!("wrote {}", files.metrics.display());
            if plot {
                for p in plot::emit_plots(&files.metrics, &spec.out)? {
                    println!("wrote {}", p.display());
                }
            }
        }
        Command::Plot { csv, out } => {
            for p in plot::emit_plots(&csv, &out)
                .with_context(|| format!("plotting {}", csv.display()))?
            {
                println!("wrote {}", p.display());
            }
        }
        Command::Verify { seed } => {
            let checks = verify::run_all(seed);
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
        }
    }
    Ok(())
}
