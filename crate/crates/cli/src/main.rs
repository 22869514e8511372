use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scramble::experiment::{self, Overrides, RawConfig, RunConfig};

/// Scrambling diagnostics for open spin and light-matter models.
///
/// Set SCRAMBLE_MAX_DIM to change the largest allowed Hilbert-space dimension.
#[derive(Parser)]
#[command(name = "scramble", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one diagnostic from a JSON config; flags override file keys.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// tc or tfim
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        diagnostic: Option<String>,
        /// TFIM field tilt in radians
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        /// Operator A, e.g. sigma_z@1 (sites count from 0)
        #[arg(long = "a")]
        a_op: Option<String>,
        /// Operator B, e.g. sigma_z@3
        #[arg(long = "b")]
        b_op: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// start:end:n_points
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        fock_cutoff: Option<usize>,
        /// Divide the Loschmidt echo by the initial purity (default true)
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        normalize: Option<bool>,
        /// Worker threads; output does not depend on this
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Regenerate every curve of a figure.
    Figure {
        /// fig1 fig2 fig3 fig4 fig5a fig5b fig6 fig7 fig8 fig9 figB
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> scramble::Result<()> {
    match cli.command {
        Command::Run {
            config,
            model,
            diagnostic,
            theta,
            a_op,
            b_op,
            out,
            grid,
            fock_cutoff,
            normalize,
            threads,
        } => {
            let mut raw = RawConfig::from_path(&config)?;
            Overrides {
                model,
                diagnostic,
                theta,
                a_op,
                b_op,
                output_path: out.map(|p| p.display().to_string()),
                grid,
                fock_cutoff,
                normalize,
            }
            .apply(&mut raw);
            let config = RunConfig::from_raw(&raw)?;
            let output = experiment::run(&config, threads)?;
            for f in &output.manifest.files {
                println!("{}", f.path.display());
            }
            println!("{}", output.manifest_path.display());
        }
        Command::Figure { name, out, threads } => {
            let output = experiment::run_figure(&name, &out, threads)?;
            for f in &output.files {
                println!("{}", f.path.display());
            }
            println!("{}", output.manifest_path.display());
        }
    }
    Ok(())
}
