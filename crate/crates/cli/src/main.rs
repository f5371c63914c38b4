use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fednoise_cli::figures::{emit_figure_data, Figure};
use fednoise_cli::spec::ExperimentSpec;
use fednoise_cli::sweep::{run_sweep, verify_run};
use fednoise_cli::CliError;

/// Deterministic federated-learning experiments under label noise.
#[derive(Parser)]
#[command(name = "fednoise", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a spec file.
    Run {
        /// Spec file (flat `key = value` text; see the README).
        spec: PathBuf,
        /// Override the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cap the number of concurrently running cells.
        #[arg(long)]
        threads: Option<usize>,
        /// Override the spec's training-set truncation.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Emit a plot-ready data table from a completed run.
    Figure {
        manifest: PathBuf,
        /// fig3a, fig3b, fig4, fig5, fig6, fig7, or fig8.
        fig_id: String,
        /// Output directory (default: `<run dir>/fig`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check the invariants and bound flags of a completed run.
    Verify { manifest: PathBuf },
    /// Print the path-norm proxy of a model snapshot.
    Pathnorm { snapshot: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            spec,
            seed,
            out,
            threads,
            limit,
        } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(seed) = seed {
                spec.master_seed = seed;
            }
            if let Some(out) = out {
                spec.out_dir = out;
            }
            if let Some(limit) = limit {
                spec.limit = Some(limit);
            }
            let (manifest, path) = run_sweep(&spec, threads)?;
            println!(
                "completed {} cell(s); manifest at {}",
                manifest.cells.len(),
                path.display()
            );
            Ok(())
        }
        Command::Figure {
            manifest,
            fig_id,
            out,
        } => {
            let figure = Figure::from_id(&fig_id)?;
            let path = emit_figure_data(&manifest, figure, out.as_deref())?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Verify { manifest } => {
            let report = verify_run(&manifest)?;
            println!(
                "verified {} cell(s), {} metric rows: all invariants hold",
                report.cells, report.rows_checked
            );
            Ok(())
        }
        Command::Pathnorm { snapshot } => {
            let file = std::fs::File::open(&snapshot)
                .map_err(|e| CliError::data(format!("cannot open {}: {e}", snapshot.display())))?;
            let model = fednoise_core::nn::read_snapshot(std::io::BufReader::new(file))
                .map_err(|e| CliError::data(e.to_string()))?;
            println!("{}", model.path_norm_proxy());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
