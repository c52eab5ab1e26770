pub mod config;
pub mod csvio;
pub mod plot;
pub mod runner;

use clap::Parser;

#[derive(Parser)]
#[command(name = "endolab", about = "Batch experiment runner for the endolab map families")]
enum Cli {
    /// Run every experiment of a config file and write CSV/JSON reports.
    Run {
        config: std::path::PathBuf,
    },
    /// Render a report CSV to a deterministic SVG.
    Plot {
        csv: std::path::PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// List the canonical family instances.
    Families,
}

pub fn run_cli() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli {
        Cli::Run { config } => runner::run_from_path(&config),
        Cli::Plot { csv, kind, out } => plot::plot_file(&csv, &kind, out.as_deref()),
        Cli::Families => {
            for line in runner::family_descriptions() {
                println!("{line}");
            }
            Ok(())
        }
    }
}
