use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use backdrop_cli::{router, AppState};
use backdrop_core::experiments::{run_convergence, run_runtime, runtime_csv, runtime_markdown, AdversarialCase};
use backdrop_core::synth::{gen_adversarial3, gen_clustered, gen_intro3d, gen_x5};
use backdrop_core::DataMatrix;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "backdrop", version, about = "Interactive exploration against a maximum-entropy background model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen {
        #[arg(value_enum)]
        dataset: Dataset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows, for `clustered`.
        #[arg(long, default_value_t = 2048)]
        n: usize,
        /// Columns, for `clustered`.
        #[arg(long, default_value_t = 16)]
        d: usize,
        /// Clusters, for `clustered`.
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// For `x5`: also write the E/F/G labeling, one per line.
        #[arg(long)]
        secondary_out: Option<PathBuf>,
    },
    /// Trace the variance of row 1 on the three-point problem, sweep by sweep.
    Convergence {
        #[arg(long, default_value = "B")]
        case: AdversarialCase,
        #[arg(long, default_value_t = 10_000)]
        sweeps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time fitting and ICA over a grid of dataset sizes.
    Runtime {
        #[arg(long, value_delimiter = ',', default_values_t = [1024, 2048, 4096])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [16, 32])]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 4])]
        k: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    X5,
    Clustered,
    Adversarial3,
    Intro3d,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Json,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_dataset(data: &DataMatrix, out: &Option<PathBuf>) -> Result<()> {
    let label = data.class_labels().map(|_| "label");
    let mut w = output(out)?;
    data.write_csv(&mut w, label)?;
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { dataset, seed, n, d, k, out, secondary_out } => {
            let data = match dataset {
                Dataset::X5 => {
                    let x5 = gen_x5(seed);
                    if let Some(path) = &secondary_out {
                        let mut w = output(&Some(path.clone()))?;
                        for l in &x5.secondary_labels {
                            writeln!(w, "{l}")?;
                        }
                        w.flush()?;
                    }
                    x5.data
                }
                Dataset::Clustered => gen_clustered(n, d, k, seed)?,
                Dataset::Adversarial3 => gen_adversarial3().data,
                Dataset::Intro3d => gen_intro3d(seed),
            };
            if secondary_out.is_some() && !matches!(dataset, Dataset::X5) {
                bail!("--secondary-out only applies to x5");
            }
            write_dataset(&data, &out)
        }
        Command::Convergence { case, sweeps, out } => {
            let trace = run_convergence(case, sweeps);
            let mut w = output(&out)?;
            w.write_all(trace.to_csv().as_bytes())?;
            w.flush()?;
            if sweeps >= 1000 {
                eprintln!("log-log slope over sweeps 100..{sweeps}: {:.3}", trace.log_log_slope(100, sweeps));
            }
            Ok(())
        }
        Command::Runtime { n, d, k, repeats, seed, format, out } => {
            let mut grid = Vec::new();
            for &n in &n {
                for &d in &d {
                    for &k in &k {
                        grid.push((n, d, k));
                    }
                }
            }
            let rows = run_runtime(&grid, repeats, seed)?;
            let text = match format {
                Format::Csv => runtime_csv(&rows),
                Format::Markdown => runtime_markdown(&rows),
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
            };
            let mut w = output(&out)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Command::Serve { addr } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(AppState::new())).await?;
                Ok(())
            })
        }
    }
}
