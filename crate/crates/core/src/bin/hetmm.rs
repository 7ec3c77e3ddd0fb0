use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hetmm::evaluation::{DEFAULT_FPR_CAP, DEFAULT_STEPS};
use hetmm::pipeline::{run_build, run_compress, run_evaluate, run_score, run_update, RunConfig};
use hetmm::selection::PtsConfig;

#[derive(Parser)]
#[command(name = "hetmm", version, about = "Template-matching anomaly detection")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an original template bank from a feature manifest.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a bank to K sheets per pixel.
    Compress {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        min_samples: usize,
        #[arg(long, default_value_t = 0.05)]
        xi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score query features against a bank.
    Score {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute AUROC/PRO metrics for a score directory.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also dump roc/pro/iou/pr curve CSVs into this directory.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FPR_CAP)]
        cap: f64,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
    /// Append new nominal sheets to an existing bank.
    Update {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        add: PathBuf,
    },
}

fn run(cmd: Command) -> hetmm::Result<()> {
    match cmd {
        Command::Build { manifest, out } => {
            let bank = run_build(&manifest, &out)?;
            println!(
                "built bank with {} sheets at {}",
                bank.sheet_count(),
                out.display()
            );
        }
        Command::Compress {
            bank,
            k,
            min_samples,
            xi,
            out,
        } => {
            let cfg = PtsConfig { k, min_samples, xi };
            let tiny = run_compress(&bank, &cfg, &out)?;
            println!(
                "compressed to {} sheets at {}",
                tiny.sheet_count(),
                out.display()
            );
        }
        Command::Score {
            bank,
            config,
            queries,
            out,
        } => {
            let cfg = RunConfig::read(&config)?;
            eprintln!(
                "resolved config: {}",
                serde_json::to_string(&cfg).unwrap_or_default()
            );
            for r in run_score(&bank, &cfg, &queries, &out)? {
                println!("{},{}", r.id, r.score);
            }
        }
        Command::Evaluate {
            scores,
            truth,
            out,
            curves,
            cap,
            steps,
        } => {
            let m = run_evaluate(&scores, &truth, &out, curves.as_deref(), cap, steps)?;
            println!(
                "auroc_image={:.4} auroc_pixel={:.4} pro={:.4}",
                m.auroc_image, m.auroc_pixel, m.pro
            );
        }
        Command::Update { bank, add } => {
            let b = run_update(&bank, &add)?;
            println!("bank now has {} sheets", b.sheet_count());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
