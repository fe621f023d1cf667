//! `aspects`: score infarct masks, evaluate segmentations, measure reader
//! agreement, generate phantoms, and check the training losses.
//!
//! Exit codes are a stable contract: 0 success, 1 a check ran and failed,
//! 2 usage/parse/geometry errors, 3 degenerate input (a loss that needs a
//! region boundary was given a uniform mask).

use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "aspects",
    version,
    about = "ASPECTS scoring and evaluation for voxel mask volumes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score an infarct mask against an anatomy label map
    Score {
        /// Binary infarct mask volume (MET_UCHAR, values 0/1)
        #[arg(long)]
        infarct: PathBuf,
        /// Anatomy label map volume (MET_UCHAR, labels 0-20)
        #[arg(long)]
        anatomy: PathBuf,
        /// Write the full report as JSON here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inline involvement policy, e.g. '{"min_overlap_voxels":10,"min_overlap_fraction":0.01}'
        #[arg(long, value_name = "JSON")]
        policy: Option<String>,
        /// JSON config file overriding thresholds
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate predicted segmentations against ground truth
    EvalSeg {
        /// Predicted volumes, one per case
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        /// Ground-truth volumes, paired with --pred by position
        #[arg(long, num_args = 1.., required = true)]
        gt: Vec<PathBuf>,
        /// Treat the volumes as 20-label anatomy maps and report per-region dice
        #[arg(long)]
        anatomy: bool,
        /// Write the evaluation as JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inter-reader agreement statistics from a score table CSV
    Agreement {
        /// CSV with header scan_id,score_a,score_b
        #[arg(long)]
        table: PathBuf,
    },
    /// Generate a synthetic scan with an exactly known report
    Phantom {
        /// Generator seed; the same seed reproduces identical files
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for anatomy.mha, infarct.mha, expected_report.json
        #[arg(long)]
        out_dir: PathBuf,
        /// Lesion plan, e.g. '[{"hemisphere":"left","region":"caudate","fill_fraction":0.5}]'
        #[arg(long, value_name = "JSON")]
        plan: Option<String>,
        /// Volume dimensions
        #[arg(long, default_value = "64x64x32")]
        dims: String,
        /// Voxel spacing in mm
        #[arg(long, default_value = "1x1x1")]
        spacing: String,
    },
    /// Evaluate the segmentation losses and verify their gradients
    LossCheck {
        /// Predicted probability volume (MET_FLOAT, values in [0,1])
        #[arg(long)]
        prob: PathBuf,
        /// Ground-truth binary mask volume
        #[arg(long)]
        gt: PathBuf,
        /// Inline loss weights, e.g. '{"alpha":3,"beta":1,"gamma":1}'
        #[arg(long, value_name = "JSON")]
        weights: Option<String>,
        /// JSON config file overriding thresholds
        #[arg(long)]
        config: Option<PathBuf>,
        /// Damage one gradient entry on purpose to prove the check fails
        #[arg(long)]
        corrupt_gradient: bool,
    },
}

fn run(cli: Cli) -> aspects_core::Result<i32> {
    match cli.command {
        Command::Score {
            infarct,
            anatomy,
            out,
            policy,
            config,
        } => commands::cmd_score(
            &infarct,
            &anatomy,
            out.as_deref(),
            policy.as_deref(),
            config.as_deref(),
        ),
        Command::EvalSeg {
            pred,
            gt,
            anatomy,
            out,
        } => commands::cmd_eval_seg(&pred, &gt, anatomy, out.as_deref()),
        Command::Agreement { table } => commands::cmd_agreement(&table),
        Command::Phantom {
            seed,
            out_dir,
            plan,
            dims,
            spacing,
        } => commands::cmd_phantom(seed, &out_dir, plan.as_deref(), &dims, &spacing),
        Command::LossCheck {
            prob,
            gt,
            weights,
            config,
            corrupt_gradient,
        } => commands::cmd_loss_check(
            &prob,
            &gt,
            weights.as_deref(),
            config.as_deref(),
            corrupt_gradient,
        ),
    }
}

/// Degenerate inputs get their own code; everything else that errors is a
/// parse/usage/geometry problem.
fn exit_code_for(e: &aspects_core::Error) -> i32 {
    match e {
        aspects_core::Error::Degenerate(_) => 3,
        _ => 2,
    }
}

// Restore the default SIGPIPE disposition so `aspects ... | head` dies
// quietly like other line tools instead of panicking on a closed pipe.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() {
    reset_sigpipe();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    std::process::exit(code);
}
