//! `dysgrade`: synthesize corpora, extract features, train and apply the
//! hierarchical severity model, and score predictions.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dysgrade_core::{FusionMode, TiePolicy};

#[derive(Debug, Parser)]
#[command(name = "dysgrade", version, about = "Dysarthria severity grading pipeline")]
struct Cli {
    /// Root seed; every random stream is derived from it by name.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureSet {
    Acoustic12,
    Phase54,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageTwo {
    /// 100 bagged trees of depth 5.
    Forest,
    /// One unbagged tree of depth 5.
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Majority,
    Soft,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Majority => FusionMode::Majority,
            FusionArg::Soft => FusionMode::Soft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Severe,
    LeastSevere,
}

impl From<TieArg> for TiePolicy {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::Severe => TiePolicy::Severe,
            TieArg::LeastSevere => TiePolicy::LeastSevere,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labelled corpus (WAV files plus manifest.csv).
    Synth {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        n_per_class: u32,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump acoustic and/or phase features as CSV into a directory.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; receives acoustic12.csv and/or phase54.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FeatureSet::Both)]
        feature_set: FeatureSet,
        /// Stage-1 model table (CSV); defaults to the built-in eight models.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the two-stage model and write it to a file.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StageTwo::Forest)]
        stage_two: StageTwo,
        /// Give stage 2 a neutral 0.5 for models outside a speaker's subgroup.
        #[arg(long)]
        mask_out_of_group: bool,
        #[arg(long, value_enum, default_value_t = TieArg::Severe)]
        tie_policy: TieArg,
    },
    /// Predict a severity grade for every speaker in a manifest.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Predictions CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// How the stage-2 trees are combined.
        #[arg(long, value_enum, default_value_t = FusionArg::Majority)]
        fusion: FusionArg,
        #[arg(long, value_enum, default_value_t = TieArg::Severe)]
        tie_policy: TieArg,
    },
    /// Score a predictions CSV against manifest labels.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; receives report.txt and metrics.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the default stage-1 model table as editable CSV.
    Config {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DYS_LOG", "warn")).init();
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Synth { n_per_class, out } => commands::synth(n_per_class as usize, seed, &out),
        Command::Extract {
            manifest,
            out,
            feature_set,
            config,
        } => commands::extract(&manifest, &out, feature_set, config.as_deref()),
        Command::Train {
            manifest,
            out,
            config,
            stage_two,
            mask_out_of_group,
            tie_policy,
        } => commands::train(commands::TrainArgs {
            manifest: &manifest,
            out: &out,
            config: config.as_deref(),
            stage_two,
            mask_out_of_group,
            tie_policy: tie_policy.into(),
            seed,
        }),
        Command::Predict {
            manifest,
            model,
            out,
            fusion,
            tie_policy,
        } => commands::predict(&manifest, &model, &out, fusion.into(), tie_policy.into()),
        Command::Evaluate {
            predictions,
            manifest,
            out,
        } => commands::evaluate(&predictions, &manifest, &out),
        Command::Config { out } => commands::write_default_config(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
