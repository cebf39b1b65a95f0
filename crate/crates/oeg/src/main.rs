//! Command-line front end of the pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oeg::config::PipelineConfig;
use oeg::manifold::Segment;
use oeg::pipeline;
use oeg::synth::CohortSpec;
use oeg::OegError;

#[derive(Parser)]
#[command(
    name = "oeg",
    version,
    about = "Facial-dynamics analysis: shape geodesics, coherence kernels, and counterfactual treatment search"
)]
struct Cli {
    /// Flat key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Recording segment to operate on.
    #[arg(long, global = true, value_parser = ["full", "interview", "mimic", "story"])]
    segment: Option<String>,

    /// Override the mixture size of the background model.
    #[arg(long, global = true)]
    components: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort dataset from a spec JSON.
    Synth {
        /// Cohort spec JSON file.
        spec: PathBuf,
        /// Dataset output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract windowed coefficient atoms for every recording.
    Features {
        /// Dataset directory containing manifest.json.
        dataset: PathBuf,
        /// Feature output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the background mixture over stored features.
    TrainUbm {
        dataset: PathBuf,
        /// Feature directory written by `features`.
        #[arg(long)]
        features: PathBuf,
        /// Model output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt every recording against the background model.
    Adapt {
        dataset: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Background model file.
        #[arg(long)]
        model: PathBuf,
        /// Supervector output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense kernel matrix over admission supervectors.
    KernelMatrix {
        dataset: PathBuf,
        /// Supervector directory written by `adapt`.
        #[arg(long)]
        supervectors: PathBuf,
        /// Kernel CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-subject-out evaluation for all targets.
    Cv {
        dataset: PathBuf,
        #[arg(long)]
        supervectors: PathBuf,
        /// Report output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Counterfactual treatment analysis over the patient subset.
    Causal {
        dataset: PathBuf,
        #[arg(long)]
        supervectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trajectory and Wasserstein summary reports.
    Report {
        dataset: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        supervectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(cli: &Cli) -> oeg::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(segment) = &cli.segment {
        cfg.segment = Segment::parse(segment)
            .ok_or_else(|| OegError::InvalidInput(format!("unknown segment `{segment}`")))?;
    }
    if let Some(c) = cli.components {
        cfg.ubm_components = c;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> oeg::Result<()> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(spec)
                .map_err(|_| OegError::MissingArtifact(spec.display().to_string()))?;
            let mut spec: CohortSpec = serde_json::from_str(&text)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            pipeline::cmd_synth(&spec, out)?;
        }
        Command::Features { dataset, out } => {
            pipeline::cmd_features(dataset, out, &cfg)?;
        }
        Command::TrainUbm {
            dataset,
            features,
            out,
        } => {
            pipeline::cmd_train_ubm(dataset, features, out, &cfg)?;
        }
        Command::Adapt {
            dataset,
            features,
            model,
            out,
        } => {
            pipeline::cmd_adapt(dataset, features, model, out, &cfg)?;
        }
        Command::KernelMatrix {
            dataset,
            supervectors,
            out,
        } => {
            pipeline::cmd_kernel_matrix(dataset, supervectors, out, &cfg)?;
        }
        Command::Cv {
            dataset,
            supervectors,
            out,
        } => {
            let reports = pipeline::cmd_cv(dataset, supervectors, out, &cfg)?;
            for r in &reports {
                println!(
                    "{}: pearson_r = {:.4} over {} subjects",
                    r.target_name, r.pearson_r, r.n_subjects
                );
            }
        }
        Command::Causal {
            dataset,
            supervectors,
            out,
        } => {
            let analysis = pipeline::cmd_causal(dataset, supervectors, out, &cfg)?;
            println!(
                "mean predicted reduction {:.3} (clinical policy realized {:.3}) over {} patients",
                analysis.recommended_mean_reduction,
                analysis.clinical_mean_reduction,
                analysis.per_subject.len()
            );
        }
        Command::Report {
            dataset,
            features,
            model,
            supervectors,
            out,
        } => {
            pipeline::cmd_report(dataset, features, model, supervectors, out, &cfg)?;
        }
    }
    Ok(())
}

/// 2 = invalid input/config/data, 3 = missing or mismatched artifact.
fn exit_code(err: &OegError) -> u8 {
    match err {
        OegError::MissingArtifact(_) | OegError::ConfigMismatch { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
