use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use neurocap_cli::commands::{self, DecodeConfig};
use neurocap_cli::grid::{self, ExperimentConfig};
use neurocap_core::analysis::TsneConfig;
use neurocap_core::dataset::synth::SynthConfig;
use neurocap_core::lm::Strategy;
use neurocap_core::training::{PretrainConfig, TrainConfig};
use neurocap_core::Result;

#[derive(Parser)]
#[command(name = "neurocap", version, about = "Caption generation from ROI-tokenized brain responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test pair with planted structure.
    SynthData {
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain the caption language model on a dataset's captions.
    PretrainLm {
        #[command(flatten)]
        common: Common,
        /// Dataset directory or manifest.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train encoder and bridge against a frozen decoder.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Output of pretrain-lm, or the checkpoint directory itself.
        #[arg(long)]
        decoder: PathBuf,
    },
    /// Caption every test stimulus into predictions.tsv.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Beam width; greedy when omitted.
        #[arg(long)]
        beam: Option<usize>,
        /// Decode every repetition separately.
        #[arg(long)]
        per_repetition: bool,
    },
    /// Score predictions against the dataset's reference captions.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and score the same model on LVC, HVC and VC inputs.
    AblateRoi {
        #[command(flatten)]
        common: Common,
        /// Root holding train/ and test/; synthesized when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        decoder: Option<PathBuf>,
        /// JSON list of {name, voxel_count} used for the voxel column.
        #[arg(long)]
        roi_metadata: Option<PathBuf>,
    },
    /// Train and score all encoder-size and scaling-factor combinations.
    VariantGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        decoder: Option<PathBuf>,
    },
    /// Project class embeddings to 2-D and write plot-ready coordinates.
    TsneExport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Patch cosine maps against the class embedding, with masks.
    VisualizeCues {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Mask threshold; grid mean plus one std when omitted.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializes"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData { common } => {
            let cfg: SynthConfig = commands::load_config(common.config.as_deref())?;
            let out = commands::cmd_synth_data(&cfg, common.config.as_deref(), common.seed, &common.out)?;
            println!("train\t{}", out.train_manifest.display());
            println!("test\t{}", out.test_manifest.display());
        }
        Command::PretrainLm { common, data } => {
            let cfg: PretrainConfig = commands::load_config(common.config.as_deref())?;
            commands::cmd_pretrain_lm(&data, &cfg, common.config.as_deref(), common.seed, &common.out)?;
            println!("{}", common.out.join(commands::DECODER_DIR).display());
        }
        Command::Train { common, data, decoder } => {
            let cfg: TrainConfig = commands::load_config(common.config.as_deref())?;
            commands::cmd_train(&data, &decoder, &cfg, common.config.as_deref(), common.seed, &common.out)?;
            println!("{}", common.out.join(commands::MODEL_DIR).display());
        }
        Command::Decode {
            common,
            model,
            data,
            beam,
            per_repetition,
        } => {
            let mut cfg: DecodeConfig = commands::load_config(common.config.as_deref())?;
            if let Some(width) = beam {
                cfg.generation.strategy = Strategy::Beam { width };
            }
            if per_repetition {
                cfg.average_repetitions = false;
            }
            commands::cmd_decode(&model, &data, &cfg, common.config.as_deref(), &common.out)?;
            println!("{}", common.out.join(commands::PREDICTIONS_NAME).display());
        }
        Command::Evaluate {
            common,
            predictions,
            data,
        } => {
            let report = commands::cmd_evaluate(&predictions, &data, &common.out)?;
            println!(
                "B@1 {:.1}  B@4 {:.1}  ROUGE-L {:.1}  METEOR-ex {:.1}  CIDEr {:.1}",
                report.b1, report.b4, report.rouge_l, report.meteor_ex, report.cider
            );
        }
        Command::AblateRoi {
            common,
            data,
            decoder,
            roi_metadata,
        } => {
            let cfg = experiment_config(common.config.as_deref(), ExperimentConfig::ablation_default)?;
            let specs = roi_metadata.as_deref().map(grid::read_roi_metadata).transpose()?;
            let rows = grid::run_ablation(
                &cfg,
                data.as_deref(),
                decoder.as_deref(),
                specs.as_deref(),
                common.seed,
                &common.out,
            )?;
            let inputs: Vec<PathBuf> = [data, decoder, roi_metadata].into_iter().flatten().collect();
            grid::grid_manifest("ablate-roi", &cfg, common.config.as_deref(), common.seed, &inputs, &["ablation.tsv", "ablation.json"], &common.out)?;
            print_json(&rows);
        }
        Command::VariantGrid { common, data, decoder } => {
            let cfg = experiment_config(common.config.as_deref(), ExperimentConfig::default)?;
            let rows = grid::run_variant_grid(&cfg, data.as_deref(), decoder.as_deref(), common.seed, &common.out)?;
            let inputs: Vec<PathBuf> = [data, decoder].into_iter().flatten().collect();
            grid::grid_manifest("variant-grid", &cfg, common.config.as_deref(), common.seed, &inputs, &["grid.tsv", "grid.json"], &common.out)?;
            print_json(&rows);
        }
        Command::TsneExport {
            common,
            model,
            data,
            perplexity,
            iterations,
        } => {
            let mut cfg: TsneConfig = commands::load_config(common.config.as_deref())?;
            cfg.seed = common.seed;
            if let Some(p) = perplexity {
                cfg.perplexity = p;
            }
            if let Some(i) = iterations {
                cfg.iterations = i;
            }
            let summary = commands::cmd_tsne_export(&model, &data, &cfg, common.config.as_deref(), &common.out)?;
            print_json(&summary);
        }
        Command::VisualizeCues {
            common,
            model,
            data,
            threshold,
        } => {
            let summary = commands::cmd_visualize_cues(&model, &data, threshold, &common.out)?;
            print_json(&summary);
        }
    }
    Ok(())
}

fn experiment_config(path: Option<&Path>, defaults: fn() -> ExperimentConfig) -> Result<ExperimentConfig> {
    match path {
        Some(_) => commands::load_config(path),
        None => Ok(defaults()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
