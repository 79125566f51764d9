use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stemnoise::distortions::{DistortionKind, DistortionSpec};
use stemnoise::evaluation::{evaluate_dataset, footprints, footprints_csv, parse_manifest};
use stemnoise::features::{
    ar_statistics, energy_histogram, energy_stats, render_snem, threshold_segment,
};
use stemnoise::imageio::{is_gray_output_path, load_image, write_atomic, write_gray};
use stemnoise::{
    analyze, AcfMode, Error, Execution, NormalizationConfig, PipelineConfig, WindowWeights,
};

/// Stem noise energy features for no-reference image quality assessment.
#[derive(Parser, Debug)]
#[command(name = "stemnoise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the stem noise energy map as an 8-bit image.
    Snem {
        input: PathBuf,
        /// Output image (.png or .pgm).
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Print energy and AR-coefficient statistics as JSON.
    Features {
        input: PathBuf,
        /// Write the JSON here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Export the normalized energy histogram as CSV.
    Hist {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        /// Histogram range; defaults to the data range.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Multi-level Otsu segmentation of the energy map.
    Segment {
        input: PathBuf,
        /// Label image (.png or .pgm).
        #[arg(short, long)]
        output: PathBuf,
        /// Number of classes.
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Apply a synthetic degradation.
    Distort {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Noise sigma, blur sigma or tile side.
        #[arg(long)]
        severity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        input: PathBuf,
        /// Output image (.png or .pgm).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rank-correlate every feature with the scores in a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON report path.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Export (mean, variance) energy footprints for every manifest image.
    Footprint {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value_t = AcfModeArg::Excluded)]
    acf_mode: AcfModeArg,
    /// Singularity tolerance of the Yule-Walker solver.
    #[arg(long, default_value_t = stemnoise::ar::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = WeightsArg::Uniform)]
    window_weights: WeightsArg,
    /// Stabilizing constant added to the local standard deviation.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AcfModeArg {
    Excluded,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightsArg {
    Uniform,
    Gaussian,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Awgn,
    Blur,
    Blockify,
}

impl PipelineArgs {
    fn config(&self, execution: Execution) -> stemnoise::Result<PipelineConfig> {
        let weights = match self.window_weights {
            WeightsArg::Uniform => WindowWeights::Uniform,
            WeightsArg::Gaussian => WindowWeights::Gaussian,
        };
        let acf_mode = match self.acf_mode {
            AcfModeArg::Excluded => AcfMode::ExcludedR1,
            AcfModeArg::Full => AcfMode::FullR1,
        };
        let cfg = PipelineConfig {
            normalization: NormalizationConfig::preset(weights, self.c)?,
            acf_mode,
            epsilon: self.epsilon,
            execution,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_gray_output(path: &Path) -> stemnoise::Result<()> {
    if is_gray_output_path(path) {
        Ok(())
    } else {
        Err(Error::UnsupportedFormat(path.to_path_buf()))
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnsupportedFormat(_) => 1,
        Error::Decode { .. } | Error::Encode { .. } | Error::Io { .. } | Error::Manifest { .. } => {
            2
        }
        Error::Dimension(_) | Error::Degenerate(_) | Error::UndefinedCorrelation(_) => 3,
    }
}

fn run(command: Command) -> stemnoise::Result<()> {
    match command {
        Command::Snem {
            input,
            output,
            pipeline,
        } => {
            let cfg = pipeline.config(Execution::Sequential)?;
            check_gray_output(&output)?;
            let analysis = analyze(&load_image(&input)?, &cfg)?;
            write_gray(&render_snem(&analysis.energy)?, &output)
        }
        Command::Features {
            input,
            output,
            pipeline,
        } => {
            let cfg = pipeline.config(Execution::Sequential)?;
            let analysis = analyze(&load_image(&input)?, &cfg)?;
            let stats = energy_stats(&analysis.energy)?;
            let ar = ar_statistics(&analysis.params, analysis.blocks())?;
            let doc = serde_json::json!({
                "mean": stats.mean,
                "variance": stats.variance,
                "mean_abs": stats.mean_abs,
                "block_count": stats.block_count,
                "blocks_down": analysis.layout.blocks_down(),
                "blocks_across": analysis.layout.blocks_across(),
                "ar": ar,
            });
            let text = serde_json::to_string_pretty(&doc).expect("features serialize") + "\n";
            match output {
                Some(path) => write_atomic(path, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Hist {
            input,
            output,
            bins,
            range,
            pipeline,
        } => {
            let cfg = pipeline.config(Execution::Sequential)?;
            if bins == 0 {
                return Err(Error::Config("--bins must be >= 1".into()));
            }
            let range = range.map(|r| (r[0], r[1]));
            if let Some((lo, hi)) = range {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!("invalid --range {lo} {hi}")));
                }
            }
            let analysis = analyze(&load_image(&input)?, &cfg)?;
            let hist = energy_histogram(&analysis.energy, bins, range)?;
            write_atomic(output, hist.to_csv().as_bytes())
        }
        Command::Segment {
            input,
            output,
            k,
            pipeline,
        } => {
            let cfg = pipeline.config(Execution::Sequential)?;
            if !(2..=256).contains(&k) {
                return Err(Error::Config(format!("--k must be in 2..=256, got {k}")));
            }
            check_gray_output(&output)?;
            let analysis = analyze(&load_image(&input)?, &cfg)?;
            let labels = threshold_segment(&analysis.energy, k)?;
            write_gray(&labels.to_gray()?, &output)
        }
        Command::Distort {
            kind,
            severity,
            seed,
            input,
            output,
        } => {
            let kind = match kind {
                KindArg::Awgn => DistortionKind::Awgn,
                KindArg::Blur => DistortionKind::GaussianBlur,
                KindArg::Blockify => DistortionKind::Blockify,
            };
            let spec = DistortionSpec {
                kind,
                severity,
                seed,
            };
            spec.validate()?;
            check_gray_output(&output)?;
            let degraded = spec.apply(&load_image(&input)?)?;
            write_gray(&degraded.to_gray(), &output)
        }
        Command::Eval {
            manifest,
            output,
            pipeline,
        } => {
            let cfg = pipeline.config(Execution::Parallel)?;
            let manifest = parse_manifest(&manifest)?;
            let report = evaluate_dataset(&manifest, &cfg)?;
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            write_atomic(&output, report.to_json().as_bytes())?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Footprint {
            manifest,
            output,
            pipeline,
        } => {
            let cfg = pipeline.config(Execution::Parallel)?;
            let manifest = parse_manifest(&manifest)?;
            let rows = footprints(&manifest, &cfg)?;
            write_atomic(output, footprints_csv(&rows)?.as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
