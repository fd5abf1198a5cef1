//! `wristemg` command line: generate synthetic sessions, train the
//! pipeline, run cross-validated evaluations and channel sweeps, stream
//! frames through a trained model, and inspect artifacts.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error.

mod config;

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use wristemg::error::Error as CoreError;
use wristemg::evaluation::{
    channel_sweep, evaluate_fe, evaluate_gr, kfold_by_sequence, traces_to_csv,
};
use wristemg::io::{load_dataset, save_dataset};
use wristemg::models::{load_model, save_model};
use wristemg::pipeline::{fit_pipeline, FoldContext};
use wristemg::selection::MrmrTarget;
use wristemg::stream::{control_csv_row, StreamEngine, CONTROL_CSV_HEADER};
use wristemg::synthgen::generate_dataset;
use wristemg::types::{Dataset, Sequence, NUM_CHANNELS};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, bad config, missing input files. Exit code 2.
    Usage(String),
    /// Failures after a well-formed invocation. Exit code 1.
    Runtime(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        match e {
            CoreError::Config(_)
            | CoreError::InvalidArgument(_)
            | CoreError::SchemaVersion { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "wristemg",
    version,
    about = "EMG wrist-intent pipeline: gesture recognition, force estimation, streaming control",
    after_help = "Config precedence: built-in defaults, then --config file values, then flags."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session dataset and write it as manifest + CSVs.
    Generate {
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the dataset.
        #[arg(long)]
        out: PathBuf,
        /// Seed override (generator and fold plans).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the full pipeline on a dataset and write the model bundle.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset manifest (manifest.json).
        #[arg(long)]
        manifest: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of channels to keep from the mRMR ranking.
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Cross-validated gesture and force evaluation; writes reports and
    /// plot-ready traces.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for reports.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Accuracy/MdAPE as a function of channel count (1..8); writes a CSV
    /// with the reference trends annotated.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stream EMG frames through a trained model and emit control rows.
    Stream {
        /// Trained model bundle.
        #[arg(long)]
        model: PathBuf,
        /// EMG CSV file (t_s,ch1..ch8) or '-' for standard input.
        #[arg(long)]
        input: String,
        /// Output file for control rows (defaults to standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a dataset manifest or a model bundle.
    Inspect {
        /// Path to manifest.json or a model file.
        path: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn load_dataset_checked(manifest: &Path) -> Result<Dataset, CliError> {
    require_file(manifest, "manifest")?;
    Ok(load_dataset(manifest)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { config, out, seed } => {
            let cfg = RunConfig::load(config.as_deref())?.with_overrides(seed, None);
            let dataset = generate_dataset(&cfg.synth)?;
            fs::create_dir_all(&out)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
            let manifest = save_dataset(&dataset, &out)?;
            println!(
                "{} sequences, {} frames written to {}",
                dataset.sequences.len(),
                dataset.total_frames(),
                manifest.display()
            );
            Ok(())
        }

        Command::Train {
            config,
            manifest,
            out,
            seed,
            channels,
        } => {
            let cfg = RunConfig::load(config.as_deref())?.with_overrides(seed, channels);
            let dataset = load_dataset_checked(&manifest)?;
            let seqs: Vec<&Sequence> = dataset.sequences.iter().collect();
            let fitted = fit_pipeline(&seqs, &cfg.pipeline_config(), MrmrTarget::Gesture, None)?;
            save_model(&fitted.model, &out)?;
            let chans: Vec<u8> = fitted.model.channels.iter().map(|c| c.get()).collect();
            println!("selected channels: {chans:?} (gesture mRMR ranking)");
            println!("pca components: {}", fitted.pca_retained);
            println!("training windows: {}", fitted.model.knn.len());
            println!("training accuracy: {:.4}", fitted.train_accuracy);
            println!("model written to {}", out.display());
            Ok(())
        }

        Command::Eval {
            config,
            manifest,
            out,
            seed,
            channels,
        } => {
            let cfg = RunConfig::load(config.as_deref())?.with_overrides(seed, channels);
            let dataset = load_dataset_checked(&manifest)?;
            let pipeline_cfg = cfg.pipeline_config();
            fs::create_dir_all(&out)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;

            // Gesture recognition runs on the gesture-task subset, force
            // estimation on the full set.
            let gr_data = dataset.gesture_subset();
            let gr_plan = kfold_by_sequence(&gr_data, cfg.eval.folds, cfg.eval.seed)?;
            let gr = evaluate_gr(&gr_data, &pipeline_cfg, &gr_plan)?;
            let fe_plan = kfold_by_sequence(&dataset, cfg.eval.folds, cfg.eval.seed)?;
            let fe = evaluate_fe(&dataset, &pipeline_cfg, &fe_plan, &cfg.eval)?;

            // Whole-dataset rankings for both targets, plus their agreement.
            let all: Vec<&Sequence> = dataset.sequences.iter().collect();
            let ctx = FoldContext::prepare(&all, &pipeline_cfg, None)?;
            let gr_rank = ctx.rank(MrmrTarget::Gesture)?;
            let fe_rank = ctx.rank(MrmrTarget::Force)?;
            let top3 = |r: &wristemg::selection::ChannelRanking| {
                let mut t: Vec<u8> = r.order[..3.min(r.order.len())]
                    .iter()
                    .map(|c| c.get())
                    .collect();
                t.sort();
                t
            };
            let agreement = top3(&gr_rank) == top3(&fe_rank);

            let mut report = String::new();
            report.push_str(&gr.summary());
            report.push('\n');
            report.push_str(&fe.summary());
            report.push('\n');
            report.push_str(&format!(
                "gesture-target ranking: {:?}\nforce-target ranking:   {:?}\ntop-3 sets agree: {}\n",
                gr_rank.order.iter().map(|c| c.get()).collect::<Vec<_>>(),
                fe_rank.order.iter().map(|c| c.get()).collect::<Vec<_>>(),
                agreement
            ));

            write_file(&out.join("report.txt"), &report)?;
            write_file(&out.join("gr_confusion.csv"), &gr.confusion_csv())?;
            write_file(&out.join("gr_traces.csv"), &traces_to_csv(&gr.traces))?;
            write_file(&out.join("fe_traces.csv"), &traces_to_csv(&fe.traces))?;
            write_file(&out.join("gr_ranking.csv"), &gr_rank.to_csv())?;
            write_file(&out.join("fe_ranking.csv"), &fe_rank.to_csv())?;
            print!("{report}");
            println!("reports written to {}", out.display());
            Ok(())
        }

        Command::Sweep {
            config,
            manifest,
            out,
            seed,
        } => {
            let cfg = RunConfig::load(config.as_deref())?.with_overrides(seed, None);
            let dataset = load_dataset_checked(&manifest)?;
            let pipeline_cfg = cfg.pipeline_config();
            fs::create_dir_all(&out)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;

            let gr_data = dataset.gesture_subset();
            let counts: Vec<usize> = (1..=NUM_CHANNELS).collect();
            let sweep = channel_sweep(&gr_data, &dataset, &pipeline_cfg, &cfg.eval, &counts)?;
            let csv = sweep.to_csv();
            write_file(&out.join("sweep.csv"), &csv)?;
            print!("{csv}");
            println!("sweep written to {}", out.join("sweep.csv").display());
            Ok(())
        }

        Command::Stream { model, input, out } => {
            require_file(&model, "model")?;
            let bundle = load_model(&model)?;
            let mut engine = StreamEngine::new(bundle)?;

            let reader: Box<dyn BufRead> = if input == "-" {
                Box::new(std::io::stdin().lock())
            } else {
                let path = PathBuf::from(&input);
                require_file(&path, "input")?;
                Box::new(std::io::BufReader::new(fs::File::open(&path).map_err(
                    |e| CliError::Runtime(format!("cannot open {input}: {e}")),
                )?))
            };
            let mut writer: BufWriter<Box<dyn Write>> = BufWriter::new(match &out {
                Some(path) => Box::new(fs::File::create(path).map_err(|e| {
                    CliError::Runtime(format!("cannot create {}: {e}", path.display()))
                })?),
                None => Box::new(std::io::stdout()),
            });

            writeln!(writer, "{CONTROL_CSV_HEADER}")
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| CliError::Runtime(format!("read error: {e}")))?;
                if lineno == 0 {
                    if !line.starts_with("t_s,") {
                        return Err(CliError::Usage(format!(
                            "input is not an EMG CSV (header {line:?})"
                        )));
                    }
                    continue;
                }
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != NUM_CHANNELS + 1 {
                    return Err(CliError::Runtime(format!(
                        "line {}: wrong channel count ({} fields)",
                        lineno + 1,
                        fields.len()
                    )));
                }
                let mut parsed = [0.0f64; NUM_CHANNELS + 1];
                for (i, f) in fields.iter().enumerate() {
                    parsed[i] = f.trim().parse().map_err(|_| {
                        CliError::Runtime(format!("line {}: bad number {f:?}", lineno + 1))
                    })?;
                }
                if let Some(output) = engine.push_values(parsed[0], &parsed[1..])? {
                    writeln!(writer, "{}", control_csv_row(&output))
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                }
            }
            writer
                .flush()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            if let Ok(report) = engine.latency_report() {
                eprintln!("{}", report.summary());
            }
            Ok(())
        }

        Command::Inspect { path } => {
            require_file(&path, "file")?;
            inspect(&path)
        }
    }
}

fn inspect(path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not JSON: {e}", path.display())))?;

    if value.get("knn").is_some() {
        let model = load_model(path)?;
        println!("model bundle {}", path.display());
        println!("  schema version: {}", model.schema_version);
        println!(
            "  channels: {:?}",
            model.channels.iter().map(|c| c.get()).collect::<Vec<_>>()
        );
        println!("  feature length: {}", model.features.feature_len());
        println!("  pca components retained: {}", model.pca.retained);
        println!(
            "  knn: {} stored windows, k = {}",
            model.knn.len(),
            model.knn.k
        );
        println!("  tree nodes: {}", model.tree.nodes.len());
        println!(
            "  force norm: offset {:.3} N, scale {:.3} N",
            model.force_norm.offset, model.force_norm.scale
        );
        println!("  sample rate: {} Hz", model.sample_rate_hz);
        return Ok(());
    }

    if value.get("sequences").is_some() {
        let dataset = load_dataset(path)?;
        println!("dataset {}", path.display());
        println!("  schema version: {}", dataset.schema_version);
        println!("  sequences: {}", dataset.sequences.len());
        println!(
            "  gesture tasks: {}, step tasks: {}",
            dataset.gesture_subset().sequences.len(),
            dataset
                .sequences
                .iter()
                .filter(|s| s.is_step_task())
                .count()
        );
        println!("  total frames: {}", dataset.total_frames());
        let mut by_task: std::collections::BTreeMap<&str, usize> = Default::default();
        for s in &dataset.sequences {
            *by_task.entry(s.task.as_str()).or_default() += 1;
        }
        for (task, count) in by_task {
            println!("  task {task}: {count} sequences");
        }
        let total_secs: f64 = dataset
            .sequences
            .iter()
            .filter_map(|s| s.emg.last().map(|f| f.t))
            .sum();
        println!("  total duration: {total_secs:.1} s");
        return Ok(());
    }

    Err(CliError::Usage(format!(
        "{}: neither a dataset manifest nor a model bundle",
        path.display()
    )))
}
