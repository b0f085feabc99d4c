//! Command-line front end: Monte-Carlo sweeps, codec training, codebook
//! fitting, single-point evaluation, and a quick self-test.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vqlink::codec;
use vqlink::error::{Error, Result};
use vqlink::harness::{self, PipelineConfig, TransportMode};
use vqlink::rng;
use vqlink::vq;

#[derive(Parser)]
#[command(name = "vqlink", about = "Link-level simulator for learned text transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a link configuration file (defaults used when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every derived random stream
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the configured transport mode (direct, tanh, vq)
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo Eb/N0 sweep and write per-trial CSV records
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Output CSV path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated Eb/N0 points in dB, overriding the config
        #[arg(long)]
        ebn0: Option<String>,
        /// Trials per point, overriding the config
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Train the codec (and codebook, in vq mode) and save a checkpoint
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a codebook to encoder latents with k-means and save it
    FitCodebook {
        #[command(flatten)]
        common: CommonArgs,
        /// Codebook output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the link at a single Eb/N0 point and print the scores
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Eb/N0 in dB
        #[arg(long, default_value_t = 4.0)]
        ebn0: f64,
        /// Trials to average
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Noiseless end-to-end round trip as a quick installation check
    Selftest {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(mode) = &common.mode {
        cfg.mode = TransportMode::parse(mode)?;
    }
    Ok(cfg)
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep {
            common,
            out,
            ebn0,
            trials,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(points) = ebn0 {
                cfg.ebn0_points_db = points
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::config(format!("bad --ebn0 list: {e}")))?;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.validate()?;
            eprintln!("training codec ({} mode)...", cfg.mode.name());
            let art = harness::build_artifacts(&cfg, common.seed)?;
            eprintln!(
                "sweeping {} points x {} trials over {}...",
                cfg.ebn0_points_db.len(),
                cfg.trials,
                cfg.channel.name()
            );
            let records = harness::run_sweep(&cfg, &art, common.seed);
            eprint!("{}", harness::summarize(&records));
            write_or_print(&out, &harness::records_to_csv(&records))
        }
        Command::Train { common, out } => {
            let cfg = load_config(&common)?;
            let art = harness::build_artifacts(&cfg, common.seed)?;
            let clean = codec::clean_token_accuracy(
                &art.params,
                &art.codebook,
                &art.vocab,
                &art.eval_corpus,
            )?;
            eprintln!("clean token accuracy through the quantizer: {clean:.4}");
            std::fs::write(
                &out,
                codec::checkpoint_to_string(&art.params, &art.codebook, &art.vocab),
            )?;
            eprintln!("checkpoint written to {}", out.display());
            Ok(())
        }
        Command::FitCodebook { common, out } => {
            let cfg = load_config(&common)?;
            let art = harness::build_artifacts(&cfg, common.seed)?;
            // gather encoder latent segments over the training corpus
            let corpus = codec::toy_corpus(
                cfg.corpus_sentences,
                &mut rng::stream(common.seed, "train-corpus", &[]),
            );
            let mut samples = Vec::new();
            for s in &corpus {
                let ids = art.vocab.tokenize(s);
                if ids.is_empty() {
                    continue;
                }
                let r = art.params.encode(&ids)?;
                samples.extend(vq::segment(&r, cfg.d_z)?);
            }
            let fit = vq::kmeans_fit(
                &samples,
                cfg.codebook_size,
                200,
                &mut rng::stream(common.seed, "kmeans", &[]),
            )?;
            eprintln!(
                "k-means distortion: {:.6} after {} iterations",
                fit.distortion_trace.last().copied().unwrap_or(f64::NAN),
                fit.distortion_trace.len()
            );
            std::fs::write(&out, fit.codebook.to_file_string())?;
            eprintln!("codebook written to {}", out.display());
            Ok(())
        }
        Command::Eval {
            common,
            ebn0,
            trials,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.ebn0_points_db = vec![ebn0];
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.validate()?;
            let art = harness::build_artifacts(&cfg, common.seed)?;
            let records = harness::run_sweep(&cfg, &art, common.seed);
            print!("{}", harness::summarize(&records));
            let ok: Vec<_> = records.iter().filter(|r| r.ok).collect();
            if let Some(first) = ok.first() {
                let n = ok.len() as f64;
                let mean = |f: &dyn Fn(&harness::TrialRecord) -> f64| {
                    ok.iter().map(|r| f(r)).sum::<f64>() / n
                };
                println!(
                    "mode {} | bleu-4 {:.4} | match {:.4} | ser {:.4} | compression x{:.1}",
                    first.mode,
                    mean(&|r| r.bleu[3]),
                    mean(&|r| r.match_score),
                    mean(&|r| r.ser),
                    first.compression_factor,
                );
            }
            Ok(())
        }
        Command::Selftest { common } => {
            let mut cfg = load_config(&common)?;
            cfg.train_epochs = cfg.train_epochs.min(40);
            cfg.eval_sentences = cfg.eval_sentences.min(3);
            let art = harness::build_artifacts(&cfg, common.seed)?;
            let mut rng = rng::stream(common.seed, "selftest", &[]);
            for sentence in &art.eval_corpus {
                let out = harness::run_sentence(&cfg, &art, sentence, 60.0, &mut rng)?;
                if out.ber != 0.0 {
                    return Err(Error::Corrupt(format!(
                        "noiseless round trip lost bits (ber {})",
                        out.ber
                    )));
                }
            }
            println!("selftest ok: noiseless round trips are lossless");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
