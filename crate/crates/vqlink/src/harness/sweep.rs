//! Monte-Carlo sweep over Eb/N0 points: deterministic per-trial RNG
//! streams, a worker pool capped by `VQLINK_THREADS`, index-ordered
//! reduction, and CSV output.

use super::config::PipelineConfig;
use super::pipeline::{self, LinkArtifacts};
use crate::error::Result;
use crate::rng;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// One trial's aggregated scores over the evaluation corpus.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub mode: String,
    pub channel: String,
    pub ebn0_db: f64,
    pub point: usize,
    pub trial: usize,
    /// false when the trial failed or panicked; metrics are then NaN
    pub ok: bool,
    pub ber: f64,
    pub ser: f64,
    /// NaN outside index mode
    pub index_error_rate: f64,
    pub token_accuracy: f64,
    pub bleu: [f64; 4],
    pub match_score: f64,
    pub compression_factor: f64,
    pub isi_flag: bool,
}

impl TrialRecord {
    fn failed(cfg: &PipelineConfig, point: usize, trial: usize) -> Self {
        Self {
            mode: cfg.mode.name().to_string(),
            channel: cfg.channel.name(),
            ebn0_db: cfg.ebn0_points_db[point],
            point,
            trial,
            ok: false,
            ber: f64::NAN,
            ser: f64::NAN,
            index_error_rate: f64::NAN,
            token_accuracy: f64::NAN,
            bleu: [f64::NAN; 4],
            match_score: f64::NAN,
            compression_factor: pipeline::compression_factor(cfg),
            isi_flag: cfg.isi_flag(),
        }
    }
}

/// Runs the evaluation corpus once at one Eb/N0 point and averages the
/// per-sentence scores.
pub fn run_trial(
    cfg: &PipelineConfig,
    art: &LinkArtifacts,
    point: usize,
    trial: usize,
    master_seed: u64,
) -> Result<TrialRecord> {
    let ebn0_db = cfg.ebn0_points_db[point];
    let mut rng = rng::stream(master_seed, "sweep-trial", &[point as u64, trial as u64]);
    let mut acc = TrialRecord {
        mode: cfg.mode.name().to_string(),
        channel: cfg.channel.name(),
        ebn0_db,
        point,
        trial,
        ok: true,
        ber: 0.0,
        ser: 0.0,
        index_error_rate: 0.0,
        token_accuracy: 0.0,
        bleu: [0.0; 4],
        match_score: 0.0,
        compression_factor: pipeline::compression_factor(cfg),
        isi_flag: cfg.isi_flag(),
    };
    let n = art.eval_corpus.len() as f64;
    let mut have_indices = false;
    for sentence in &art.eval_corpus {
        let out = pipeline::run_sentence(cfg, art, sentence, ebn0_db, &mut rng)?;
        acc.ber += out.ber / n;
        acc.ser += out.ser / n;
        acc.token_accuracy += out.token_accuracy / n;
        for (slot, b) in acc.bleu.iter_mut().zip(out.bleu) {
            *slot += b / n;
        }
        acc.match_score += out.match_score / n;
        if out.index_error_rate.is_finite() {
            acc.index_error_rate += out.index_error_rate / n;
            have_indices = true;
        }
    }
    if !have_indices {
        acc.index_error_rate = f64::NAN;
    }
    Ok(acc)
}

/// Worker-count cap: `VQLINK_THREADS` when set and positive, otherwise
/// the machine's parallelism.
fn worker_count(tasks: usize) -> usize {
    let configured = std::env::var("VQLINK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    configured.min(tasks).max(1)
}

/// Runs every (point, trial) pair, possibly in parallel. Results are
/// reduced in task-index order, so the output is byte-identical
/// regardless of worker count; a panicking trial becomes a failed row
/// and the sweep continues.
pub fn run_sweep(
    cfg: &PipelineConfig,
    art: &LinkArtifacts,
    master_seed: u64,
) -> Vec<TrialRecord> {
    let points = cfg.ebn0_points_db.len();
    let tasks = points * cfg.trials;
    let results: Mutex<Vec<Option<TrialRecord>>> = Mutex::new(vec![None; tasks]);
    let next = AtomicUsize::new(0);
    let workers = worker_count(tasks);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task = next.fetch_add(1, Ordering::Relaxed);
                if task >= tasks {
                    break;
                }
                let point = task / cfg.trials;
                let trial = task % cfg.trials;
                let record = std::panic::catch_unwind(AssertUnwindSafe(|| {
                    run_trial(cfg, art, point, trial, master_seed)
                }))
                .unwrap_or_else(|_| Ok(TrialRecord::failed(cfg, point, trial)))
                .unwrap_or_else(|_| TrialRecord::failed(cfg, point, trial));
                results.lock().unwrap()[task] = Some(record);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every task produces a record"))
        .collect()
}

/// Formats a float with 9 significant digits; non-finite values print as
/// `nan`, `inf`, or `-inf`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.8e}")
    }
}

/// Renders records as CSV with a single header row, in input order.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(
        "mode,channel,ebn0_db,point,trial,ok,ber,ser,index_error_rate,token_accuracy,\
         bleu_1,bleu_2,bleu_3,bleu_4,match,compression_factor,isi_flag\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.mode,
            r.channel,
            fmt_float(r.ebn0_db),
            r.point,
            r.trial,
            r.ok,
            fmt_float(r.ber),
            fmt_float(r.ser),
            fmt_float(r.index_error_rate),
            fmt_float(r.token_accuracy),
            fmt_float(r.bleu[0]),
            fmt_float(r.bleu[1]),
            fmt_float(r.bleu[2]),
            fmt_float(r.bleu[3]),
            fmt_float(r.match_score),
            fmt_float(r.compression_factor),
            r.isi_flag,
        ));
    }
    out
}

/// Per-point mean and standard error of a metric over its ok trials.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Human-readable per-point summary (token accuracy and BER).
pub fn summarize(records: &[TrialRecord]) -> String {
    let mut points: Vec<usize> = records.iter().map(|r| r.point).collect();
    points.sort_unstable();
    points.dedup();
    let mut out = String::new();
    for p in points {
        let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.point == p && r.ok).collect();
        let failed = records.iter().filter(|r| r.point == p && !r.ok).count();
        let acc: Vec<f64> = rows.iter().map(|r| r.token_accuracy).collect();
        let ber: Vec<f64> = rows.iter().map(|r| r.ber).collect();
        let (am, ae) = mean_stderr(&acc);
        let (bm, be) = mean_stderr(&ber);
        let ebn0 = records
            .iter()
            .find(|r| r.point == p)
            .map(|r| r.ebn0_db)
            .unwrap_or(f64::NAN);
        out.push_str(&format!(
            "ebn0 {ebn0:>6.2} dB | token acc {am:.4} +/- {ae:.4} | ber {bm:.4} +/- {be:.4} | trials {} failed {failed}\n",
            rows.len()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::TransportMode;

    fn tiny_cfg() -> PipelineConfig {
        PipelineConfig {
            mode: TransportMode::Vq,
            train_epochs: 20,
            corpus_sentences: 8,
            eval_sentences: 2,
            trials: 2,
            ebn0_points_db: vec![8.0, 40.0],
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn sweep_is_deterministic_across_worker_counts() {
        let cfg = tiny_cfg();
        let art = pipeline::build_artifacts(&cfg, 3).unwrap();
        std::env::set_var("VQLINK_THREADS", "1");
        let a = records_to_csv(&run_sweep(&cfg, &art, 3));
        std::env::set_var("VQLINK_THREADS", "3");
        let b = records_to_csv(&run_sweep(&cfg, &art, 3));
        std::env::remove_var("VQLINK_THREADS");
        let c = records_to_csv(&run_sweep(&cfg, &art, 3));
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn csv_shape_and_float_format() {
        let cfg = tiny_cfg();
        let art = pipeline::build_artifacts(&cfg, 4).unwrap();
        let records = run_sweep(&cfg, &art, 4);
        assert_eq!(records.len(), 4);
        let csv = records_to_csv(&records);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("mode,channel,ebn0_db"));
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 17);
        }
        // 9 significant digits
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_float(f64::NAN), "nan");
    }

    #[test]
    fn high_snr_point_scores_cleanly() {
        let cfg = tiny_cfg();
        let art = pipeline::build_artifacts(&cfg, 5).unwrap();
        let r = run_trial(&cfg, &art, 1, 0, 5).unwrap();
        assert!(r.ok);
        assert_eq!(r.ber, 0.0);
        assert_eq!(r.index_error_rate, 0.0);
        assert_eq!(r.compression_factor, 2.0);
        assert!(!r.isi_flag);
    }

    #[test]
    fn summary_mentions_every_point() {
        let cfg = tiny_cfg();
        let art = pipeline::build_artifacts(&cfg, 6).unwrap();
        let s = summarize(&run_sweep(&cfg, &art, 6));
        assert_eq!(s.lines().count(), 2);
        assert!(s.contains("token acc"));
    }
}
