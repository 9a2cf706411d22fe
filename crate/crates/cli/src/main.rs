//! Command-line surface for the gesture classification pipeline.
//!
//! Exit codes: 0 success (a REJECTED verdict is a result, not an error),
//! 1 data or processing error, 2 usage error, 3 classification failed
//! (no dimension cleared the variance threshold for any template).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use posewarp::classify::{
    classify, read_template_set, select_template_detailed, write_template_set, ClassifyError,
    PipelineParams, TemplateSet,
};
use posewarp::dtw::{dtw_exact, fast_dtw};
use posewarp::eval::{
    generate_synthetic_corpus, load_corpus_manifest, run_protocol, sweep_t_var,
    write_corpus_manifest, ManifestEntry, SyntheticSpec,
};
use posewarp::keypoints::{load_sequence, repair_missing};
use posewarp::normalize::normalize_sequence;
use posewarp::signals::{prepare, read_sequence_file, write_sequence_file, PreparedSequence};

#[derive(Parser)]
#[command(
    name = "posewarp",
    version,
    about = "Gesture classification for 2D pose keypoint sequences (per-dimension DTW + 1-NN)"
)]
struct Cli {
    /// JSON config file supplying parameter defaults; flags override it.
    #[arg(long, global = true, env = "CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    /// Median filter radius for the dimension-selection signal.
    #[arg(long)]
    median_radius: Option<usize>,
    /// Gaussian smoothing sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// Variance threshold for dimension selection.
    #[arg(long)]
    t_var: Option<f64>,
    /// DTW engine (default fast).
    #[arg(long, value_enum)]
    dtw: Option<DtwEngine>,
    /// FastDTW refinement radius (default 1).
    #[arg(long)]
    radius: Option<usize>,
    /// Reject the query when the minimum warping distance exceeds this.
    #[arg(long)]
    reject_threshold: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Debug)]
enum DtwEngine {
    Fast,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an OpenPose JSON directory into a normalized sequence file.
    Ingest {
        /// Directory of per-frame OpenPose JSON files.
        openpose_dir: PathBuf,
        /// Output sequence file.
        #[arg(long)]
        out: PathBuf,
        /// Gesture label stored in the sequence file.
        #[arg(long)]
        label: Option<String>,
        /// Subject id (only used with --manifest).
        #[arg(long)]
        subject: Option<String>,
        /// Trial number (only used with --manifest).
        #[arg(long)]
        trial: Option<u32>,
        /// Frame rate stored as metadata.
        #[arg(long)]
        fps: Option<f64>,
        /// Append an entry to this corpus manifest (requires --label,
        /// --subject and --trial).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Select the best template per gesture from one subject's trials.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Subject whose trials supply the templates.
        #[arg(long)]
        subject: String,
        /// Output template-set file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Classify a sequence file against a template set; prints JSON.
    Classify {
        sequence: PathBuf,
        #[arg(long)]
        templates: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Run the evaluation protocol over a corpus manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Template subject; all of its sequences are excluded from
        /// evaluation.
        #[arg(long)]
        subject: String,
        /// Comma-separated t_var values; emits a sweep CSV instead of a
        /// confusion matrix.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Time exact DTW against FastDTW on random series.
    Bench {
        /// Comma-separated series lengths.
        #[arg(long, value_delimiter = ',', default_value = "256,1024")]
        lengths: Vec<usize>,
        /// Comma-separated FastDTW radii.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        radius: Vec<usize>,
        /// Series pairs per configuration.
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Emit machine-readable CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Generate a synthetic corpus: sequence files plus a manifest.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        gestures: usize,
        #[arg(long, default_value_t = 8)]
        subjects: usize,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 40)]
        min_frames: usize,
        #[arg(long, default_value_t = 56)]
        max_frames: usize,
        /// Uniform ±pixel noise amplitude.
        #[arg(long, default_value_t = 2.0)]
        noise: f64,
        /// Per-trial length jitter fraction.
        #[arg(long, default_value_t = 0.25)]
        time_jitter: f64,
        /// Number of extra classes confusable with base classes.
        #[arg(long, default_value_t = 0)]
        confusable: usize,
        #[arg(long, default_value_t = 0.15)]
        spike_probability: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// Optional JSON config file; same knobs as the parameter flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    median_radius: Option<usize>,
    sigma: Option<f64>,
    t_var: Option<f64>,
    dtw: Option<String>,
    radius: Option<usize>,
    reject_threshold: Option<f64>,
    threads: Option<usize>,
}

enum CliError {
    Usage(String),
    Data(String),
    ClassificationFailed,
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Data(_) => ExitCode::from(1),
            CliError::ClassificationFailed => ExitCode::from(3),
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),+) => {
        $(impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Data(err.to_string())
            }
        })+
    };
}

data_error_from!(
    posewarp::keypoints::KeypointError,
    posewarp::normalize::NormalizeError,
    posewarp::signals::SignalError,
    posewarp::eval::EvalError,
    std::io::Error
);

impl From<ClassifyError> for CliError {
    fn from(err: ClassifyError) -> Self {
        match err {
            ClassifyError::ClassificationFailed => CliError::ClassificationFailed,
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
                CliError::Data(msg) => eprintln!("error: {msg}"),
                CliError::ClassificationFailed => eprintln!(
                    "classification failed: no dimension cleared the variance threshold \
                     for any template"
                ),
            }
            err.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    if let Some(threads) = cli.threads.or(config.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Data(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Ingest {
            openpose_dir,
            out,
            label,
            subject,
            trial,
            fps,
            manifest,
        } => cmd_ingest(&openpose_dir, &out, label, subject, trial, fps, manifest.as_deref()),
        Command::Train {
            manifest,
            subject,
            out,
            params,
        } => cmd_train(&manifest, &subject, &out, resolve_params(&params, &config)),
        Command::Classify {
            sequence,
            templates,
            params,
        } => cmd_classify(&sequence, &templates, &merge_flags(&params, &config)),
        Command::Evaluate {
            manifest,
            subject,
            sweep,
            out,
            params,
        } => cmd_evaluate(
            &manifest,
            &subject,
            sweep.as_deref(),
            out.as_deref(),
            resolve_params(&params, &config),
        ),
        Command::Bench {
            lengths,
            radius,
            reps,
            seed,
            csv,
        } => cmd_bench(&lengths, &radius, reps, seed, csv),
        Command::Synth {
            out,
            gestures,
            subjects,
            trials,
            min_frames,
            max_frames,
            noise,
            time_jitter,
            confusable,
            spike_probability,
            seed,
        } => {
            let spec = SyntheticSpec {
                gesture_count: gestures,
                subjects,
                trials,
                frame_range: (min_frames, max_frames),
                noise_amplitude: noise,
                time_scale_jitter: time_jitter,
                confusable_count: confusable,
                neck_spike_probability: spike_probability,
            };
            cmd_synth(&out, &spec, seed)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let config: ConfigFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    if let Some(dtw) = config.dtw.as_deref() {
        if dtw != "fast" && dtw != "exact" {
            return Err(CliError::Usage(format!(
                "invalid config {}: dtw must be \"fast\" or \"exact\", got \"{dtw}\"",
                path.display()
            )));
        }
    }
    Ok(config)
}

/// Fold config-file values into flag slots the user left unset.
fn merge_flags(args: &ParamArgs, config: &ConfigFile) -> ParamArgs {
    let dtw_from_config = match config.dtw.as_deref() {
        Some("exact") => Some(DtwEngine::Exact),
        Some("fast") => Some(DtwEngine::Fast),
        _ => None,
    };
    ParamArgs {
        median_radius: args.median_radius.or(config.median_radius),
        sigma: args.sigma.or(config.sigma),
        t_var: args.t_var.or(config.t_var),
        dtw: args.dtw.or(dtw_from_config),
        radius: args.radius.or(config.radius),
        reject_threshold: args.reject_threshold.or(config.reject_threshold),
    }
}

/// Effective DTW radius: the exact engine runs the full dynamic program,
/// expressed as a radius no window can be smaller than.
fn effective_radius(engine: Option<DtwEngine>, radius: Option<usize>) -> usize {
    match engine.unwrap_or(DtwEngine::Fast) {
        DtwEngine::Exact => usize::MAX,
        DtwEngine::Fast => radius.unwrap_or_else(|| PipelineParams::default().dtw_radius),
    }
}

fn resolve_params(args: &ParamArgs, config: &ConfigFile) -> PipelineParams {
    let merged = merge_flags(args, config);
    let defaults = PipelineParams::default();
    PipelineParams {
        median_radius: merged.median_radius.unwrap_or(defaults.median_radius),
        sigma: merged.sigma.unwrap_or(defaults.sigma),
        t_var: merged.t_var.unwrap_or(defaults.t_var),
        dtw_radius: effective_radius(merged.dtw, merged.radius),
        reject_threshold: merged.reject_threshold,
    }
}

fn cmd_ingest(
    openpose_dir: &Path,
    out: &Path,
    label: Option<String>,
    subject: Option<String>,
    trial: Option<u32>,
    fps: Option<f64>,
    manifest: Option<&Path>,
) -> Result<(), CliError> {
    if !openpose_dir.is_dir() {
        return Err(CliError::Usage(format!(
            "{} is not a readable directory",
            openpose_dir.display()
        )));
    }

    let raw = load_sequence(openpose_dir)?;
    let repaired = repair_missing(&raw)?;
    let mut sequence = normalize_sequence(&repaired)?;
    sequence.label = label.clone();
    write_sequence_file(out, &sequence, fps)?;
    println!("wrote {} ({} frames)", out.display(), sequence.len());

    if let Some(manifest_path) = manifest {
        let (label, subject, trial) = match (label, subject, trial) {
            (Some(l), Some(s), Some(t)) => (l, s, t),
            _ => {
                return Err(CliError::Usage(
                    "--manifest needs --label, --subject and --trial".into(),
                ))
            }
        };
        let mut entries: Vec<ManifestEntry> = if manifest_path.exists() {
            let bytes = std::fs::read(manifest_path)?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Data(format!("existing manifest: {e}")))?
        } else {
            Vec::new()
        };
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let entry_path = out
            .strip_prefix(base)
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_else(|_| out.to_string_lossy().into_owned());
        entries.push(ManifestEntry {
            path: entry_path,
            label,
            subject,
            trial,
        });
        write_corpus_manifest(manifest_path, &entries)?;
        println!("appended to {}", manifest_path.display());
    }
    Ok(())
}

fn cmd_train(
    manifest: &Path,
    subject: &str,
    out: &Path,
    params: PipelineParams,
) -> Result<(), CliError> {
    let corpus = load_corpus_manifest(manifest)?;
    let mut chosen = BTreeMap::new();
    for gesture in &corpus.gesture_ids {
        let candidates: Vec<PreparedSequence> = corpus
            .sequences
            .iter()
            .filter(|s| s.subject == subject && s.label() == gesture)
            .map(|s| prepare(&s.sequence, params.median_radius, params.sigma))
            .collect();
        if candidates.is_empty() {
            return Err(CliError::Data(format!(
                "subject `{subject}` has no trials for gesture `{gesture}`"
            )));
        }
        let (template, total) =
            select_template_detailed(&candidates, params.t_var, params.dtw_radius)?;
        println!(
            "{gesture}: {} (total warping distance {total:.4})",
            template.prepared.source_id
        );
        let normalized = corpus
            .sequences
            .iter()
            .find(|s| s.sequence.source_id == template.prepared.source_id)
            .expect("winner came from the corpus")
            .sequence
            .clone();
        chosen.insert(gesture.clone(), normalized);
    }
    write_template_set(out, &chosen, &params)?;
    println!("wrote {} ({} templates)", out.display(), chosen.len());
    Ok(())
}

fn cmd_classify(
    sequence_path: &Path,
    templates_path: &Path,
    flags: &ParamArgs,
) -> Result<(), CliError> {
    let stored = read_template_set(templates_path)?;

    // Preparation parameters always come from the template set — the
    // query must be prepared the same way the templates were. Decision
    // parameters may be overridden per invocation.
    if flags.median_radius.is_some() || flags.sigma.is_some() {
        log::warn!("--median-radius/--sigma are fixed by the template set; ignoring overrides");
    }
    let mut params = stored.params.clone();
    if let Some(t_var) = flags.t_var {
        params.t_var = t_var;
    }
    if let Some(threshold) = flags.reject_threshold {
        params.reject_threshold = Some(threshold);
    }
    if flags.dtw.is_some() || flags.radius.is_some() {
        params.dtw_radius = effective_radius(flags.dtw, flags.radius);
    }
    let set = TemplateSet {
        templates: stored.templates,
        params,
    };

    let sequence = read_sequence_file(sequence_path)?;
    let query = prepare(&sequence, set.params.median_radius, set.params.sigma);
    let outcome = classify(&query, &set)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome).expect("outcome serializes")
    );
    Ok(())
}

fn cmd_evaluate(
    manifest: &Path,
    subject: &str,
    sweep: Option<&[f64]>,
    out: Option<&Path>,
    params: PipelineParams,
) -> Result<(), CliError> {
    let corpus = load_corpus_manifest(manifest)?;
    let emit = |csv: String| -> Result<(), CliError> {
        match out {
            Some(path) => {
                std::fs::write(path, csv)?;
                println!("wrote {}", path.display());
                Ok(())
            }
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    };

    match sweep {
        Some(thresholds) => {
            let report = sweep_t_var(&corpus, subject, &params, thresholds)?;
            emit(report.to_csv())
        }
        None => {
            let outcome = run_protocol(&corpus, subject, &params)?;
            emit(outcome.matrix.to_csv())?;
            println!(
                "accuracy: {:.4} ({}/{} correct, {} failed)",
                outcome.accuracy, outcome.n_correct, outcome.n_total, outcome.n_failed
            );
            Ok(())
        }
    }
}

fn cmd_bench(
    lengths: &[usize],
    radii: &[usize],
    reps: usize,
    seed: u64,
    csv: bool,
) -> Result<(), CliError> {
    if lengths.is_empty() || radii.is_empty() || reps == 0 {
        return Err(CliError::Usage("need at least one length, radius and rep".into()));
    }

    // Smooth random walks; raw noise makes the error column meaningless.
    let make_pair = |len: usize, rng: &mut ChaCha8Rng| {
        let walk = |rng: &mut ChaCha8Rng| {
            let mut acc = 0.0;
            let series: Vec<f64> = (0..len)
                .map(|_| {
                    acc += rng.random_range(-1.0..1.0);
                    acc
                })
                .collect();
            posewarp::signals::gaussian_filter(&series, 1.0)
        };
        (walk(rng), walk(rng))
    };

    let mut rows = Vec::new();
    for &len in lengths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (len as u64));
        let pairs: Vec<_> = (0..reps).map(|_| make_pair(len, &mut rng)).collect();

        let start = Instant::now();
        let exact: Vec<f64> = pairs
            .iter()
            .map(|(a, b)| dtw_exact(a, b).expect("non-empty").0)
            .collect();
        let exact_ms = start.elapsed().as_secs_f64() * 1000.0 / reps as f64;
        rows.push(("exact".to_string(), len, None, exact_ms, 0.0));

        for &radius in radii {
            let start = Instant::now();
            let fast: Vec<f64> = pairs
                .iter()
                .map(|(a, b)| fast_dtw(a, b, radius).expect("non-empty").0)
                .collect();
            let fast_ms = start.elapsed().as_secs_f64() * 1000.0 / reps as f64;
            let mean_rel_error = fast
                .iter()
                .zip(&exact)
                .map(|(f, e)| if *e > 1e-12 { (f - e) / e } else { 0.0 })
                .sum::<f64>()
                / reps as f64;
            rows.push(("fast".to_string(), len, Some(radius), fast_ms, mean_rel_error));
        }
    }

    if csv {
        println!("algorithm,length,radius,mean_ms,mean_rel_error");
        for (algo, len, radius, ms, err) in &rows {
            let radius = radius.map(|r| r.to_string()).unwrap_or_default();
            println!("{algo},{len},{radius},{ms:.4},{err:.6}");
        }
    } else {
        println!(
            "{:<8} {:>8} {:>8} {:>12} {:>16}",
            "algo", "length", "radius", "mean ms", "mean rel error"
        );
        for (algo, len, radius, ms, err) in &rows {
            let radius = radius.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
            println!("{algo:<8} {len:>8} {radius:>8} {ms:>12.4} {err:>16.6}");
        }
    }
    Ok(())
}

fn cmd_synth(out: &Path, spec: &SyntheticSpec, seed: u64) -> Result<(), CliError> {
    let corpus = generate_synthetic_corpus(spec, seed)?;
    std::fs::create_dir_all(out)?;

    let mut entries = Vec::with_capacity(corpus.len());
    for item in &corpus.sequences {
        let file_name = format!("{}.json", item.sequence.source_id);
        write_sequence_file(&out.join(&file_name), &item.sequence, None)?;
        entries.push(ManifestEntry {
            path: file_name,
            label: item.label().to_string(),
            subject: item.subject.clone(),
            trial: item.trial,
        });
    }
    let manifest_path = out.join("manifest.json");
    write_corpus_manifest(&manifest_path, &entries)?;
    println!(
        "wrote {} sequences and {} ({} gestures, seed {seed})",
        corpus.len(),
        manifest_path.display(),
        corpus.gesture_ids.len()
    );
    Ok(())
}
