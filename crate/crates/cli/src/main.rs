//! `fpscore` command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fpscore::experiment::{derive_seed, run_size_study, StudyConfig};
use fpscore::fp::{score_samples, FpSummary};
use fpscore::naturalness::{calibrate_dual, calibrate_single_weighted, evaluate_system, ClassWeights};
use fpscore::ngram::{NgramConfig, NgramModel, TopK};
use fpscore::report::{emit_heatmap, emit_jsonl, read_jsonl, SampleRecord};
use fpscore::scorer::{NgramScorer, RemoteConfig, RemoteScorer, ScoreServer, Scorer};
use fpscore::stats::{paired_compare, render_csv, render_text, summary_table, Trial};
use fpscore::tokenizer::{collapse_repeats, read_corpus, tokenize, Vocabulary};
use fpscore::types::{SampleScore, ScorerInfo, ThresholdConfig};
use fpscore::{Error, Result};

#[derive(Parser)]
#[command(name = "fpscore", version, about = "Probability-fraction naturalness scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an n-gram model on a corpus (one sample per line).
    Train(TrainArgs),
    /// Sample a synthetic corpus from a model with top-k decoding.
    Generate(GenerateArgs),
    /// Score texts (one per line) and write per-sample records as JSON lines.
    Score(ScoreArgs),
    /// Fit classification thresholds from natural and synthetic score files.
    Calibrate(CalibrateArgs),
    /// Classify a scored set and print its h score.
    Evaluate(EvaluateArgs),
    /// Paired comparison of a generated score file against a gold one.
    Compare(CompareArgs),
    /// Run the generator/discriminator size study.
    Experiment(ExperimentArgs),
    /// Render one scored sample as a static heatmap page.
    Report(ReportArgs),
    /// Serve a model over the scoring protocol in the foreground.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8700)]
    port: u16,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0.75)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Minimum corpus frequency for a vocabulary entry.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Number of samples; ignored when --prompts is given.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Tokens to generate per sample.
    #[arg(long, default_value_t = 30)]
    length: usize,
    /// Suppress end-of-sentence so every sample reaches --length.
    #[arg(long)]
    fixed_length: bool,
    /// Prompt file, one per line; the first --prompt-len tokens of each line prompt one sample.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    prompt_len: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    /// `ngram:<model-file>` or `remote:<url>`.
    #[arg(long)]
    backend: String,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Leading tokens that condition scoring but are not scored (e.g. a prompt).
    #[arg(long, default_value_t = 0)]
    skip: usize,
    /// Drop samples with fewer scored tokens than this.
    #[arg(long, default_value_t = 1)]
    min_tokens: usize,
    /// Collapse runs of identical tokens before scoring.
    #[arg(long)]
    collapse_repeats: bool,
    /// Send raw text to a remote backend and use its tokenization.
    #[arg(long)]
    raw: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Dual,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    natural: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    mode: Mode,
    /// Spread factor for dual thresholds.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Cost of labeling a natural sample `m` (single mode).
    #[arg(long, default_value_t = 1.0)]
    weight_natural: f64,
    /// Cost of labeling a synthetic sample `h` (single mode).
    #[arg(long, default_value_t = 1.0)]
    weight_synthetic: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    thresholds: PathBuf,
    #[arg(long)]
    allow_backend_mismatch: bool,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "generated")]
    generator: String,
    #[arg(long, default_value = "")]
    discriminator: String,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Sample to render; the first record when omitted.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Score(a) => score(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus: Vec<Vec<String>> = read_corpus(&a.corpus)?.iter().map(|l| tokenize(l)).collect();
    let vocab = Vocabulary::build(&corpus, a.min_count)?;
    let ids: Vec<Vec<u32>> = corpus.iter().map(|t| vocab.encode(t)).collect();
    let config = NgramConfig {
        order: a.order,
        lambda: a.lambda,
        alpha: a.alpha,
    };
    let model = NgramModel::train(&ids, vocab, config)?;
    model.save(&a.out)?;
    info!("backend {}", model.info());
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let model = NgramModel::load(&a.model)?;
    info!("backend {}", model.info());
    let prompts: Vec<Vec<String>> = match &a.prompts {
        Some(p) => read_corpus(p)?
            .iter()
            .map(|l| tokenize(l).into_iter().take(a.prompt_len).collect())
            .collect(),
        None => vec![Vec::new(); a.n],
    };
    let opts = TopK {
        k: a.k,
        max_len: a.length,
        min_len: if a.fixed_length { a.length } else { 0 },
    };
    let vocab = model.vocab();
    let lines = pool(a.workers)?.install(|| {
        prompts
            .par_iter()
            .enumerate()
            .map(|(i, prompt)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(a.seed, &[i as u64]));
                let ids = model.generate(&mut rng, &opts, &vocab.encode(prompt))?;
                let mut text = prompt.clone();
                text.extend(vocab.decode(&ids));
                Ok(text.join(" "))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    write_file(&a.out, &out)
}

fn backend(spec: &str, workers: Option<usize>) -> Result<Box<dyn Scorer>> {
    if let Some(path) = spec.strip_prefix("ngram:") {
        Ok(Box::new(NgramScorer::from_shared(Arc::new(NgramModel::load(
            Path::new(path),
        )?))))
    } else if let Some(url) = spec.strip_prefix("remote:") {
        let mut config = RemoteConfig::from_env();
        if let Some(n) = workers {
            config.max_in_flight = n.clamp(1, config.max_in_flight);
        }
        Ok(Box::new(RemoteScorer::with_config(url, config)))
    } else {
        Err(Error::Config(format!(
            "backend must be ngram:<model-file> or remote:<url>, got {spec:?}"
        )))
    }
}

fn score(a: ScoreArgs) -> Result<()> {
    let lines = read_corpus(&a.input)?;
    let pool = pool(a.workers)?;
    let scored: Vec<SampleScore> = if a.raw && a.backend.starts_with("remote:") {
        let url = &a.backend["remote:".len()..];
        let client = RemoteScorer::with_config(url, RemoteConfig::from_env());
        let (info, results) = client.score_raw(&lines)?;
        info!("backend {info}");
        results
            .into_iter()
            .enumerate()
            .filter(|(_, (tokens, _))| tokens.len() >= a.skip + a.min_tokens.max(1))
            .map(|(i, (tokens, scores))| {
                fpscore::fp::assemble_with(
                    info.clone(),
                    &format!("line-{}", i + 1),
                    tokens[a.skip..].to_vec(),
                    scores[a.skip..].to_vec(),
                )
            })
            .collect::<Result<_>>()?
    } else {
        let scorer = backend(&a.backend, a.workers)?;
        let samples: Vec<(String, Vec<String>)> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let t = tokenize(l);
                let t = if a.collapse_repeats { collapse_repeats(&t) } else { t };
                (format!("line-{}", i + 1), t)
            })
            .filter(|(_, t)| t.len() >= a.skip + a.min_tokens.max(1))
            .collect();
        let dropped = lines.len() - samples.len();
        if dropped > 0 {
            info!("dropped {dropped} samples below the minimum length");
        }
        let full = pool.install(|| score_samples(scorer.as_ref(), &samples))?;
        full.into_iter()
            .map(|s| {
                fpscore::fp::assemble_with(
                    s.backend,
                    &s.sample_id,
                    s.tokens[a.skip..].to_vec(),
                    s.token_scores[a.skip..].to_vec(),
                )
            })
            .collect::<Result<_>>()?
    };
    if let Some(first) = scored.first() {
        info!("backend {}", first.backend);
    }
    info!("scored {} samples", scored.len());
    emit_jsonl(&scored, &a.out)
}

/// Backend identity of a score file; all records must agree.
fn file_backend(records: &[SampleRecord], path: &Path) -> Result<ScorerInfo> {
    let first = records
        .first()
        .ok_or_else(|| Error::Config(format!("{} holds no records", path.display())))?;
    if let Some(r) = records.iter().find(|r| r.backend != first.backend) {
        return Err(Error::BackendMismatch {
            expected: first.backend.fingerprint.clone(),
            found: r.backend.fingerprint.clone(),
        });
    }
    Ok(ScorerInfo {
        backend_name: first.backend.name.clone(),
        // Score files do not carry the vocabulary size.
        vocab_size: 0,
        model_fingerprint: first.backend.fingerprint.clone(),
    })
}

fn fps(records: &[SampleRecord]) -> Vec<f64> {
    records.iter().map(|r| r.fp_s.0).collect()
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let natural = read_jsonl(&a.natural)?;
    let synthetic = read_jsonl(&a.synthetic)?;
    let nb = file_backend(&natural, &a.natural)?;
    let sb = file_backend(&synthetic, &a.synthetic)?;
    if nb.model_fingerprint != sb.model_fingerprint {
        return Err(Error::BackendMismatch {
            expected: nb.model_fingerprint,
            found: sb.model_fingerprint,
        });
    }
    info!("backend {} fingerprint {}", nb.backend_name, nb.model_fingerprint);
    let mut cfg = match a.mode {
        Mode::Single => {
            let weights = ClassWeights {
                natural: a.weight_natural,
                synthetic: a.weight_synthetic,
            };
            calibrate_single_weighted(&fps(&natural), &fps(&synthetic), weights)?
        }
        Mode::Dual => calibrate_dual(&fps(&natural), &fps(&synthetic), a.c)?,
    };
    if cfg.calibration_meta.degenerate_overlap {
        warn!("calibration populations overlap; fell back to a single threshold");
    }
    cfg.calibration_meta.backend = Some(nb);
    info!(
        "calibration accuracy {:.4} ({} errors)",
        cfg.calibration_meta.calibration_accuracy, cfg.calibration_meta.calibration_errors
    );
    write_file(&a.out, &(serde_json::to_string_pretty(&cfg)? + "\n"))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let records = read_jsonl(&a.scores)?;
    let backend = file_backend(&records, &a.scores)?;
    info!("backend {} fingerprint {}", backend.backend_name, backend.model_fingerprint);
    let cfg: ThresholdConfig = serde_json::from_str(&read_file(&a.thresholds)?)?;
    cfg.thresholds.validate()?;
    match &cfg.calibration_meta.backend {
        Some(cal) if cal.model_fingerprint != backend.model_fingerprint => {
            if a.allow_backend_mismatch {
                warn!(
                    "thresholds calibrated on {} applied to {} (mismatch allowed)",
                    cal.model_fingerprint, backend.model_fingerprint
                );
            } else {
                return Err(Error::BackendMismatch {
                    expected: cal.model_fingerprint.clone(),
                    found: backend.model_fingerprint,
                });
            }
        }
        Some(_) => {}
        None => warn!("threshold file records no calibration backend"),
    }
    let result = evaluate_system(&fps(&records), &cfg)?;
    let mut out = std::io::stdout().lock();
    let written = if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&result)?)
    } else {
        writeln!(
            out,
            "n {}\nn_h {}\nn_m {}\nn_u {}\nh_score {}\nm_score {}\nmean_fp {}",
            result.n, result.n_h, result.n_m, result.n_u, result.h_score, result.m_score, result.mean_fp
        )
    };
    written.map_err(|e| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

fn compare(a: CompareArgs) -> Result<()> {
    let generated = read_jsonl(&a.generated)?;
    let gold = read_jsonl(&a.gold)?;
    let gb = file_backend(&generated, &a.generated)?;
    let ob = file_backend(&gold, &a.gold)?;
    if gb.model_fingerprint != ob.model_fingerprint {
        return Err(Error::BackendMismatch {
            expected: ob.model_fingerprint,
            found: gb.model_fingerprint,
        });
    }
    info!("backend {} fingerprint {}", gb.backend_name, gb.model_fingerprint);
    let comparison = paired_compare(&fps(&generated), &fps(&gold), a.seed)?;
    let discriminator = if a.discriminator.is_empty() {
        gb.backend_name.clone()
    } else {
        a.discriminator.clone()
    };
    let rows = summary_table(&[Trial {
        generator: a.generator.clone(),
        discriminator,
        comparison,
    }]);
    info!(
        "generated {} vs gold {}, p = {:.6}",
        FpSummary::from_values(&fps(&generated))?,
        FpSummary::from_values(&fps(&gold))?,
        comparison.p_value
    );
    let text = if a.csv { render_csv(&rows)? } else { render_text(&rows) };
    print!("{text}");
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let config = StudyConfig::from_file(&a.config)?;
    let result = run_size_study(&config, a.workers)?;
    let mut seen = std::collections::BTreeSet::new();
    for cell in result.cells.iter().filter(|c| seen.insert(c.discriminator.clone())) {
        info!("{}: backend {}", cell.discriminator, cell.backend);
    }
    result.write_outputs(&a.out)?;
    print!("{}", result.verdict_text());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let records = read_jsonl(&a.scores)?;
    let record = match &a.sample {
        Some(id) => records
            .iter()
            .find(|r| &r.sample_id == id)
            .ok_or_else(|| Error::Config(format!("no sample {id:?} in {}", a.scores.display())))?,
        None => records
            .first()
            .ok_or_else(|| Error::Config(format!("{} holds no records", a.scores.display())))?,
    };
    info!(
        "backend {} fingerprint {}",
        record.backend.name, record.backend.fingerprint
    );
    emit_heatmap(record, &a.out)
}

fn serve(a: ServeArgs) -> Result<()> {
    let model = NgramModel::load(&a.model)?;
    info!("backend {}", model.info());
    let server = ScoreServer::start(Some(Arc::new(model)), &format!("{}:{}", a.host, a.port))?;
    info!("serving at {}", server.url());
    server.join();
    Ok(())
}
