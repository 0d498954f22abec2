use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use urex_core::checkpoint;
use urex_core::corpus::{relation_distribution, top_k_share, RelationStats};
use urex_core::metrics::{evaluate_labels, trivial_homogeneity_v};
use urex_core::oracle::{oracle_loss_curve, OracleConfig, OracleCurve, OracleSetting};
use urex_core::train::{train, TrainHistory, TrainedModel};
use urex_core::{
    etype_cluster, load_corpus, synth_corpus, Clustering, ClusteringReport, Corpus, FeatureSet,
    Scalar, SynthConfig, TrainConfig,
};

/// Unsupervised relation extraction: entity-type baselines, link-prediction
/// training, clustering metrics and oracle-loss curves.
#[derive(Debug, Parser)]
#[command(name = "urex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted synthetic corpus as JSONL.
    Synth(SynthArgs),
    /// Relation histogram and corpus diagnostics.
    Stats(StatsArgs),
    /// Cluster by the (head type, tail type) pair.
    Etype(EtypeArgs),
    /// Train the EType+ classifier (or a feature-based variant).
    Train(TrainArgs),
    /// Score a clustering or a trained model against gold labels.
    Eval(EvalArgs),
    /// Link-predictor loss curves under fixed relation assignments.
    OracleLoss(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator settings (JSON); unspecified fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output corpus (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of most frequent relations whose share is reported.
    #[arg(long, default_value_t = 15)]
    top: usize,
    /// Write the statistics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EtypeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Write the cluster labels as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the evaluation report as JSON (needs gold labels).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training corpus (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Labelled corpus for epoch selection; defaults to the labelled part of --corpus.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Training configuration (JSON); unspecified fields take the EType+ defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of relation slots [default: the config value, 10 without one].
    #[arg(long)]
    clusters: Option<usize>,
    /// Comma-separated feature templates (type_pair is always on):
    /// type_pair, entity, bow, dep_path, pos, trigger.
    #[arg(long, value_parser = parse_features)]
    features: Option<FeatureSet>,
    /// Seed of the first run; run k uses seed + k [default: the config seed].
    #[arg(long)]
    seed: Option<u64>,
    /// Independent restarts.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Checkpoint of the run with the best selection score.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-run histories and evaluation reports (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["pred", "model"])))]
struct EvalArgs {
    /// Corpus holding the gold labels.
    #[arg(long)]
    corpus: PathBuf,
    /// Cluster labels (JSON, as written by `etype --out`).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Trained checkpoint to apply to the corpus.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Settings to run (repeatable); all six when omitted.
    #[arg(long = "setting")]
    settings: Vec<OracleSetting>,
    /// Link-predictor and run settings (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training epochs per run [default: 10].
    #[arg(long)]
    epochs: Option<usize>,
    /// Runs averaged per setting [default: 3].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop unlabelled instances before assigning relations.
    #[arg(long)]
    labelled_only: bool,
    /// Number of settings run concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    parallel: u64,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Output directory; one `<setting>.json` curve per setting.
    #[arg(long)]
    out: PathBuf,
}

fn parse_features(s: &str) -> Result<FeatureSet, String> {
    FeatureSet::parse_list(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Ok(load_corpus(path)?)
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut config: SynthConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let corpus = synth_corpus(&config)?;
    corpus.save(&args.out)?;
    println!("wrote {} instances to {}", corpus.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct StatsOutput {
    #[serde(flatten)]
    distribution: RelationStats,
    top_k: usize,
    top_k_share: f64,
    trivial_homogeneity_v: Option<f64>,
}

fn stats(args: StatsArgs) -> anyhow::Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let distribution = relation_distribution(&corpus);
    let share = top_k_share(&distribution, args.top);
    let gold: Vec<&str> = corpus.gold_labels().into_iter().flatten().collect();
    let trivial = trivial_homogeneity_v(&gold).ok().map(|v| 100.0 * v);

    println!(
        "{} instances, {} labelled, {} relations",
        distribution.n_instances,
        distribution.n_labelled,
        distribution
            .relations
            .iter()
            .filter(|r| r.label != urex_core::corpus::UNALIGNED_BUCKET)
            .count()
    );
    for r in distribution.relations.iter().take(args.top) {
        println!("  {:>7} {:6.2}%  {}", r.count, r.pct, r.label);
    }
    println!("top-{} share: {:.2}%", args.top, share);
    if let Some(v) = trivial {
        println!("singleton-clustering V-measure: {v:.2}");
    }
    if let Some(out) = &args.out {
        write_json(
            out,
            &StatsOutput {
                distribution,
                top_k: args.top,
                top_k_share: share,
                trivial_homogeneity_v: trivial,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    n_clusters: usize,
    #[serde(flatten)]
    report: ClusteringReport,
}

fn report_for(clustering: &Clustering, corpus: &Corpus) -> anyhow::Result<EvalOutput> {
    let report = evaluate_labels(&clustering.labels, &corpus.gold_labels())?;
    Ok(EvalOutput {
        n_clusters: clustering.n_clusters(),
        report,
    })
}

fn etype(args: EtypeArgs) -> anyhow::Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let clustering = etype_cluster(&corpus);
    println!("{} instances in {} clusters", clustering.len(), clustering.n_clusters());
    if let Some(out) = &args.out {
        write_json(out, &clustering)?;
    }
    if corpus.n_labelled() > 0 {
        let out = report_for(&clustering, &corpus)?;
        println!("{}", out.report);
        if let Some(path) = &args.report {
            write_json(path, &out)?;
        }
    } else if args.report.is_some() {
        bail!("{} has no gold labels to evaluate against", args.corpus.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport {
    seed: u64,
    best_epoch: usize,
    best_dev_b3_f1: Option<f64>,
    train: Option<ClusteringReport>,
    dev: Option<ClusteringReport>,
    history: TrainHistory,
}

#[derive(Serialize)]
struct TrainOutput {
    config: TrainConfig,
    runs: Vec<RunReport>,
    mean_train: Option<ClusteringReport>,
    mean_dev: Option<ClusteringReport>,
}

fn labelled_report<T: Scalar>(
    model: &TrainedModel<T>,
    corpus: &Corpus,
) -> anyhow::Result<Option<ClusteringReport>> {
    if corpus.n_labelled() == 0 {
        return Ok(None);
    }
    Ok(Some(model.evaluate(corpus)?))
}

fn train_runs<T: Scalar>(
    args: &TrainArgs,
    config: &TrainConfig,
    corpus: &Corpus,
    dev: Option<&Corpus>,
) -> anyhow::Result<()> {
    let mut runs = Vec::new();
    let mut best: Option<(f64, TrainedModel<T>)> = None;
    for k in 0..args.runs {
        let cfg = TrainConfig {
            seed: config.seed + k,
            ..config.clone()
        };
        let model: TrainedModel<T> = train(&cfg, corpus, dev)?;
        let best_dev = model
            .history
            .epochs
            .get(model.history.best_epoch.saturating_sub(1))
            .and_then(|e| e.dev_b3_f1);
        let train_report = labelled_report(&model, corpus)?;
        let dev_report = dev.map(|d| labelled_report(&model, d)).transpose()?.flatten();
        match &train_report {
            Some(r) => println!("run {} (seed {}, epoch {}): {r}", k + 1, cfg.seed, model.history.best_epoch),
            None => println!("run {} (seed {}): {} epochs", k + 1, cfg.seed, model.history.epochs.len()),
        }
        runs.push(RunReport {
            seed: cfg.seed,
            best_epoch: model.history.best_epoch,
            best_dev_b3_f1: best_dev.map(|f| 100.0 * f),
            train: train_report,
            dev: dev_report,
            history: model.history.clone(),
        });
        let score = best_dev.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model));
        }
    }
    let collect = |f: fn(&RunReport) -> Option<ClusteringReport>| -> Option<ClusteringReport> {
        let reports: Option<Vec<_>> = runs.iter().map(f).collect();
        reports.and_then(|r| ClusteringReport::mean(&r))
    };
    let mean_train = collect(|r| r.train);
    let mean_dev = collect(|r| r.dev);
    if let (Some(m), true) = (&mean_train, args.runs > 1) {
        println!("mean over {} runs: {m}", args.runs);
    }
    if let Some(out) = &args.out {
        let (_, model) = best.expect("at least one run");
        checkpoint::save(&model, out)?;
    }
    if let Some(path) = &args.report {
        write_json(
            path,
            &TrainOutput {
                config: config.clone(),
                runs,
                mean_train,
                mean_dev,
            },
        )?;
    }
    Ok(())
}

fn train_cmd(args: TrainArgs) -> anyhow::Result<()> {
    let mut config: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(c) = args.clusters {
        config.c = c;
    }
    if let Some(f) = &args.features {
        config.features = f.clone();
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    let corpus = read_corpus(&args.corpus)?;
    let dev = args.dev.as_deref().map(read_corpus).transpose()?;
    match args.precision {
        Precision::F64 => train_runs::<f64>(&args, &config, &corpus, dev.as_ref()),
        Precision::F32 => train_runs::<f32>(&args, &config, &corpus, dev.as_ref()),
    }
}

fn load_clustering(path: &Path, corpus: &Corpus) -> anyhow::Result<Clustering> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match checkpoint::from_json::<f64>(&text) {
        Ok(model) => Ok(model.cluster(corpus)?),
        Err(urex_core::CheckpointError::Dtype { .. }) => {
            let model = checkpoint::from_json::<f32>(&text)?;
            Ok(model.cluster(corpus)?)
        }
        Err(e) => Err(anyhow::Error::new(e).context(format!("loading {}", path.display()))),
    }
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let clustering = match (&args.pred, &args.model) {
        (Some(p), _) => read_json::<Clustering>(p)?,
        (None, Some(m)) => load_clustering(m, &corpus)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let out = report_for(&clustering, &corpus)?;
    println!("{}", out.report);
    if let Some(path) = &args.report {
        write_json(path, &out)?;
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> anyhow::Result<()> {
    let mut config: OracleConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => OracleConfig::default(),
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(r) = args.runs {
        config.runs = r as usize;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let mut corpus = read_corpus(&args.corpus)?;
    if args.labelled_only {
        corpus = corpus.labelled_only();
    }
    let settings = if args.settings.is_empty() {
        OracleSetting::ALL.to_vec()
    } else {
        args.settings.clone()
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let run = |s: &OracleSetting| -> anyhow::Result<OracleCurve> {
        let curve = match args.precision {
            Precision::F64 => oracle_loss_curve::<f64>(&corpus, *s, &config),
            Precision::F32 => oracle_loss_curve::<f32>(&corpus, *s, &config),
        };
        curve.with_context(|| format!("oracle setting {s}"))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel as usize)
        .build()?;
    let curves: Vec<OracleCurve> = pool.install(|| {
        settings
            .par_iter()
            .map(run)
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    for curve in &curves {
        let path = args.out.join(format!("{}.json", curve.setting));
        write_json(&path, curve)?;
        println!(
            "{:<20} slots {:>3}  epoch-0 {:.4}  final {:.4}",
            curve.setting.name(),
            curve.n_slots,
            curve.epochs[0].nll_pos,
            curve.final_nll_pos()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
        Command::Etype(a) => etype(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::OracleLoss(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
