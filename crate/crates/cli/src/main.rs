//! Command-line front end: quantize features, manage corpora, train models,
//! fold in held-out documents, build similarity matrices, and run the
//! stability / cross-group experiment protocols.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use topicsim::corpus::{Corpus, Document};
use topicsim::experiments::{
    run_cross_group, run_stability, CorrelationReport, ExperimentGroup, ExperimentPlan,
};
use topicsim::inference::{fold_in, read_theta_csv};
use topicsim::mantel::{mantel_test, Tail};
use topicsim::sampler::{train, TrainConfig, TrainedModel};
use topicsim::similarity::{read_matrix_csv, similarity_matrix, Measure};
use topicsim::synthetic::{generate, Coupling, LabelSpec, ModalitySpec, SyntheticConfig};
use topicsim::vq::{fit_codebook, load_feature_vectors, load_tracked_features, quantize, Codebook};

#[derive(Parser)]
#[command(name = "topicsim", version, about = "Multi-modal topic-model document similarity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Vector-quantize continuous features into a bag-of-words modality.
    #[command(subcommand)]
    Vq(VqCommand),
    /// Inspect and generate corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a topic model on a corpus directory.
    Train(TrainArgs),
    /// Estimate topic proportions for held-out documents.
    Foldin(FoldinArgs),
    /// Build a pairwise document similarity matrix.
    Similarity(SimilarityArgs),
    /// Permutation test of association between two similarity matrices.
    Mantel(MantelArgs),
    /// Multi-seed, multi-fold experiment protocols.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum VqCommand {
    /// Fit a k-means codebook on feature vectors (one vector per line).
    Fit(VqFitArgs),
    /// Quantize per-track features against a codebook into a corpus.
    Apply(VqApplyArgs),
}

#[derive(Args)]
struct VqFitArgs {
    /// Feature file: one vector per line, comma or whitespace separated.
    #[arg(long)]
    features: PathBuf,
    /// Number of centroids.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Codebook CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VqApplyArgs {
    /// Codebook CSV written by `vq fit`.
    #[arg(long)]
    codebook: PathBuf,
    /// Tracked feature file: lines of `track_id,v1,...,vd`.
    #[arg(long)]
    features: PathBuf,
    /// Modality name for the resulting vocabulary.
    #[arg(long, default_value = "audio")]
    modality: String,
    /// Corpus directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Load a corpus directory and report its shape.
    Validate(CorpusValidateArgs),
    /// Generate a synthetic corpus with known structure.
    Synth(CorpusSynthArgs),
}

#[derive(Args)]
struct CorpusValidateArgs {
    /// Corpus directory.
    dir: PathBuf,
}

#[derive(Args)]
struct CorpusSynthArgs {
    #[arg(long, default_value_t = 300)]
    docs: usize,
    /// Number of generating topics.
    #[arg(long, default_value_t = 5)]
    topics: usize,
    /// Modality as name:vocab_size:tokens_per_doc (repeatable).
    #[arg(long = "modality", required = true)]
    modalities: Vec<String>,
    #[arg(long, default_value_t = 0.2)]
    doc_alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    phi_concentration: f64,
    /// Number of label groups; omit for an unlabelled corpus.
    #[arg(long)]
    label_groups: Option<usize>,
    #[arg(long, default_value_t = 20.0)]
    label_concentration: f64,
    /// Draw each modality from its own proportions instead of shared ones.
    #[arg(long)]
    independent: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Optional key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    evidence_window: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    hyper_update_every: Option<usize>,
    #[arg(long)]
    alpha_init: Option<f64>,
    #[arg(long)]
    beta_init: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FoldinArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Held-out corpus directory (same modalities as the model).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Proportions CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Model directory.
    #[arg(long)]
    model: PathBuf,
    /// Held-out corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Proportions CSV written by `foldin`.
    #[arg(long)]
    theta: PathBuf,
    #[arg(long, default_value_t = Measure::Predictive)]
    measure: Measure,
    /// Optional fold tag recorded in the matrix manifest.
    #[arg(long)]
    fold: Option<String>,
    /// Matrix CSV to write (a .manifest sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MantelArgs {
    /// First similarity matrix CSV.
    #[arg(long)]
    a: PathBuf,
    /// Second similarity matrix CSV over the same documents.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 100)]
    permutations: usize,
    #[arg(long, default_value_t = Tail::Upper)]
    tail: Tail,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON file for the full result.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Seed stability: correlate replicate similarity matrices within groups.
    Stability(StabilityArgs),
    /// Cross-group association with Mantel p-values.
    Cross(CrossArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Modality group as name=modality1,modality2 (repeatable).
    #[arg(long = "group", required = true)]
    groups: Vec<String>,
    /// Topic counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
    topics: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    seeds_per_model: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    permutations: usize,
    #[arg(long, default_value_t = 200)]
    foldin_sweeps: usize,
    #[arg(long, default_value_t = 4000)]
    iterations: usize,
    #[arg(long, default_value_t = 50)]
    evidence_window: usize,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    hyper_update_every: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha_init: f64,
    #[arg(long, default_value_t = 0.01)]
    beta_init: f64,
    #[arg(long, default_value_t = Tail::Upper)]
    tail: Tail,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for rows.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args)]
struct CrossArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// First group name.
    #[arg(long)]
    a: String,
    /// Second group name.
    #[arg(long)]
    b: String,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Vq(VqCommand::Fit(args)) => vq_fit(args),
        Command::Vq(VqCommand::Apply(args)) => vq_apply(args),
        Command::Corpus(CorpusCommand::Validate(args)) => corpus_validate(args),
        Command::Corpus(CorpusCommand::Synth(args)) => corpus_synth(args),
        Command::Train(args) => train_cmd(args),
        Command::Foldin(args) => foldin_cmd(args),
        Command::Similarity(args) => similarity_cmd(args),
        Command::Mantel(args) => mantel_cmd(args),
        Command::Experiment(ExperimentCommand::Stability(args)) => stability_cmd(args),
        Command::Experiment(ExperimentCommand::Cross(args)) => cross_cmd(args),
    }
}

fn vq_fit(args: VqFitArgs) -> Result<()> {
    let points = load_feature_vectors(&args.features)
        .with_context(|| format!("reading {}", args.features.display()))?;
    let codebook = fit_codebook(&points, args.k, args.seed, args.max_iters, args.tol)?;
    codebook.save(&args.out)?;
    println!(
        "codebook: K={} dim={} distortion={:.6} -> {}",
        codebook.k(),
        codebook.dim(),
        codebook.distortion().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn vq_apply(args: VqApplyArgs) -> Result<()> {
    let codebook = Codebook::load(&args.codebook)
        .with_context(|| format!("reading {}", args.codebook.display()))?;
    let tracks = load_tracked_features(&args.features)
        .with_context(|| format!("reading {}", args.features.display()))?;
    if tracks.is_empty() {
        bail!("no tracks in {}", args.features.display());
    }
    let vocab = topicsim::corpus::Vocabulary::numbered(args.modality.clone(), codebook.k())?;
    let documents: Vec<Document> = tracks
        .into_iter()
        .map(|(track, features)| {
            Ok(Document {
                doc_id: track,
                counts: vec![quantize(&codebook, &features)?],
                label: None,
            })
        })
        .collect::<topicsim::Result<_>>()?;
    let docs = documents.len();
    let corpus = Corpus::new(args.modality, vec![vocab], documents)?;
    corpus.save_dir(&args.out)?;
    println!("quantized {} tracks -> {}", docs, args.out.display());
    Ok(())
}

fn corpus_validate(args: CorpusValidateArgs) -> Result<()> {
    let corpus = Corpus::load_dir(&args.dir)
        .with_context(|| format!("loading {}", args.dir.display()))?;
    println!("corpus: {} ({} documents)", corpus.name(), corpus.doc_count());
    for (m, vocab) in corpus.vocabularies().iter().enumerate() {
        let tokens: u64 = corpus.documents().iter().map(|d| d.tokens_in(m)).sum();
        println!(
            "  modality {}: vocabulary {} tokens {}",
            vocab.name(),
            vocab.size(),
            tokens
        );
    }
    let labelled = corpus
        .documents()
        .iter()
        .filter(|d| d.label.is_some())
        .count();
    if labelled > 0 {
        println!("  labelled documents: {labelled}");
    }
    let empty = corpus.empty_document_ids().len();
    if empty > 0 {
        println!("  empty documents: {empty}");
    }
    Ok(())
}

fn parse_modality_spec(spec: &str) -> Result<ModalitySpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("modality '{spec}' is not name:vocab_size:tokens_per_doc");
    }
    Ok(ModalitySpec {
        name: parts[0].to_string(),
        vocab_size: parts[1]
            .parse()
            .with_context(|| format!("vocab size in '{spec}'"))?,
        tokens_per_doc: parts[2]
            .parse()
            .with_context(|| format!("tokens per doc in '{spec}'"))?,
    })
}

fn corpus_synth(args: CorpusSynthArgs) -> Result<()> {
    let modalities = args
        .modalities
        .iter()
        .map(|s| parse_modality_spec(s))
        .collect::<Result<Vec<_>>>()?;
    let config = SyntheticConfig {
        docs: args.docs,
        topics: args.topics,
        modalities,
        doc_alpha: args.doc_alpha,
        phi_concentration: args.phi_concentration,
        labels: args.label_groups.map(|count| LabelSpec {
            count,
            concentration: args.label_concentration,
        }),
        coupling: if args.independent {
            Coupling::Independent
        } else {
            Coupling::Shared
        },
        seed: args.seed,
    };
    let made = generate(&config)?;
    made.corpus.save_dir(&args.out)?;
    println!(
        "generated {} documents, {} modalities -> {}",
        made.corpus.doc_count(),
        made.corpus.modality_count(),
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let corpus = Corpus::load_dir(&args.corpus)
        .with_context(|| format!("loading {}", args.corpus.display()))?;
    let mut config = match &args.config {
        Some(path) => {
            TrainConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let topics = args
                .topics
                .context("either --config or --topics is required")?;
            TrainConfig::new(topics)
        }
    };
    if let Some(topics) = args.topics {
        config.topics = topics;
    }
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.evidence_window {
        config.evidence_window = v;
    }
    if let Some(v) = args.burn_in {
        config.burn_in = v;
    }
    if let Some(v) = args.hyper_update_every {
        config.hyper_update_every = v;
    }
    if let Some(v) = args.alpha_init {
        config.alpha_init = v;
    }
    if let Some(v) = args.beta_init {
        config.beta_init = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let model = train(&corpus, &config)?;
    model.save_dir(&args.out)?;
    println!(
        "trained T={} evidence={:.4} selected_iteration={} -> {}",
        model.topic_count(),
        model.evidence,
        model.selected_iteration,
        args.out.display()
    );
    Ok(())
}

fn foldin_cmd(args: FoldinArgs) -> Result<()> {
    let model = TrainedModel::load_dir(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let corpus = Corpus::load_dir(&args.corpus)
        .with_context(|| format!("loading {}", args.corpus.display()))?;
    let result = fold_in(&model, &corpus, args.sweeps, args.seed)?;
    result.write_csv(&args.out)?;
    println!(
        "folded in {} documents ({} sweeps) -> {}",
        result.doc_ids.len(),
        result.sweeps,
        args.out.display()
    );
    Ok(())
}

fn similarity_cmd(args: SimilarityArgs) -> Result<()> {
    let model = TrainedModel::load_dir(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let corpus = Corpus::load_dir(&args.corpus)
        .with_context(|| format!("loading {}", args.corpus.display()))?;
    let (doc_ids, thetas) = read_theta_csv(&args.theta)
        .with_context(|| format!("reading {}", args.theta.display()))?;
    let mut matrix = similarity_matrix(&corpus, &doc_ids, &thetas, &model, args.measure)?;
    matrix.fold = args.fold;
    matrix.write_csv(&args.out)?;
    println!(
        "{} similarity over {} documents -> {}",
        args.measure,
        matrix.n(),
        args.out.display()
    );
    Ok(())
}

fn mantel_cmd(args: MantelArgs) -> Result<()> {
    let (ids_a, values_a, n) =
        read_matrix_csv(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let (ids_b, values_b, _) =
        read_matrix_csv(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    if ids_a != ids_b {
        bail!("matrices cover different documents");
    }
    let result = mantel_test(
        &values_a,
        &values_b,
        n,
        args.permutations,
        args.seed,
        args.tail,
    )?;
    if let Some(path) = &args.out {
        result.save_json(path)?;
    }
    println!(
        "rho={:.6} p={:.6} n={} permutations={} tail={}",
        result.rho, result.p, result.n, result.permutations, result.tail
    );
    Ok(())
}

fn build_plan(args: &PlanArgs) -> Result<(Corpus, ExperimentPlan)> {
    let corpus = Corpus::load_dir(&args.corpus)
        .with_context(|| format!("loading {}", args.corpus.display()))?;
    let known: BTreeSet<String> = corpus.modality_names().into_iter().collect();
    let mut groups = Vec::new();
    for spec in &args.groups {
        let (name, modalities) = spec
            .split_once('=')
            .with_context(|| format!("group '{spec}' is not name=modality,..."))?;
        let modalities: Vec<String> = modalities
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string())
            .collect();
        for modality in &modalities {
            if !known.contains(modality) {
                bail!("group '{name}' references unknown modality '{modality}'");
            }
        }
        groups.push(ExperimentGroup {
            name: name.to_string(),
            modalities,
        });
    }
    let mut train_config = TrainConfig::new(1);
    train_config.iterations = args.iterations;
    train_config.evidence_window = args.evidence_window;
    train_config.burn_in = args.burn_in;
    train_config.hyper_update_every = args.hyper_update_every;
    train_config.alpha_init = args.alpha_init;
    train_config.beta_init = args.beta_init;
    let mut plan = ExperimentPlan::new(groups, args.topics.clone(), train_config);
    plan.seeds_per_model = args.seeds_per_model;
    plan.folds = args.folds;
    plan.permutations = args.permutations;
    plan.foldin_sweeps = args.foldin_sweeps;
    plan.tail = args.tail;
    plan.seed = args.seed;
    Ok((corpus, plan))
}

fn write_report(report: &CorrelationReport, out: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    report.write_csv(&out.join("rows.csv"))?;
    report.write_summary_json(&out.join("summary.json"))?;
    println!(
        "{} correlation rows, {} failed cells -> {}",
        report.rows.len(),
        report.failed.len(),
        out.display()
    );
    Ok(())
}

fn stability_cmd(args: StabilityArgs) -> Result<()> {
    let (corpus, plan) = build_plan(&args.plan)?;
    let report = run_stability(&corpus, &plan)?;
    write_report(&report, &args.plan.out)
}

fn cross_cmd(args: CrossArgs) -> Result<()> {
    let (corpus, plan) = build_plan(&args.plan)?;
    let report = run_cross_group(&corpus, &plan, &args.a, &args.b)?;
    write_report(&report, &args.plan.out)
}
