//! Command-line interface of the `privlabel` binary.
//!
//! Corpus files are TSV (`id<TAB>label<TAB>text`) or JSONL
//! (`{"id", "label", "text"}`); the format follows the file extension unless
//! `--format` is given. Rewritten texts and HIT batches share one JSONL
//! record shape, `{"item_id", "version_id", "text"}`, which never carries a
//! label.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::aggregation::{aggregate, AggregatedLabels, AggregationError, MaceConfig, Method};
use crate::annotation::{
    export_hits, import_annotations, read_annotations, read_hits, simulate_annotations, write_annotations, HitItem,
    WorkerProfile,
};
use crate::codec::{fit_codec, Codec, CodecConfig, NoiseFamily, PrivacyParams, DEFAULT_CLIP_BOUND, DEFAULT_DELTA};
use crate::corpus::{builtin_lexicon, ingest_corpus, split_corpus, Corpus, CorpusError, CorpusFormat, DataPoint};
use crate::evaluation::{
    class_share, copied_word_distribution, default_stopwords, f1_score, indicator_counts, significance_test,
    top_k_terms,
};
use crate::experiment::{
    run_pipeline, Codecs, ExperimentConfig, ExperimentError, Gazetteers, PipelineKind, RewrittenDataset,
};
use crate::pii::{redact_corpus, EntityKind, Gazetteer};
use crate::seed;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "privlabel", version, about = "Privacy rewriting, simulated crowd annotation and label aggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write it as normalized JSONL.
    Ingest {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a corpus into pretrain, validation and crowdsourcing parts.
    Split {
        #[command(flatten)]
        input: CorpusArgs,
        /// Pretrain, validation and crowdsourcing fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.1, 0.2])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives pretrain.jsonl, validation.jsonl and crowdsourcing.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit a codec on a pretraining corpus.
    FitCodec {
        #[command(flatten)]
        input: CorpusArgs,
        /// Redact the corpus before fitting (for the PII+DP pipeline).
        #[arg(long)]
        redact: bool,
        #[command(flatten)]
        gazetteers: GazetteerArgs,
        #[arg(long, default_value_t = CodecConfig::default().dim)]
        dim: usize,
        #[arg(long, default_value_t = CodecConfig::default().prior_weight)]
        prior_weight: f64,
        #[arg(long, default_value_t = CodecConfig::default().max_len)]
        max_len: usize,
        #[arg(long, default_value_t = CodecConfig::default().length_scale)]
        length_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite a corpus with one of the three pipelines.
    Rewrite {
        #[command(flatten)]
        input: CorpusArgs,
        /// pii_only, dp_only or pii_plus_dp.
        #[arg(long)]
        pipeline: PipelineKind,
        /// Codec file; required for the DP pipelines.
        #[arg(long)]
        codec: Option<PathBuf>,
        #[command(flatten)]
        gazetteers: GazetteerArgs,
        #[command(flatten)]
        privacy: PrivacyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        versions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a HIT batch (no labels) from a corpus or rewritten texts.
    ExportHits {
        /// Rewritten texts (`item_id`, `version_id`, `text` records).
        #[arg(long, conflicts_with = "corpus")]
        rewritten: Option<PathBuf>,
        /// A labeled corpus; its labels are dropped.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        format: Option<CorpusFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate crowdworkers labeling a HIT batch.
    Simulate {
        #[arg(long)]
        hits: PathBuf,
        #[command(flatten)]
        lexicon: LexiconArgs,
        /// JSON array of worker profiles; overrides the uniform pool flags.
        #[arg(long)]
        workers_file: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        workers: usize,
        #[arg(long, default_value_t = 0.8)]
        competence: f64,
        /// Probability of answering `target` when not reading the text.
        #[arg(long, default_value_t = 0.5)]
        spam_target: f64,
        #[arg(long, default_value_t = 5)]
        per_version: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a completed annotation file against the exported HIT batch.
    ImportAnnotations {
        #[arg(long)]
        hits: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate annotations into one label per item.
    Aggregate {
        #[arg(long)]
        annotations: PathBuf,
        /// mv, t:N (target if more than N say so), mace, mv_mv, mace_mv or mace_t0.
        #[arg(long)]
        method: Method,
        #[command(flatten)]
        mace: MaceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluation reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run a full experiment from a JSON config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Target-class F1 of aggregated labels against gold.
    F1 {
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        gold: GoldArgs,
        #[arg(long)]
        json: bool,
    },
    /// Paired bootstrap test for an F1 difference.
    Sig {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[command(flatten)]
        gold: GoldArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Indicator-word counts in target-class texts and the rest.
    Indicator {
        #[command(flatten)]
        texts: TextArgs,
        #[command(flatten)]
        lexicon: LexiconArgs,
    },
    /// Histogram of changed words between original and rewritten texts.
    Copied {
        #[command(flatten)]
        gold: GoldArgs,
        #[arg(long)]
        rewritten: PathBuf,
        #[arg(long, default_value = "v0")]
        version: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Share of the target class in gold labels or predictions.
    Share {
        #[arg(long, conflicts_with = "pred")]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        format: Option<CorpusFormat>,
    },
    /// Most frequent non-stopword terms per class.
    Terms {
        #[command(flatten)]
        texts: TextArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// One stopword per line; replaces the built-in list.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// tsv or jsonl; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Args)]
pub struct GoldArgs {
    /// Labeled corpus holding the gold labels.
    #[arg(long = "gold")]
    pub path: PathBuf,
    #[arg(long = "gold-format")]
    pub format: Option<CorpusFormat>,
}

/// A labeled corpus, or rewritten texts labeled through `--gold`.
#[derive(Debug, Args)]
pub struct TextArgs {
    #[command(flatten)]
    pub gold: GoldArgs,
    /// Rewritten texts to evaluate instead of the gold corpus' own texts.
    #[arg(long)]
    pub rewritten: Option<PathBuf>,
    #[arg(long, default_value = "v0")]
    pub version: String,
}

#[derive(Debug, Args)]
pub struct GazetteerArgs {
    /// Name gazetteer, one entry per line.
    #[arg(long)]
    pub names: Option<PathBuf>,
    /// Location gazetteer, one entry per line.
    #[arg(long)]
    pub locations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrivacyArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = DEFAULT_CLIP_BOUND)]
    pub clip: f64,
    #[arg(long, default_value = "gaussian")]
    pub noise: NoiseFamily,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// atis, snips or ta.
    #[arg(long)]
    pub lexicon: String,
    /// Sentiment lexicon (word, mean, std), required for `ta`.
    #[arg(long)]
    pub sentiment: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaceArgs {
    #[arg(long, default_value_t = MaceConfig::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = MaceConfig::default().smoothing)]
    pub smoothing: f64,
    #[arg(long, default_value_t = MaceConfig::default().restarts)]
    pub restarts: usize,
    #[arg(long, default_value_t = MaceConfig::default().coverage)]
    pub coverage: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl MaceArgs {
    fn config(&self) -> MaceConfig {
        MaceConfig {
            iterations: self.iterations,
            smoothing: self.smoothing,
            restarts: self.restarts,
            seed: self.seed,
            coverage: self.coverage,
        }
    }
}

/// Failure of a CLI command, with its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Lib(e) => e.exit_code(),
        }
    }
}

macro_rules! impl_from_lib {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Lib(e.into())
            }
        }
    )*};
}

impl_from_lib!(
    CorpusError,
    crate::pii::PiiError,
    crate::codec::CodecError,
    crate::annotation::AnnotationError,
    AggregationError,
    crate::evaluation::EvalError,
    ExperimentError
);

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn guess_format(path: &Path, explicit: Option<CorpusFormat>) -> CorpusFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
        _ => CorpusFormat::Jsonl,
    })
}

fn load_corpus(path: &Path, format: Option<CorpusFormat>) -> Result<Corpus, CliError> {
    Ok(ingest_corpus(path, guess_format(path, format))?)
}

fn load_gazetteers(args: &GazetteerArgs) -> Result<Gazetteers, CliError> {
    let load = |kind, p: &Option<PathBuf>| -> Result<Gazetteer, CliError> {
        Ok(match p {
            Some(p) => Gazetteer::load(kind, p)?,
            None => Gazetteer::empty(kind),
        })
    };
    Ok(Gazetteers { names: load(EntityKind::Name, &args.names)?, locations: load(EntityKind::Location, &args.locations)? })
}

fn load_labels(path: &Path) -> Result<AggregatedLabels, CliError> {
    AggregatedLabels::from_jsonl(&read(path)?)
        .map_err(|e| CliError::Format { path: path.to_path_buf(), reason: e.to_string() })
}

/// Rewritten texts of one version, labeled from the gold corpus.
fn rewritten_corpus(path: &Path, version: &str, gold: &Corpus) -> Result<Corpus, CliError> {
    let hits = read_hits(path)?;
    let points = hits
        .into_iter()
        .filter(|h| h.version_id == version)
        .map(|h| {
            let label = gold
                .get(&h.item_id)
                .ok_or_else(|| CliError::Format {
                    path: path.to_path_buf(),
                    reason: format!("item `{}` is not in the gold corpus", h.item_id),
                })?
                .gold;
            Ok(DataPoint::from_tokens(h.item_id, h.tokens, label)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Corpus::new(format!("{}-{version}", gold.name), gold.target_class_name.clone(), points)?)
}

fn texts(args: &TextArgs) -> Result<Corpus, CliError> {
    let gold = load_corpus(&args.gold.path, args.gold.format)?;
    match &args.rewritten {
        Some(p) => rewritten_corpus(p, &args.version, &gold),
        None => Ok(gold),
    }
}

fn hit_records(items: &[HitItem]) -> String {
    #[derive(serde::Serialize)]
    struct Rec<'a> {
        item_id: &'a str,
        version_id: &'a str,
        text: String,
    }
    let mut out = String::new();
    for h in items {
        let rec = Rec { item_id: &h.item_id, version_id: &h.version_id, text: h.tokens.join(" ") };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

/// Executes one parsed command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { input, out } => {
            let c = load_corpus(&input.input, input.format)?;
            c.write_jsonl(&out)?;
            eprintln!("{}: {} points", c.name, c.len());
        }
        Command::Split { input, ratios, seed, out_dir } => {
            let c = load_corpus(&input.input, input.format)?;
            let r: [f64; 3] = ratios.try_into().map_err(|_| CliError::Usage("--ratios needs three values".into()))?;
            let s = split_corpus(&c, r, seed)?;
            fs::create_dir_all(&out_dir).map_err(|source| CliError::Io { path: out_dir.clone(), source })?;
            for (name, part) in [("pretrain", &s.pretrain), ("validation", &s.validation), ("crowdsourcing", &s.crowdsourcing)] {
                part.write_jsonl(&out_dir.join(format!("{name}.jsonl")))?;
                eprintln!("{name}: {} points", part.len());
            }
        }
        Command::FitCodec { input, redact, gazetteers, dim, prior_weight, max_len, length_scale, seed, out } => {
            let mut c = load_corpus(&input.input, input.format)?;
            if redact {
                let g = load_gazetteers(&gazetteers)?;
                c = redact_corpus(&c, &g.names, &g.locations)?.0;
            }
            let cfg = CodecConfig { dim, prior_weight, max_len, length_scale };
            let codec = fit_codec(&c, &cfg, seed)?;
            codec.save(&out)?;
            eprintln!("codec: {} words, dim {}", codec.vocabulary().len(), codec.dim());
        }
        Command::Rewrite { input, pipeline, codec, gazetteers, privacy, seed, versions, out } => {
            let c = load_corpus(&input.input, input.format)?;
            if versions == 0 {
                return Err(CliError::Usage("--versions must be at least 1".into()));
            }
            let params = match (pipeline.uses_dp(), privacy.epsilon) {
                (true, None) => return Err(CliError::Usage(format!("pipeline {pipeline} needs --epsilon"))),
                (true, Some(eps)) => PrivacyParams::new(eps, privacy.delta, privacy.clip, privacy.noise)?,
                (false, _) => PrivacyParams {
                    epsilon: f64::INFINITY,
                    delta: privacy.delta,
                    clip_bound: privacy.clip,
                    noise: privacy.noise,
                },
            };
            let codec = match (&codec, pipeline.uses_dp()) {
                (Some(p), true) => Some(Codec::load(p)?),
                (None, true) => return Err(CliError::Usage(format!("pipeline {pipeline} needs --codec"))),
                (_, false) => None,
            };
            let codecs = Codecs { raw: codec.as_ref(), redacted: codec.as_ref() };
            let g = load_gazetteers(&gazetteers)?;
            // The pipeline rewrites the crowdsourcing part; here that is the whole input.
            let splits = crate::corpus::CorpusSplits { pretrain: c.clone(), validation: c.clone(), crowdsourcing: c };
            let mut items = Vec::new();
            for v in 0..versions {
                let d: RewrittenDataset =
                    run_pipeline(&splits, pipeline, &codecs, &g, &params, seed::mix(seed, v as u64), &format!("v{v}"))?;
                items.extend(d.hit_items());
            }
            write(&out, hit_records(&items))?;
            if pipeline.uses_dp() {
                eprintln!("released {versions} version(s); total epsilon {}", params.composed_epsilon(versions));
            }
        }
        Command::ExportHits { rewritten, corpus, format, out } => {
            let hits = match (rewritten, corpus) {
                (Some(r), None) => read_hits(&r)?,
                (None, Some(c)) => load_corpus(&c, format)?
                    .points()
                    .iter()
                    .map(|p| HitItem { item_id: p.id.clone(), version_id: "v0".into(), tokens: p.tokens.clone() })
                    .collect(),
                _ => return Err(CliError::Usage("give exactly one of --rewritten or --corpus".into())),
            };
            export_hits(&hits, &out)?;
            eprintln!("{} HITs", hits.len());
        }
        Command::Simulate { hits, lexicon, workers_file, workers, competence, spam_target, per_version, seed, out } => {
            let hits = read_hits(&hits)?;
            let lex = builtin_lexicon(&lexicon.lexicon, lexicon.sentiment.as_deref())?;
            let pool: Vec<WorkerProfile> = match workers_file {
                Some(p) => serde_json::from_str(&read(&p)?)
                    .map_err(|e| CliError::Format { path: p.clone(), reason: e.to_string() })?,
                None => (1..=workers)
                    .map(|i| WorkerProfile::new(format!("w{i:02}"), competence, spam_target))
                    .collect::<Result<_, _>>()?,
            };
            let anns = simulate_annotations(&hits, &pool, per_version, &lex, seed)?;
            write_annotations(&anns, &out)?;
            eprintln!("{} annotations", anns.len());
        }
        Command::ImportAnnotations { hits, input, out } => {
            let exported = read_hits(&hits)?;
            let anns = import_annotations(&input, &exported)?;
            write_annotations(&anns, &out)?;
            eprintln!("{} annotations", anns.len());
        }
        Command::Aggregate { annotations, method, mace, out } => {
            let anns = read_annotations(&annotations)?;
            let labels = aggregate(&anns, method, &mace.config())?;
            write(&out, labels.to_jsonl())?;
            eprintln!("{method}: {} items labeled", labels.len());
        }
        Command::Eval(cmd) => run_eval(cmd)?,
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output_dir.as_ref().map(|p| cfg.resolve(p)))
                .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output_dir".into()))?;
            let results = crate::experiment::write_experiment(&cfg, &out)?;
            print!("{}", results.results_csv());
        }
    }
    Ok(())
}

fn run_eval(cmd: EvalCommand) -> Result<(), CliError> {
    match cmd {
        EvalCommand::F1 { pred, gold, json } => {
            let gold = load_corpus(&gold.path, gold.format)?;
            let r = f1_score(&load_labels(&pred)?, &gold)?;
            if json {
                print!("{}", to_json(&r));
            } else {
                let c = r.confusion;
                println!("f1,tp,fp,fn,tn\n{:.6},{},{},{},{}", r.f1, c.tp, c.fp, c.fn_, c.tn);
            }
        }
        EvalCommand::Sig { pred_a, pred_b, gold, alpha, resamples, seed, json } => {
            let gold = load_corpus(&gold.path, gold.format)?;
            let r = significance_test(&load_labels(&pred_a)?, &load_labels(&pred_b)?, &gold, alpha, resamples, seed)?;
            if json {
                print!("{}", to_json(&r));
            } else {
                println!("observed_diff,p_value,significant\n{:.6},{:.4},{}", r.observed_diff, r.p_value, r.significant);
            }
        }
        EvalCommand::Indicator { texts: t, lexicon } => {
            let c = texts(&t)?;
            let lex = builtin_lexicon(&lexicon.lexicon, lexicon.sentiment.as_deref())?;
            let r = indicator_counts(&c, &lex);
            println!("target,rest\n{},{}", r.target, r.rest);
        }
        EvalCommand::Copied { gold, rewritten, version, out } => {
            let original = load_corpus(&gold.path, gold.format)?;
            let r = rewritten_corpus(&rewritten, &version, &original)?;
            let h = copied_word_distribution(&original, &r)?;
            emit(out.as_deref(), &h.to_csv())?;
        }
        EvalCommand::Share { gold, pred, format } => {
            let share = match (gold, pred) {
                (Some(g), None) => class_share(load_corpus(&g, format)?.points().iter().map(|p| p.gold)),
                (None, Some(p)) => class_share(load_labels(&p)?.labels.into_values()),
                _ => return Err(CliError::Usage("give exactly one of --gold or --pred".into())),
            };
            println!("target_share\n{share:.6}");
        }
        EvalCommand::Terms { texts: t, k, stopwords, out } => {
            let c = texts(&t)?;
            let sw: BTreeSet<String> = match stopwords {
                Some(p) => read(&p)?.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect(),
                None => default_stopwords(),
            };
            emit(out.as_deref(), &top_k_terms(&c, k, &sw)?.to_csv())?;
        }
    }
    Ok(())
}
