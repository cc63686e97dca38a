//! Rewriting pipelines and the end-to-end experiment runner.
//!
//! An experiment is described by a JSON file (see [`ExperimentConfig`]). It
//! splits a corpus, fits the codecs each arm needs, rewrites the
//! crowdsourcing split, simulates annotation, runs every configured
//! aggregation and writes result tables into a fresh output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, AggregatedLabels, MaceConfig, Method};
use crate::annotation::{simulate_annotations, Annotation, HitItem, WorkerProfile};
use crate::codec::{
    calibrate_noise, fit_codec, rewrite_with_scale, Codec, CodecConfig, NoiseFamily, PrivacyParams, DEFAULT_CLIP_BOUND,
    DEFAULT_DELTA,
};
use crate::corpus::{builtin_lexicon, split_corpus, Corpus, CorpusFormat, CorpusSplits, DataPoint, Label, TaskLexicon};
use crate::evaluation::{
    changed_counts, default_stopwords, f1_score, gold_share, indicator_counts, predicted_share, significance_test,
    top_k_terms, ChangeHistogram, Confusion, IndicatorCounts, TermTables,
};
use crate::pii::{redact, redact_corpus, EntityKind, Gazetteer};
use crate::seed::{self, Part};
use crate::Error;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    ConfigIo { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("output directory {0} already exists and is not empty")]
    OutputNotEmpty(PathBuf),
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<Error> },
}

fn stage<T, E: Into<Error>>(name: &str, r: Result<T, E>) -> Result<T, ExperimentError> {
    r.map_err(|e| ExperimentError::Stage { stage: name.to_string(), source: Box::new(e.into()) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    PiiOnly,
    DpOnly,
    PiiPlusDp,
}

impl PipelineKind {
    pub fn uses_dp(self) -> bool {
        self != PipelineKind::PiiOnly
    }

    pub fn redacts(self) -> bool {
        self != PipelineKind::DpOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::PiiOnly => "pii_only",
            PipelineKind::DpOnly => "dp_only",
            PipelineKind::PiiPlusDp => "pii_plus_dp",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineKind::PiiOnly => "PII-only",
            PipelineKind::DpOnly => "DP-only",
            PipelineKind::PiiPlusDp => "PII+DP",
        })
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "pii_only" | "pii" => Ok(PipelineKind::PiiOnly),
            "dp_only" | "dp" => Ok(PipelineKind::DpOnly),
            "pii_plus_dp" | "pii__dp" | "pii_dp" => Ok(PipelineKind::PiiPlusDp),
            _ => Err(format!("unknown pipeline `{s}` (expected pii_only, dp_only or pii_plus_dp)")),
        }
    }
}

/// Name and location gazetteers used by the redaction stage.
#[derive(Debug, Clone)]
pub struct Gazetteers {
    pub names: Gazetteer,
    pub locations: Gazetteer,
}

impl Default for Gazetteers {
    fn default() -> Self {
        Gazetteers { names: Gazetteer::empty(EntityKind::Name), locations: Gazetteer::empty(EntityKind::Location) }
    }
}

/// Codecs pretrained on the raw and on the redacted pretraining split.
#[derive(Debug, Clone, Copy, Default)]
pub struct Codecs<'a> {
    pub raw: Option<&'a Codec>,
    pub redacted: Option<&'a Codec>,
}

impl<'a> Codecs<'a> {
    /// DP-only uses the raw codec, PII+DP the redacted one.
    pub fn for_pipeline(&self, kind: PipelineKind) -> Option<&'a Codec> {
        match kind {
            PipelineKind::PiiOnly => None,
            PipelineKind::DpOnly => self.raw,
            PipelineKind::PiiPlusDp => self.redacted,
        }
    }
}

/// One rewritten version of the crowdsourcing split.
///
/// Gold labels travel with the dataset for evaluation but are never
/// serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewrittenDataset {
    pub version_id: String,
    pub pipeline: PipelineKind,
    pub params: Option<PrivacyParams>,
    pub seed: u64,
    pub items: BTreeMap<String, Vec<String>>,
    #[serde(skip)]
    pub gold: BTreeMap<String, Label>,
}

impl RewrittenDataset {
    pub fn hit_items(&self) -> Vec<HitItem> {
        self.items
            .iter()
            .map(|(id, tokens)| HitItem { item_id: id.clone(), version_id: self.version_id.clone(), tokens: tokens.clone() })
            .collect()
    }

    /// The rewritten texts with their gold labels, for evaluation.
    pub fn to_corpus(&self) -> Result<Corpus, Error> {
        let points = self
            .items
            .iter()
            .map(|(id, tokens)| DataPoint::from_tokens(id.clone(), tokens.clone(), self.gold[id]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus::new(format!("{}-{}", self.pipeline.as_str(), self.version_id), "target", points)?)
    }
}

/// Rewrites the crowdsourcing split with one pipeline.
///
/// Each point's DP noise is seeded from `seed` and the point id.
pub fn run_pipeline(
    splits: &CorpusSplits,
    kind: PipelineKind,
    codecs: &Codecs<'_>,
    gazetteers: &Gazetteers,
    params: &PrivacyParams,
    seed: u64,
    version_id: &str,
) -> Result<RewrittenDataset, Error> {
    run_pipeline_inner(splits, kind, codecs, gazetteers, params, seed, version_id, None)
}

/// [`run_pipeline`] with an explicit noise scale instead of the calibrated
/// one. A scale of zero gives the codec's plain reconstructions.
#[allow(clippy::too_many_arguments)]
pub fn run_pipeline_with_scale(
    splits: &CorpusSplits,
    kind: PipelineKind,
    codecs: &Codecs<'_>,
    gazetteers: &Gazetteers,
    params: &PrivacyParams,
    seed: u64,
    version_id: &str,
    scale: f64,
) -> Result<RewrittenDataset, Error> {
    run_pipeline_inner(splits, kind, codecs, gazetteers, params, seed, version_id, Some(scale))
}

#[allow(clippy::too_many_arguments)]
fn run_pipeline_inner(
    splits: &CorpusSplits,
    kind: PipelineKind,
    codecs: &Codecs<'_>,
    gazetteers: &Gazetteers,
    params: &PrivacyParams,
    seed: u64,
    version_id: &str,
    scale: Option<f64>,
) -> Result<RewrittenDataset, Error> {
    let dp = if kind.uses_dp() {
        let codec = codecs
            .for_pipeline(kind)
            .ok_or_else(|| ExperimentError::Config(format!("pipeline {kind} needs its pretrained codec")))?;
        params.validate()?;
        let scale = match scale {
            Some(s) => s,
            None => calibrate_noise(params, params.sensitivity())?,
        };
        Some((codec, scale))
    } else {
        None
    };

    let mut items = BTreeMap::new();
    let mut gold = BTreeMap::new();
    for p in splits.crowdsourcing.points() {
        let mut tokens = if kind.redacts() {
            redact(&p.tokens, &gazetteers.names, &gazetteers.locations).tokens
        } else {
            p.tokens.clone()
        };
        if let Some((codec, scale)) = dp {
            let point_seed = seed::derive(seed, &[Part::Str("point"), Part::Str(&p.id)]);
            tokens = rewrite_with_scale(codec, &tokens, params, scale, point_seed)?;
        }
        items.insert(p.id.clone(), tokens);
        gold.insert(p.id.clone(), p.gold);
    }
    Ok(RewrittenDataset {
        version_id: version_id.to_string(),
        pipeline: kind,
        params: kind.uses_dp().then_some(*params),
        seed,
        items,
        gold,
    })
}

fn default_ratios() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

fn default_one() -> usize {
    1
}

fn default_top_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: PathBuf,
    pub format: CorpusFormat,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazetteerPaths {
    #[serde(default)]
    pub name: Option<PathBuf>,
    #[serde(default)]
    pub location: Option<PathBuf>,
}

/// Privacy settings shared by all DP arms; each arm supplies its own ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyDefaults {
    pub delta: f64,
    pub clip_bound: f64,
    pub noise: NoiseFamily,
}

impl Default for PrivacyDefaults {
    fn default() -> Self {
        PrivacyDefaults { delta: DEFAULT_DELTA, clip_bound: DEFAULT_CLIP_BOUND, noise: NoiseFamily::Gaussian }
    }
}

/// One row group of the result table: a pipeline at one privacy setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub pipeline: PipelineKind,
    /// Required for DP pipelines, rejected for PII-only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_one")]
    pub versions: usize,
    pub annotations_per_version: usize,
}

/// Either an explicit list of workers or `count` identical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkerPoolSpec {
    Explicit { profiles: Vec<WorkerProfile> },
    Uniform { count: usize, competence: f64, spam_target: f64 },
}

impl WorkerPoolSpec {
    pub fn profiles(&self) -> Result<Vec<WorkerProfile>, Error> {
        match self {
            WorkerPoolSpec::Explicit { profiles } => {
                for p in profiles {
                    p.validate()?;
                }
                Ok(profiles.clone())
            }
            WorkerPoolSpec::Uniform { count, competence, spam_target } => (1..=*count)
                .map(|i| WorkerProfile::new(format!("w{i:02}"), *competence, *spam_target).map_err(Error::from))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub resamples: usize,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig { alpha: 0.05, resamples: 10_000 }
    }
}

/// A complete experiment description.
///
/// Relative paths are resolved against the directory of the config file.
/// Fields with defaults may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    #[serde(default = "default_ratios")]
    pub split_ratios: [f64; 3],
    pub split_seed: u64,
    /// Built-in task lexicon: `atis`, `snips` or `ta`.
    pub lexicon: String,
    /// Sentiment lexicon file, required for `ta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_lexicon: Option<PathBuf>,
    #[serde(default)]
    pub gazetteers: GazetteerPaths,
    #[serde(default)]
    pub codec: CodecConfig,
    pub codec_seed: u64,
    #[serde(default)]
    pub privacy: PrivacyDefaults,
    pub arms: Vec<ArmConfig>,
    pub workers: WorkerPoolSpec,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub mace: MaceConfig,
    #[serde(default)]
    pub significance: SignificanceConfig,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Root seed for rewriting and annotation.
    pub seed: u64,
    /// Where results go when the command line does not say.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text =
            fs::read_to_string(path).map_err(|source| ExperimentError::ConfigIo { path: path.to_path_buf(), source })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The privacy parameters of an arm; `None` for PII-only.
    pub fn arm_params(&self, arm: &ArmConfig) -> Result<Option<PrivacyParams>, ExperimentError> {
        match (arm.pipeline.uses_dp(), arm.epsilon) {
            (false, None) => Ok(None),
            (false, Some(_)) => Err(ExperimentError::Config(format!("arm `{}`: epsilon only applies to DP pipelines", arm.name))),
            (true, None) => Err(ExperimentError::Config(format!("arm `{}`: DP pipelines need an epsilon", arm.name))),
            (true, Some(eps)) => PrivacyParams::new(eps, self.privacy.delta, self.privacy.clip_bound, self.privacy.noise)
                .map(Some)
                .map_err(|e| ExperimentError::Config(format!("arm `{}`: {e}", arm.name))),
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let r = self.split_ratios;
        if r.iter().any(|x| !(x.is_finite() && *x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split_ratios {r:?} must be positive and sum to 1"));
        }
        if !["atis", "snips", "ta"].contains(&self.lexicon.to_ascii_lowercase().as_str()) {
            return bad(format!("unknown lexicon `{}`", self.lexicon));
        }
        if self.lexicon.eq_ignore_ascii_case("ta") && self.sentiment_lexicon.is_none() {
            return bad("lexicon `ta` needs sentiment_lexicon".into());
        }
        self.codec.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.mace.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.methods.is_empty() {
            return bad("at least one aggregation method is required".into());
        }
        let workers = self.workers.profiles().map_err(|e| ExperimentError::Config(e.to_string()))?;
        let ids: BTreeSet<&str> = workers.iter().map(|w| w.worker_id.as_str()).collect();
        if ids.len() != workers.len() {
            return bad("worker ids must be unique".into());
        }
        let mut names = BTreeSet::new();
        for arm in &self.arms {
            let name_ok = !arm.name.is_empty()
                && arm.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !name_ok {
                return bad(format!("arm name `{}` may only use letters, digits, `_` and `-`", arm.name));
            }
            if !names.insert(arm.name.as_str()) {
                return bad(format!("duplicate arm name `{}`", arm.name));
            }
            if arm.versions == 0 {
                return bad(format!("arm `{}`: versions must be at least 1", arm.name));
            }
            if arm.annotations_per_version == 0 || arm.annotations_per_version > workers.len() {
                return bad(format!(
                    "arm `{}`: annotations_per_version must lie in 1..={}",
                    arm.name,
                    workers.len()
                ));
            }
            self.arm_params(arm)?;
        }
        let s = self.significance;
        if !(s.alpha > 0.0 && s.alpha < 1.0) || s.resamples == 0 {
            return bad("significance needs alpha in (0, 1) and resamples > 0".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        Ok(())
    }
}

/// One row per (arm, aggregation method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub arm: String,
    pub pipeline: PipelineKind,
    pub epsilon: Option<f64>,
    pub versions: usize,
    pub annotations_per_version: usize,
    pub method: Method,
    pub f1: f64,
    pub confusion: Confusion,
    pub predicted_share: f64,
}

/// Per-arm privacy-proxy statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub pipeline: PipelineKind,
    pub epsilon: Option<f64>,
    pub gold_share: f64,
    pub indicators: IndicatorCounts,
    /// Mean changed-word count over all versions of all items.
    pub mean_changed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub method: Method,
    pub arm_a: String,
    pub arm_b: String,
    pub f1_a: f64,
    pub f1_b: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub arms: Vec<ArmSummary>,
    pub original_indicators: IndicatorCounts,
    pub significance: Vec<SignificanceRow>,
}

impl ExperimentResults {
    pub fn f1(&self, arm: &str, method: Method) -> Option<f64> {
        self.rows.iter().find(|r| r.arm == arm && r.method == method).map(|r| r.f1)
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from("arm,pipeline,epsilon,versions,annotations_per_version,method,f1,tp,fp,fn,tn,predicted_share\n");
        for r in &self.rows {
            let c = r.confusion;
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{},{},{},{},{:.6}\n",
                r.arm,
                r.pipeline.as_str(),
                fmt_eps(r.epsilon),
                r.versions,
                r.annotations_per_version,
                r.method,
                r.f1,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                r.predicted_share
            ));
        }
        out
    }

    pub fn arms_csv(&self) -> String {
        let mut out = String::from("arm,pipeline,epsilon,gold_share,indicators_target,indicators_rest,mean_changed\n");
        let o = self.original_indicators;
        out.push_str(&format!("original,,,,{},{},0.000000\n", o.target, o.rest));
        for a in &self.arms {
            out.push_str(&format!(
                "{},{},{},{:.6},{},{},{:.6}\n",
                a.arm,
                a.pipeline.as_str(),
                fmt_eps(a.epsilon),
                a.gold_share,
                a.indicators.target,
                a.indicators.rest,
                a.mean_changed
            ));
        }
        out
    }

    pub fn significance_csv(&self) -> String {
        let mut out = String::from("method,arm_a,arm_b,f1_a,f1_b,p_value,significant\n");
        for s in &self.significance {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.4},{}\n",
                s.method, s.arm_a, s.arm_b, s.f1_a, s.f1_b, s.p_value, s.significant
            ));
        }
        out
    }
}

fn fmt_eps(e: Option<f64>) -> String {
    e.map(|e| e.to_string()).unwrap_or_default()
}

/// Everything one arm produced.
#[derive(Debug, Clone)]
pub struct ArmOutput {
    pub config: ArmConfig,
    pub versions: Vec<RewrittenDataset>,
    pub annotations: Vec<Annotation>,
    pub labels: BTreeMap<Method, AggregatedLabels>,
    pub changed: ChangeHistogram,
    pub terms: TermTables,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub splits: CorpusSplits,
    pub arms: Vec<ArmOutput>,
    pub results: ExperimentResults,
}

fn load_gazetteers(cfg: &ExperimentConfig) -> Result<Gazetteers, ExperimentError> {
    let load = |kind, p: &Option<PathBuf>| match p {
        Some(p) => stage("gazetteers", Gazetteer::load(kind, &cfg.resolve(p))),
        None => Ok(Gazetteer::empty(kind)),
    };
    Ok(Gazetteers {
        names: load(EntityKind::Name, &cfg.gazetteers.name)?,
        locations: load(EntityKind::Location, &cfg.gazetteers.location)?,
    })
}

/// Runs split → codecs → pipelines → annotation → aggregation → evaluation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let corpus = stage("ingest", crate::corpus::ingest_corpus(&cfg.resolve(&cfg.corpus.path), cfg.corpus.format))?;
    let splits = stage("split", split_corpus(&corpus, cfg.split_ratios, cfg.split_seed))?;
    let lexicon: TaskLexicon = stage(
        "lexicon",
        builtin_lexicon(&cfg.lexicon, cfg.sentiment_lexicon.as_ref().map(|p| cfg.resolve(p)).as_deref()),
    )?;
    let gazetteers = load_gazetteers(cfg)?;
    let workers = stage("workers", cfg.workers.profiles())?;

    let needs = |k: PipelineKind| cfg.arms.iter().any(|a| a.pipeline == k);
    let raw_codec = if needs(PipelineKind::DpOnly) {
        Some(stage("fit-codec", fit_codec(&splits.pretrain, &cfg.codec, cfg.codec_seed))?)
    } else {
        None
    };
    let redacted_codec = if needs(PipelineKind::PiiPlusDp) {
        let (redacted, _) = stage("redact-pretrain", redact_corpus(&splits.pretrain, &gazetteers.names, &gazetteers.locations))?;
        Some(stage("fit-codec", fit_codec(&redacted, &cfg.codec, cfg.codec_seed))?)
    } else {
        None
    };
    let codecs = Codecs { raw: raw_codec.as_ref(), redacted: redacted_codec.as_ref() };

    let stopwords = default_stopwords();
    let mut arms = Vec::with_capacity(cfg.arms.len());
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for arm in &cfg.arms {
        let params = cfg.arm_params(arm)?;
        let arm_seed = seed::derive(cfg.seed, &[Part::Str("arm"), Part::Str(&arm.name)]);
        // PII-only ignores the DP parameters; any valid set will do.
        let p = params.unwrap_or(PrivacyParams {
            epsilon: f64::INFINITY,
            delta: cfg.privacy.delta,
            clip_bound: cfg.privacy.clip_bound,
            noise: cfg.privacy.noise,
        });
        let versions = (0..arm.versions)
            .map(|v| {
                let version_id = format!("v{v}");
                stage("rewrite", run_pipeline(&splits, arm.pipeline, &codecs, &gazetteers, &p, seed::mix(arm_seed, v as u64), &version_id))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let hits: Vec<HitItem> = versions.iter().flat_map(RewrittenDataset::hit_items).collect();
        let annotate_seed = seed::derive(cfg.seed, &[Part::Str("annotate"), Part::Str(&arm.name)]);
        let annotations =
            stage("simulate", simulate_annotations(&hits, &workers, arm.annotations_per_version, &lexicon, annotate_seed))?;

        let mut labels = BTreeMap::new();
        for &method in &cfg.methods {
            let agg = stage("aggregate", aggregate(&annotations, method, &cfg.mace))?;
            let report = stage("evaluate", f1_score(&agg, &splits.crowdsourcing))?;
            rows.push(ResultRow {
                arm: arm.name.clone(),
                pipeline: arm.pipeline,
                epsilon: arm.epsilon,
                versions: arm.versions,
                annotations_per_version: arm.annotations_per_version,
                method,
                f1: report.f1,
                confusion: report.confusion,
                predicted_share: predicted_share(&agg),
            });
            labels.insert(method, agg);
        }

        let rewritten: Vec<Corpus> = versions.iter().map(|v| v.to_corpus()).collect::<Result<_, _>>().map_err(|e| {
            ExperimentError::Stage { stage: "evaluate".into(), source: Box::new(e) }
        })?;
        let mut changed = Vec::new();
        let mut indicators = IndicatorCounts::default();
        for c in &rewritten {
            changed.extend(stage("evaluate", changed_counts(&splits.crowdsourcing, c))?.into_values());
            let ic = indicator_counts(c, &lexicon);
            indicators.target += ic.target;
            indicators.rest += ic.rest;
        }
        let mean_changed = changed.iter().sum::<usize>() as f64 / changed.len().max(1) as f64;
        summaries.push(ArmSummary {
            arm: arm.name.clone(),
            pipeline: arm.pipeline,
            epsilon: arm.epsilon,
            gold_share: gold_share(&rewritten[0]),
            indicators,
            mean_changed,
        });
        let terms = stage("evaluate", top_k_terms(&rewritten[0], cfg.top_k, &stopwords))?;
        arms.push(ArmOutput {
            config: arm.clone(),
            versions,
            annotations,
            labels,
            changed: ChangeHistogram::from_counts(&changed),
            terms,
        });
    }

    let mut significance = Vec::new();
    for &method in &cfg.methods {
        for (i, a) in arms.iter().enumerate() {
            for b in &arms[i + 1..] {
                let sig_seed = seed::derive(cfg.seed, &[Part::Str("significance"), Part::Str(&a.config.name), Part::Str(&b.config.name)]);
                let r = stage(
                    "significance",
                    significance_test(
                        &a.labels[&method],
                        &b.labels[&method],
                        &splits.crowdsourcing,
                        cfg.significance.alpha,
                        cfg.significance.resamples,
                        sig_seed,
                    ),
                )?;
                let f1 = |arm: &ArmOutput| rows.iter().find(|r| r.arm == arm.config.name && r.method == method).map_or(0.0, |r| r.f1);
                significance.push(SignificanceRow {
                    method,
                    arm_a: a.config.name.clone(),
                    arm_b: b.config.name.clone(),
                    f1_a: f1(a),
                    f1_b: f1(b),
                    p_value: r.p_value,
                    significant: r.significant,
                });
            }
        }
    }

    let results = ExperimentResults {
        rows,
        arms: summaries,
        original_indicators: indicator_counts(&splits.crowdsourcing, &lexicon),
        significance,
    };
    Ok(ExperimentOutput { splits, arms, results })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ExperimentError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TextRecord<'a> {
    item_id: &'a str,
    version_id: &'a str,
    text: String,
}

fn records(versions: &[RewrittenDataset]) -> String {
    let mut out = String::new();
    for v in versions {
        for (id, tokens) in &v.items {
            let rec = TextRecord { item_id: id, version_id: &v.version_id, text: tokens.join(" ") };
            out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
            out.push('\n');
        }
    }
    out
}

#[derive(Serialize)]
struct VersionInfo<'a> {
    version_id: &'a str,
    pipeline: PipelineKind,
    params: Option<PrivacyParams>,
    seed: u64,
}

/// Runs the experiment and writes its output tree into `out_dir`.
///
/// `out_dir` must not exist or be empty; runs never overwrite each other.
/// Layout:
///
/// ```text
/// config.json              normalized config snapshot
/// splits.json              item ids per split
/// results.csv / .json      one row per (arm, method)
/// arms.csv                 gold share, indicator counts, mean changed words
/// significance.csv         pairwise bootstrap tests per method
/// arms/<arm>/versions.json       pipeline, params and seed per version
/// arms/<arm>/rewritten.jsonl     rewritten texts (no labels)
/// arms/<arm>/hits.jsonl          HIT batch
/// arms/<arm>/annotations.jsonl   simulated annotations
/// arms/<arm>/labels-<method>.jsonl
/// arms/<arm>/copied_words.csv
/// arms/<arm>/terms.csv
/// ```
pub fn write_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResults, ExperimentError> {
    cfg.validate()?;
    if out_dir.exists() {
        let mut entries = fs::read_dir(out_dir).map_err(|source| ExperimentError::Io { path: out_dir.to_path_buf(), source })?;
        if entries.next().is_some() {
            return Err(ExperimentError::OutputNotEmpty(out_dir.to_path_buf()));
        }
    }
    let output = run_experiment(cfg)?;

    let mut snapshot = cfg.clone();
    snapshot.output_dir = None;
    write(&out_dir.join("config.json"), json(&snapshot))?;
    let ids = |c: &Corpus| c.ids().map(str::to_string).collect::<Vec<_>>();
    let split_ids: BTreeMap<&str, Vec<String>> = [
        ("pretrain", ids(&output.splits.pretrain)),
        ("validation", ids(&output.splits.validation)),
        ("crowdsourcing", ids(&output.splits.crowdsourcing)),
    ]
    .into();
    write(&out_dir.join("splits.json"), json(&split_ids))?;
    write(&out_dir.join("results.csv"), output.results.results_csv())?;
    write(&out_dir.join("results.json"), json(&output.results))?;
    write(&out_dir.join("arms.csv"), output.results.arms_csv())?;
    write(&out_dir.join("significance.csv"), output.results.significance_csv())?;

    for arm in &output.arms {
        let dir = out_dir.join("arms").join(&arm.config.name);
        let info: Vec<VersionInfo> = arm
            .versions
            .iter()
            .map(|v| VersionInfo { version_id: &v.version_id, pipeline: v.pipeline, params: v.params, seed: v.seed })
            .collect();
        write(&dir.join("versions.json"), json(&info))?;
        write(&dir.join("rewritten.jsonl"), records(&arm.versions))?;
        let hits: Vec<HitItem> = arm.versions.iter().flat_map(RewrittenDataset::hit_items).collect();
        stage("export-hits", crate::annotation::export_hits(&hits, &dir.join("hits.jsonl")))?;
        stage("write-annotations", crate::annotation::write_annotations(&arm.annotations, &dir.join("annotations.jsonl")))?;
        for (method, labels) in &arm.labels {
            write(&dir.join(format!("labels-{method}.jsonl")), labels.to_jsonl())?;
        }
        write(&dir.join("copied_words.csv"), arm.changed.to_csv())?;
        write(&dir.join("terms.csv"), arm.terms.to_csv())?;
    }
    Ok(output.results)
}

/// Ids of rewritten texts that change when redacted again. Empty for a
/// well-behaved redaction stage.
pub fn non_idempotent_items(dataset: &RewrittenDataset, gazetteers: &Gazetteers) -> Vec<String> {
    dataset
        .items
        .iter()
        .filter(|(_, t)| redact(t, &gazetteers.names, &gazetteers.locations).tokens != **t)
        .map(|(id, _)| id.clone())
        .collect()
}
