//! Label aggregation: majority vote, threshold votes, MACE, and two-step
//! combinations over several rewritten versions of the same item.
//!
//! Every tie resolves to [`Label::NonTarget`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{group_by_item, Annotation};
use crate::corpus::Label;
use crate::seed::{self, Part};

#[derive(Debug, thiserror::Error)]
pub enum AggregationError {
    #[error("no annotations to aggregate")]
    NoAnnotations,
    #[error("MACE input is empty")]
    EmptyInput,
    #[error("MACE log-likelihood became non-finite")]
    NonFiniteLikelihood,
    #[error("invalid aggregation setting: {0}")]
    InvalidConfig(String),
    #[error("unknown aggregation method `{0}`")]
    UnknownMethod(String),
}

/// Per-item labels with a confidence in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabels {
    pub labels: BTreeMap<String, Label>,
    pub confidence: BTreeMap<String, f64>,
}

impl AggregatedLabels {
    fn insert(&mut self, item: String, label: Label, confidence: f64) {
        self.labels.insert(item.clone(), label);
        self.confidence.insert(item, confidence);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, item: &str) -> Option<Label> {
        self.labels.get(item).copied()
    }

    /// Vote-based labels, all with confidence 1.
    pub fn from_labels<I: IntoIterator<Item = (String, Label)>>(labels: I) -> Self {
        let mut out = AggregatedLabels::default();
        for (item, label) in labels {
            out.insert(item, label, 1.0);
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            item_id: &'a str,
            label: Label,
            confidence: f64,
        }
        let mut out = String::new();
        for (item, label) in &self.labels {
            let row = Row { item_id: item, label: *label, confidence: self.confidence[item] };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Row {
            item_id: String,
            label: Label,
            #[serde(default = "one")]
            confidence: f64,
        }
        fn one() -> f64 {
            1.0
        }
        let mut out = AggregatedLabels::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Row = serde_json::from_str(line)?;
            out.insert(row.item_id, row.label, row.confidence);
        }
        Ok(out)
    }
}

fn check_groups(groups: &BTreeMap<String, Vec<Label>>) -> Result<(), AggregationError> {
    if groups.is_empty() || groups.values().any(Vec::is_empty) {
        return Err(AggregationError::NoAnnotations);
    }
    Ok(())
}

fn target_count(labels: &[Label]) -> usize {
    labels.iter().filter(|l| l.is_target()).count()
}

/// The more frequent label per item.
pub fn majority_vote(groups: &BTreeMap<String, Vec<Label>>) -> Result<AggregatedLabels, AggregationError> {
    check_groups(groups)?;
    Ok(AggregatedLabels::from_labels(groups.iter().map(|(item, labels)| {
        let t = target_count(labels);
        let label = if 2 * t > labels.len() { Label::Target } else { Label::NonTarget };
        (item.clone(), label)
    })))
}

/// `Target` iff strictly more than `x` annotations say so.
pub fn threshold_aggregate(
    groups: &BTreeMap<String, Vec<Label>>,
    x: usize,
) -> Result<AggregatedLabels, AggregationError> {
    check_groups(groups)?;
    Ok(AggregatedLabels::from_labels(groups.iter().map(|(item, labels)| {
        let label = if target_count(labels) > x { Label::Target } else { Label::NonTarget };
        (item.clone(), label)
    })))
}

/// MACE training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaceConfig {
    pub iterations: usize,
    /// Additive smoothing on the expected counts of the M-step.
    pub smoothing: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Fraction of items, most confident first, that receive a label.
    pub coverage: f64,
}

impl Default for MaceConfig {
    fn default() -> Self {
        MaceConfig { iterations: 50, smoothing: 0.5, restarts: 10, seed: 0, coverage: 1.0 }
    }
}

impl MaceConfig {
    pub fn validate(&self) -> Result<(), AggregationError> {
        if self.restarts == 0 {
            return Err(AggregationError::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(AggregationError::InvalidConfig("smoothing must be non-negative".into()));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(AggregationError::InvalidConfig("coverage must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Fitted MACE parameters and item posteriors.
///
/// Probability pairs are ordered `[target, non_target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaceModel {
    /// θ: probability that a worker copies the true label.
    pub competences: BTreeMap<String, f64>,
    /// ξ: a worker's label distribution when not copying.
    pub spam_dists: BTreeMap<String, [f64; 2]>,
    pub posteriors: BTreeMap<String, [f64; 2]>,
    /// Data log-likelihood of the returned parameters.
    pub log_likelihood: f64,
    /// Log-likelihood plus the log of the smoothing prior; EM never lowers it.
    pub objective: f64,
    /// `objective` after each E-step, starting from the initial parameters.
    pub trace: Vec<f64>,
}

/// Starting point for one EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct MaceInit {
    pub competences: BTreeMap<String, f64>,
    pub spam_dists: BTreeMap<String, [f64; 2]>,
}

impl MaceInit {
    /// Shared competence for every worker and uniform spam distributions.
    pub fn shared(annotations: &[Annotation], competence: f64) -> Self {
        let mut competences = BTreeMap::new();
        let mut spam_dists = BTreeMap::new();
        for a in annotations {
            competences.insert(a.worker_id.clone(), competence);
            spam_dists.insert(a.worker_id.clone(), [0.5, 0.5]);
        }
        MaceInit { competences, spam_dists }
    }
}

/// Indexed annotation table used by the EM loop.
struct Table {
    items: Vec<String>,
    workers: Vec<String>,
    /// `(worker, label index)` per annotation, grouped by item.
    obs: Vec<(usize, usize)>,
    item_ranges: Vec<std::ops::Range<usize>>,
}

impl Table {
    fn build(annotations: &[Annotation]) -> Result<Table, AggregationError> {
        if annotations.is_empty() {
            return Err(AggregationError::EmptyInput);
        }
        let mut by_item: BTreeMap<&str, Vec<(&str, Label)>> = BTreeMap::new();
        let mut worker_set = std::collections::BTreeSet::new();
        for a in annotations {
            by_item.entry(&a.item_id).or_default().push((&a.worker_id, a.label));
            worker_set.insert(a.worker_id.as_str());
        }
        let workers: Vec<String> = worker_set.iter().map(|w| w.to_string()).collect();
        let widx: BTreeMap<&str, usize> = worker_set.iter().enumerate().map(|(i, w)| (*w, i)).collect();
        let mut items = Vec::with_capacity(by_item.len());
        let mut obs = Vec::with_capacity(annotations.len());
        let mut item_ranges = Vec::with_capacity(by_item.len());
        for (item, mut anns) in by_item {
            // Sorting fixes the floating-point summation order.
            anns.sort();
            let start = obs.len();
            obs.extend(anns.iter().map(|(w, l)| (widx[w], l.index())));
            item_ranges.push(start..obs.len());
            items.push(item.to_string());
        }
        Ok(Table { items, workers, obs, item_ranges })
    }
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct EStep {
    posteriors: Vec<[f64; 2]>,
    log_likelihood: f64,
}

fn e_step(table: &Table, theta: &[f64], xi: &[[f64; 2]]) -> EStep {
    let mut posteriors = Vec::with_capacity(table.items.len());
    let mut ll = 0.0;
    for range in &table.item_ranges {
        let mut logp = [0.5f64.ln(); 2];
        for &(w, a) in &table.obs[range.clone()] {
            let spam = (1.0 - theta[w]) * xi[w][a];
            for (t, lp) in logp.iter_mut().enumerate() {
                let copy = if t == a { theta[w] } else { 0.0 };
                *lp += (copy + spam).ln();
            }
        }
        let z = log_sum_exp2(logp[0], logp[1]);
        ll += z;
        posteriors.push([(logp[0] - z).exp(), (logp[1] - z).exp()]);
    }
    EStep { posteriors, log_likelihood: ll }
}

fn log_prior(theta: &[f64], xi: &[[f64; 2]], smoothing: f64) -> f64 {
    if smoothing == 0.0 {
        return 0.0;
    }
    theta
        .iter()
        .zip(xi)
        .map(|(t, x)| smoothing * (t.ln() + (1.0 - t).ln() + (x[0].ln() + x[1].ln())))
        .sum()
}

fn m_step(table: &Table, posteriors: &[[f64; 2]], theta: &mut [f64], xi: &mut [[f64; 2]], smoothing: f64) {
    let n_workers = table.workers.len();
    let mut copies = vec![0.0; n_workers];
    let mut totals = vec![0.0; n_workers];
    let mut spam = vec![[0.0f64; 2]; n_workers];
    for (range, post) in table.item_ranges.iter().zip(posteriors) {
        for &(w, a) in &table.obs[range.clone()] {
            let copy_mass = theta[w];
            let spam_mass = (1.0 - theta[w]) * xi[w][a];
            // Only T = a allows copying.
            let e_copy = post[a] * copy_mass / (copy_mass + spam_mass);
            copies[w] += e_copy;
            totals[w] += 1.0;
            spam[w][a] += 1.0 - e_copy;
        }
    }
    for w in 0..n_workers {
        theta[w] = (copies[w] + smoothing) / (totals[w] + 2.0 * smoothing);
        let s_total = spam[w][0] + spam[w][1] + 2.0 * smoothing;
        if s_total > 0.0 {
            xi[w] = [(spam[w][0] + smoothing) / s_total, (spam[w][1] + smoothing) / s_total];
        }
    }
}

/// Runs `iterations` EM steps from `init`.
///
/// Workers missing from `init` start at competence 0.5 with a uniform spam
/// distribution.
pub fn mace_run(
    annotations: &[Annotation],
    init: &MaceInit,
    iterations: usize,
    smoothing: f64,
) -> Result<MaceModel, AggregationError> {
    let table = Table::build(annotations)?;
    let mut theta: Vec<f64> = table.workers.iter().map(|w| init.competences.get(w).copied().unwrap_or(0.5)).collect();
    let mut xi: Vec<[f64; 2]> = table.workers.iter().map(|w| init.spam_dists.get(w).copied().unwrap_or([0.5, 0.5])).collect();

    let mut trace = Vec::with_capacity(iterations + 1);
    let mut e = e_step(&table, &theta, &xi);
    for _ in 0..iterations {
        let obj = e.log_likelihood + log_prior(&theta, &xi, smoothing);
        if !obj.is_finite() {
            return Err(AggregationError::NonFiniteLikelihood);
        }
        trace.push(obj);
        m_step(&table, &e.posteriors, &mut theta, &mut xi, smoothing);
        e = e_step(&table, &theta, &xi);
    }
    let objective = e.log_likelihood + log_prior(&theta, &xi, smoothing);
    if !objective.is_finite() {
        return Err(AggregationError::NonFiniteLikelihood);
    }
    trace.push(objective);

    Ok(MaceModel {
        competences: table.workers.iter().cloned().zip(theta).collect(),
        spam_dists: table.workers.iter().cloned().zip(xi).collect(),
        posteriors: table.items.iter().cloned().zip(e.posteriors).collect(),
        log_likelihood: e.log_likelihood,
        objective,
        trace,
    })
}

const RESTART_TIE: f64 = 1e-9;

/// Fits MACE with seeded restarts and keeps the run with the best objective.
///
/// Restart `r` starts every worker at the same competence drawn from
/// `[0.5, 0.95)` with uniform spam distributions, which keeps the fit
/// invariant to worker renaming and to swapping the two labels.
pub fn mace_fit(annotations: &[Annotation], config: &MaceConfig) -> Result<MaceModel, AggregationError> {
    config.validate()?;
    if annotations.is_empty() {
        return Err(AggregationError::EmptyInput);
    }
    let mut best: Option<MaceModel> = None;
    for r in 0..config.restarts {
        let mut rng = seed::rng_for(config.seed, &[Part::Str("mace-restart"), Part::U64(r as u64)]);
        let competence = 0.5 + 0.45 * rng.random::<f64>();
        let model = mace_run(annotations, &MaceInit::shared(annotations, competence), config.iterations, config.smoothing)?;
        // Objectives within rounding of each other count as ties; the earlier restart wins.
        if best.as_ref().is_none_or(|b| model.objective > b.objective + RESTART_TIE * b.objective.abs().max(1.0)) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Labels the most confident `coverage` fraction of items (rounded up).
pub fn mace_decode(model: &MaceModel, coverage: f64) -> AggregatedLabels {
    let mut ranked: Vec<(&String, &[f64; 2])> = model.posteriors.iter().collect();
    let conf = |p: &[f64; 2]| p[0].max(p[1]);
    ranked.sort_by(|a, b| conf(b.1).total_cmp(&conf(a.1)).then_with(|| a.0.cmp(b.0)));
    let keep = ((coverage * ranked.len() as f64).ceil() as usize).min(ranked.len());
    let mut out = AggregatedLabels::default();
    for (item, p) in ranked.into_iter().take(keep) {
        let label = if p[0] > p[1] { Label::Target } else { Label::NonTarget };
        out.insert(item.clone(), label, conf(p));
    }
    out
}

/// First-step aggregator, applied within each version.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOne {
    MajorityVote,
    Mace(MaceConfig),
}

/// Second-step aggregator over the per-version labels of an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepTwo {
    MajorityVote,
    Threshold(usize),
}

/// Aggregates within each version, then across versions.
///
/// MACE is fit separately per version, since annotations are only
/// independent given both the true label and the version shown.
pub fn aggregate_two_step(
    annotations: &[Annotation],
    step1: StepOne,
    step2: StepTwo,
) -> Result<AggregatedLabels, AggregationError> {
    if annotations.is_empty() {
        return Err(AggregationError::NoAnnotations);
    }
    let mut by_version: BTreeMap<&str, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        by_version.entry(&a.version_id).or_default().push(a.clone());
    }
    let mut version_labels: BTreeMap<String, Vec<Label>> = BTreeMap::new();
    for anns in by_version.values() {
        let labels = match step1 {
            StepOne::MajorityVote => majority_vote(&group_by_item(anns))?,
            StepOne::Mace(cfg) => mace_decode(&mace_fit(anns, &cfg)?, cfg.coverage),
        };
        for (item, label) in labels.labels {
            version_labels.entry(item).or_default().push(label);
        }
    }
    match step2 {
        StepTwo::MajorityVote => majority_vote(&version_labels),
        StepTwo::Threshold(x) => threshold_aggregate(&version_labels, x),
    }
}

/// Aggregation methods selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mv,
    Threshold(usize),
    Mace,
    MvMv,
    MaceMv,
    MaceT0,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mv => f.write_str("MV"),
            Method::Threshold(x) => write!(f, "t{x}"),
            Method::Mace => f.write_str("MACE"),
            Method::MvMv => f.write_str("MV_MV"),
            Method::MaceMv => f.write_str("MACE_MV"),
            Method::MaceT0 => f.write_str("MACE_t0"),
        }
    }
}

impl FromStr for Method {
    type Err = AggregationError;

    /// Accepts `mv`, `t:<x>` (or `t<x>`), `mace`, `mv_mv`, `mace_mv`, `mace_t0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let method = match lower.as_str() {
            "mv" => Method::Mv,
            "mace" => Method::Mace,
            "mv_mv" => Method::MvMv,
            "mace_mv" => Method::MaceMv,
            "mace_t0" => Method::MaceT0,
            other => {
                let x = other.strip_prefix("t:").or_else(|| other.strip_prefix('t'));
                match x.and_then(|x| x.parse().ok()) {
                    Some(x) => Method::Threshold(x),
                    None => return Err(AggregationError::UnknownMethod(s.to_string())),
                }
            }
        };
        Ok(method)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Method::Threshold(x) => s.serialize_str(&format!("t:{x}")),
            other => s.serialize_str(&other.to_string().to_ascii_lowercase()),
        }
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Runs `method` over annotations of one or more versions.
///
/// One-step methods (`MV`, `tx`, `MACE`) pool all versions of an item.
pub fn aggregate(
    annotations: &[Annotation],
    method: Method,
    mace: &MaceConfig,
) -> Result<AggregatedLabels, AggregationError> {
    if annotations.is_empty() {
        return Err(AggregationError::NoAnnotations);
    }
    match method {
        Method::Mv => majority_vote(&group_by_item(annotations)),
        Method::Threshold(x) => threshold_aggregate(&group_by_item(annotations), x),
        Method::Mace => Ok(mace_decode(&mace_fit(annotations, mace)?, mace.coverage)),
        Method::MvMv => aggregate_two_step(annotations, StepOne::MajorityVote, StepTwo::MajorityVote),
        Method::MaceMv => aggregate_two_step(annotations, StepOne::Mace(*mace), StepTwo::MajorityVote),
        Method::MaceT0 => aggregate_two_step(annotations, StepOne::Mace(*mace), StepTwo::Threshold(0)),
    }
}
