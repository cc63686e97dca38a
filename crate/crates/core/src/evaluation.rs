//! Label quality and privacy-proxy statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregatedLabels;
use crate::corpus::{Corpus, Label, TaskLexicon};
use crate::seed::{self, Part};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for item `{0}`")]
    MissingPrediction(String),
    #[error("item `{0}` is present on only one side of the comparison")]
    IdMismatch(String),
    #[error("invalid evaluation setting: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Target, Label::Target) => self.tp += 1,
            (Label::Target, Label::NonTarget) => self.fp += 1,
            (Label::NonTarget, Label::Target) => self.fn_ += 1,
            (Label::NonTarget, Label::NonTarget) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// F1 of the target class; 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub confusion: Confusion,
    pub metadata: BTreeMap<String, String>,
}

/// Target-class F1 of `pred` against the corpus' gold labels.
pub fn f1_score(pred: &AggregatedLabels, gold: &Corpus) -> Result<EvalReport, EvalError> {
    let mut confusion = Confusion::default();
    for p in gold.points() {
        let label = pred.get(&p.id).ok_or_else(|| EvalError::MissingPrediction(p.id.clone()))?;
        confusion.add(label, p.gold);
    }
    Ok(EvalReport { f1: confusion.f1(), confusion, metadata: BTreeMap::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// F1(a) − F1(b) on the full item set.
    pub observed_diff: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Two-sided paired bootstrap test for a difference in F1.
///
/// Items are resampled with replacement; the p-value is the fraction of
/// resamples whose difference deviates from the observed one by at least the
/// observed magnitude.
pub fn significance_test(
    pred_a: &AggregatedLabels,
    pred_b: &AggregatedLabels,
    gold: &Corpus,
    alpha: f64,
    resamples: usize,
    seed: u64,
) -> Result<SignificanceResult, EvalError> {
    if resamples == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::InvalidConfig("need resamples > 0 and alpha in (0, 1)".into()));
    }
    let rows: Vec<(Label, Label, Label)> = gold
        .points()
        .iter()
        .map(|p| {
            let a = pred_a.get(&p.id).ok_or_else(|| EvalError::MissingPrediction(p.id.clone()))?;
            let b = pred_b.get(&p.id).ok_or_else(|| EvalError::MissingPrediction(p.id.clone()))?;
            Ok((p.gold, a, b))
        })
        .collect::<Result<_, EvalError>>()?;

    let diff_of = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut ca, mut cb) = (Confusion::default(), Confusion::default());
        for i in idx {
            let (g, a, b) = rows[i];
            ca.add(a, g);
            cb.add(b, g);
        }
        ca.f1() - cb.f1()
    };
    let observed = diff_of(&mut (0..rows.len()));

    let n = rows.len();
    let mut rng = seed::rng_for(seed, &[Part::Str("bootstrap")]);
    let mut extreme = 0usize;
    for _ in 0..resamples {
        let d = diff_of(&mut (0..n).map(|_| rng.random_range(0..n)));
        if (d - observed).abs() >= observed.abs() {
            extreme += 1;
        }
    }
    let p_value = extreme as f64 / resamples as f64;
    Ok(SignificanceResult { observed_diff: observed, p_value, significant: p_value < alpha })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorCounts {
    pub target: usize,
    pub rest: usize,
}

/// Indicator-word occurrences in target-class texts and in the rest.
pub fn indicator_counts(corpus: &Corpus, lexicon: &TaskLexicon) -> IndicatorCounts {
    let mut counts = IndicatorCounts::default();
    for p in corpus.points() {
        let n = lexicon.count_occurrences(&p.tokens);
        match p.gold {
            Label::Target => counts.target += n,
            Label::NonTarget => counts.rest += n,
        }
    }
    counts
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Original tokens that did not survive, in order, into the rewrite.
pub fn changed_count(original: &[String], rewritten: &[String]) -> usize {
    original.len() - lcs_len(original, rewritten)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub fraction: f64,
}

impl Bucket {
    pub fn label(&self) -> String {
        if self.lo == self.hi {
            self.lo.to_string()
        } else {
            format!("{}-{}", self.lo, self.hi)
        }
    }
}

/// Distribution of points by number of changed words: one bucket each for
/// 0..=6, then buckets of width five (7–11, 12–16, ...) up to the largest count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeHistogram {
    pub buckets: Vec<Bucket>,
}

impl ChangeHistogram {
    pub fn from_counts(changed: &[usize]) -> ChangeHistogram {
        let max = changed.iter().copied().max().unwrap_or(0);
        let mut buckets: Vec<Bucket> = (0..=6).map(|v| Bucket { lo: v, hi: v, count: 0, fraction: 0.0 }).collect();
        let mut lo = 7;
        while lo <= max {
            buckets.push(Bucket { lo, hi: lo + 4, count: 0, fraction: 0.0 });
            lo += 5;
        }
        for &c in changed {
            let idx = if c <= 6 { c } else { 7 + (c - 7) / 5 };
            buckets[idx].count += 1;
        }
        let n = changed.len().max(1) as f64;
        for b in &mut buckets {
            b.fraction = b.count as f64 / n;
        }
        ChangeHistogram { buckets }
    }

    pub fn fraction(&self, changed: usize) -> f64 {
        self.buckets.iter().find(|b| b.lo <= changed && changed <= b.hi).map_or(0.0, |b| b.fraction)
    }

    /// `bucket,count,fraction` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,count,fraction\n");
        for b in &self.buckets {
            out.push_str(&format!("{},{},{:.6}\n", b.label(), b.count, b.fraction));
        }
        out
    }
}

/// Per-point changed-word counts, keyed by id. Both sides must hold the same ids.
pub fn changed_counts(original: &Corpus, rewritten: &Corpus) -> Result<BTreeMap<String, usize>, EvalError> {
    let rewritten_by_id: HashMap<&str, &[String]> =
        rewritten.points().iter().map(|p| (p.id.as_str(), p.tokens.as_slice())).collect();
    if let Some(extra) = rewritten.ids().find(|id| original.get(id).is_none()) {
        return Err(EvalError::IdMismatch(extra.to_string()));
    }
    original
        .points()
        .iter()
        .map(|p| {
            let r = rewritten_by_id.get(p.id.as_str()).ok_or_else(|| EvalError::IdMismatch(p.id.clone()))?;
            Ok((p.id.clone(), changed_count(&p.tokens, r)))
        })
        .collect()
}

pub fn copied_word_distribution(original: &Corpus, rewritten: &Corpus) -> Result<ChangeHistogram, EvalError> {
    let counts: Vec<usize> = changed_counts(original, rewritten)?.into_values().collect();
    Ok(ChangeHistogram::from_counts(&counts))
}

/// Fraction of labels that are `Target`; 0 for an empty input.
pub fn class_share<I: IntoIterator<Item = Label>>(labels: I) -> f64 {
    let (mut t, mut n) = (0usize, 0usize);
    for l in labels {
        n += 1;
        t += l.is_target() as usize;
    }
    if n == 0 {
        0.0
    } else {
        t as f64 / n as f64
    }
}

pub fn gold_share(corpus: &Corpus) -> f64 {
    class_share(corpus.points().iter().map(|p| p.gold))
}

pub fn predicted_share(labels: &AggregatedLabels) -> f64 {
    class_share(labels.labels.values().copied())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermTables {
    pub target: Vec<(String, usize)>,
    pub non_target: Vec<(String, usize)>,
}

impl TermTables {
    /// `class,rank,term,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,rank,term,count\n");
        for (class, rows) in [("target", &self.target), ("non_target", &self.non_target)] {
            for (rank, (term, count)) in rows.iter().enumerate() {
                out.push_str(&format!("{class},{},{term},{count}\n", rank + 1));
            }
        }
        out
    }
}

/// The `k` most frequent non-stopword tokens per class; ties break
/// lexicographically.
pub fn top_k_terms(corpus: &Corpus, k: usize, stopwords: &BTreeSet<String>) -> Result<TermTables, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidConfig("k must be at least 1".into()));
    }
    let mut counts: [BTreeMap<&str, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for p in corpus.points() {
        for t in &p.tokens {
            if !stopwords.contains(t) {
                *counts[p.gold.index()].entry(t).or_default() += 1;
            }
        }
    }
    let rank = |m: &BTreeMap<&str, usize>| {
        let mut v: Vec<(String, usize)> = m.iter().map(|(t, c)| (t.to_string(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(k);
        v
    };
    Ok(TermTables { target: rank(&counts[0]), non_target: rank(&counts[1]) })
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "before", "but",
    "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "here", "him", "his",
    "i", "if", "in", "into", "is", "it", "its", "just", "me", "more", "my", "no", "not", "of", "on", "or", "our",
    "out", "please", "she", "so", "some", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "to", "too", "up", "us", "very", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "will", "with", "would", "you", "your",
];

/// Small built-in English function-word list.
pub fn default_stopwords() -> BTreeSet<String> {
    STOPWORDS.iter().map(|s| s.to_string()).collect()
}
