//! Corpus data model, tokenization, ingestion, splitting and task lexicons.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("line {line}: unknown label `{label}` (expected `target` or `non_target`)")]
    UnknownLabel { line: usize, label: String },
    #[error("corpus must contain at least one point")]
    EmptyCorpus,
    #[error("data point `{0}` has no tokens")]
    EmptyText(String),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("split `{0}` would be empty")]
    EmptySplit(&'static str),
    #[error("no sentiment lexicon file supplied for corpus `{0}`")]
    MissingLexiconFile(String),
    #[error("unknown builtin lexicon `{0}`")]
    UnknownLexicon(String),
    #[error("lexicon must contain at least one entry")]
    EmptyLexicon,
}

/// Binary class of a data point. `Target` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Target,
    NonTarget,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::NonTarget => "non_target",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Target => Label::NonTarget,
            Label::NonTarget => Label::Target,
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }

    /// Index into `[target, non_target]` probability pairs.
    pub fn index(self) -> usize {
        match self {
            Label::Target => 0,
            Label::NonTarget => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Target
        } else {
            Label::NonTarget
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target" => Ok(Label::Target),
            "non_target" => Ok(Label::NonTarget),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub gold: Label,
}

impl DataPoint {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, gold: Label) -> Result<Self, CorpusError> {
        let id = id.into();
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text);
        if tokens.is_empty() {
            return Err(CorpusError::EmptyText(id));
        }
        Ok(DataPoint { id, raw_text, tokens, gold })
    }

    /// Builds a point from already tokenized text; `raw_text` becomes the
    /// space-joined tokens.
    pub fn from_tokens(id: impl Into<String>, tokens: Vec<String>, gold: Label) -> Result<Self, CorpusError> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(CorpusError::EmptyText(id));
        }
        Ok(DataPoint { id, raw_text: tokens.join(" "), tokens, gold })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub target_class_name: String,
    points: Vec<DataPoint>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        target_class_name: impl Into<String>,
        points: Vec<DataPoint>,
    ) -> Result<Self, CorpusError> {
        if points.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !seen.insert(p.id.as_str()) {
                return Err(CorpusError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Corpus { name: name.into(), target_class_name: target_class_name.into(), points })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DataPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.points.iter().map(|p| p.id.as_str())
    }

    pub fn gold_by_id(&self) -> BTreeMap<String, Label> {
        self.points.iter().map(|p| (p.id.clone(), p.gold)).collect()
    }

    /// Same corpus with every point's tokens replaced through `f`.
    pub fn map_tokens<F>(&self, mut f: F) -> Result<Corpus, CorpusError>
    where
        F: FnMut(&DataPoint) -> Vec<String>,
    {
        let points = self
            .points
            .iter()
            .map(|p| DataPoint::from_tokens(p.id.clone(), f(p), p.gold))
            .collect::<Result<Vec<_>, _>>()?;
        Corpus::new(self.name.clone(), self.target_class_name.clone(), points)
    }

    /// Writes the corpus as JSONL (`id`, `label`, `text`).
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for p in &self.points {
            let rec = JsonRecord { id: p.id.clone(), label: p.gold.as_str().to_string(), text: p.raw_text.clone() };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

fn is_placeholder(tok: &str) -> bool {
    let Some(inner) = tok.strip_prefix('<').and_then(|t| t.strip_suffix('>')) else {
        return false;
    };
    let mut chars = inner.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c == '_')
}

/// True for angle-bracket placeholder tokens such as `<NAME>` or `<LOCATION>`.
pub fn is_placeholder_token(tok: &str) -> bool {
    is_placeholder(tok)
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '¡' | '«' | '»' | '¿')
}

/// Lowercases, splits on whitespace and strips leading/trailing punctuation.
/// Placeholder markers like `<LOCATION>` survive intact.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    raw_text
        .split_whitespace()
        .filter_map(|word| {
            let around = word.trim_matches(|c: char| is_punct(c) && c != '<' && c != '>');
            if is_placeholder(around) {
                return Some(around.to_string());
            }
            let core = word.trim_matches(is_punct);
            if core.is_empty() {
                None
            } else {
                Some(core.to_lowercase())
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    label: String,
    text: String,
}

fn parse_label(line: usize, label: &str) -> Result<Label, CorpusError> {
    label.parse().map_err(|label| CorpusError::UnknownLabel { line, label })
}

/// Reads a corpus from TSV (`id<TAB>label<TAB>text`) or JSONL.
///
/// The corpus is named after the file stem. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_corpus(&name, &content, format)
}

pub fn parse_corpus(name: &str, content: &str, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let mut points = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, label, text) = match format {
            CorpusFormat::Tsv => {
                let mut fields = line.splitn(3, '\t');
                match (fields.next(), fields.next(), fields.next()) {
                    (Some(id), Some(label), Some(text)) => (id.to_string(), label.to_string(), text.to_string()),
                    _ => {
                        return Err(CorpusError::MalformedRecord {
                            line: line_no,
                            reason: "expected `id<TAB>label<TAB>text`".into(),
                        })
                    }
                }
            }
            CorpusFormat::Jsonl => {
                let rec: JsonRecord = serde_json::from_str(line)
                    .map_err(|e| CorpusError::MalformedRecord { line: line_no, reason: e.to_string() })?;
                (rec.id, rec.label, rec.text)
            }
        };
        if id.is_empty() {
            return Err(CorpusError::MalformedRecord { line: line_no, reason: "empty id".into() });
        }
        let gold = parse_label(line_no, label.trim())?;
        let point = DataPoint::new(id, text, gold).map_err(|_| CorpusError::MalformedRecord {
            line: line_no,
            reason: "text has no tokens".into(),
        })?;
        points.push(point);
    }
    Corpus::new(name, "target", points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplits {
    pub pretrain: Corpus,
    pub validation: Corpus,
    pub crowdsourcing: Corpus,
}

/// Shuffles with `seed`, then cuts into pretrain / validation / crowdsourcing.
///
/// Pretrain and validation sizes are `round(n * ratio)`; whatever is left goes
/// to the crowdsourcing split.
pub fn split_corpus(c: &Corpus, ratios: [f64; 3], seed: u64) -> Result<CorpusSplits, CorpusError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(ratios));
    }
    let n = c.len();
    let n_pre = (n as f64 * ratios[0]).round() as usize;
    let n_val = (n as f64 * ratios[1]).round() as usize;
    if n_pre == 0 {
        return Err(CorpusError::EmptySplit("pretrain"));
    }
    if n_val == 0 {
        return Err(CorpusError::EmptySplit("validation"));
    }
    if n_pre + n_val >= n {
        return Err(CorpusError::EmptySplit("crowdsourcing"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng_for(seed, &["split".into()]));

    let take = |idx: &[usize], suffix: &str| {
        let points = idx.iter().map(|&i| c.points[i].clone()).collect();
        Corpus::new(format!("{}-{suffix}", c.name), c.target_class_name.clone(), points)
    };
    Ok(CorpusSplits {
        pretrain: take(&order[..n_pre], "pretrain")?,
        validation: take(&order[n_pre..n_pre + n_val], "validation")?,
        crowdsourcing: take(&order[n_pre + n_val..], "crowdsourcing")?,
    })
}

/// One row of a sentiment lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentEntry {
    pub word: String,
    pub mean: f64,
    pub std_dev: f64,
}

fn clearly_polar(e: &SentimentEntry) -> bool {
    let lo = e.mean - 2.0 * e.std_dev;
    let hi = e.mean + 2.0 * e.std_dev;
    e.mean != 0.0 && ((lo > 0.0 && hi > 0.0) || (lo < 0.0 && hi < 0.0))
}

/// Keeps words whose polarity sign cannot flip within two standard deviations.
pub fn filter_sentiment_lexicon(entries: &[SentimentEntry]) -> BTreeSet<String> {
    entries.iter().filter(|e| clearly_polar(e)).map(|e| e.word.to_lowercase()).collect()
}

/// Clearly negative words, the non-target indicators for review-style corpora.
pub fn negative_words(entries: &[SentimentEntry]) -> BTreeSet<String> {
    entries
        .iter()
        .filter(|e| e.mean < 0.0 && clearly_polar(e))
        .map(|e| e.word.to_lowercase())
        .collect()
}

/// Reads `word<TAB>mean<TAB>std_dev` lines. Extra columns are ignored, which
/// accepts lexicons that also list raw ratings.
pub fn read_sentiment_lexicon(path: &Path) -> Result<Vec<SentimentEntry>, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| CorpusError::MalformedRecord { line: idx + 1, reason: reason.to_string() };
        let mut cols = line.split('\t');
        let (Some(word), Some(mean), Some(std_dev)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(malformed("expected `word<TAB>mean<TAB>std_dev`"));
        };
        let mean: f64 = mean.trim().parse().map_err(|_| malformed("mean is not a number"))?;
        let std_dev: f64 = std_dev.trim().parse().map_err(|_| malformed("std_dev is not a number"))?;
        if std_dev.is_nan() || std_dev < 0.0 {
            return Err(malformed("std_dev must be non-negative"));
        }
        out.push(SentimentEntry { word: word.trim().to_string(), mean, std_dev });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconMode {
    PresenceImpliesTarget,
    PresenceImpliesNonTarget,
}

#[derive(Serialize, Deserialize)]
struct LexiconRepr {
    mode: LexiconMode,
    entries: BTreeSet<Vec<String>>,
}

/// Indicator words and phrases for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LexiconRepr", into = "LexiconRepr")]
pub struct TaskLexicon {
    pub mode: LexiconMode,
    entries: BTreeSet<Vec<String>>,
    /// Entries sorted longest first, for greedy matching.
    by_length: Vec<Vec<String>>,
}

impl From<LexiconRepr> for TaskLexicon {
    fn from(r: LexiconRepr) -> Self {
        TaskLexicon::from_entries(r.mode, r.entries)
    }
}

impl From<TaskLexicon> for LexiconRepr {
    fn from(l: TaskLexicon) -> Self {
        LexiconRepr { mode: l.mode, entries: l.entries }
    }
}

impl TaskLexicon {
    /// Each entry is tokenized; entries that tokenize to nothing are dropped.
    pub fn new<I, S>(mode: LexiconMode, entries: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries: BTreeSet<Vec<String>> =
            entries.into_iter().map(|e| tokenize(e.as_ref())).filter(|t| !t.is_empty()).collect();
        if entries.is_empty() {
            return Err(CorpusError::EmptyLexicon);
        }
        Ok(Self::from_entries(mode, entries))
    }

    fn from_entries(mode: LexiconMode, entries: BTreeSet<Vec<String>>) -> Self {
        let mut by_length: Vec<Vec<String>> = entries.iter().cloned().collect();
        by_length.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        TaskLexicon { mode, entries, by_length }
    }

    pub fn entries(&self) -> &BTreeSet<Vec<String>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_phrase(&self, phrase: &str) -> bool {
        self.entries.contains(&tokenize(phrase))
    }

    /// Whether any entry occurs as a contiguous token run.
    pub fn occurs_in(&self, tokens: &[String]) -> bool {
        self.entries.iter().any(|e| tokens.windows(e.len()).any(|w| w == e.as_slice()))
    }

    /// Non-overlapping occurrences, scanning left to right and preferring the
    /// longest entry at each position.
    pub fn count_occurrences(&self, tokens: &[String]) -> usize {
        let mut count = 0;
        let mut i = 0;
        while i < tokens.len() {
            match self.by_length.iter().find(|e| tokens[i..].starts_with(e)) {
                Some(e) => {
                    count += 1;
                    i += e.len();
                }
                None => i += 1,
            }
        }
        count
    }
}

pub const ATIS_INDICATORS: &[&str] = &["airfare", "cheapest", "cost", "fare", "fares", "how much", "price"];
pub const SNIPS_INDICATORS: &[&str] = &["add", "playlist"];

/// Built-in lexicon for one of `ATIS`, `SNIPS` or `TA` (case-insensitive).
///
/// `TA` is derived from a sentiment lexicon file: the clearly negative words
/// mark the non-target class.
pub fn builtin_lexicon(name: &str, sentiment_file: Option<&Path>) -> Result<TaskLexicon, CorpusError> {
    match name.to_ascii_uppercase().as_str() {
        "ATIS" => TaskLexicon::new(LexiconMode::PresenceImpliesTarget, ATIS_INDICATORS),
        "SNIPS" => TaskLexicon::new(LexiconMode::PresenceImpliesTarget, SNIPS_INDICATORS),
        "TA" => {
            let path = sentiment_file.ok_or_else(|| CorpusError::MissingLexiconFile("TA".into()))?;
            let words = negative_words(&read_sentiment_lexicon(path)?);
            TaskLexicon::new(LexiconMode::PresenceImpliesNonTarget, words)
        }
        other => Err(CorpusError::UnknownLexicon(other.to_string())),
    }
}

/// All three built-in lexicons keyed by corpus name.
pub fn builtin_lexicons(sentiment_file: Option<&Path>) -> Result<BTreeMap<String, TaskLexicon>, CorpusError> {
    ["ATIS", "SNIPS", "TA"]
        .into_iter()
        .map(|name| Ok((name.to_string(), builtin_lexicon(name, sentiment_file)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("What flights from Indianapolis?"), toks(&["what", "flights", "from", "indianapolis"]));
        assert_eq!(
            tokenize("what flights from <LOCATION> to memphis"),
            toks(&["what", "flights", "from", "<LOCATION>", "to", "memphis"])
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ... -- !").is_empty());
        assert_eq!(tokenize("(<NAME>), hi"), toks(&["<NAME>", "hi"]));
        assert_eq!(tokenize("mail john.doe@mail.com."), toks(&["mail", "john.doe@mail.com"]));
        assert_eq!(tokenize("<lower>"), toks(&["lower"]));
    }

    #[test]
    fn ingest_tsv_and_errors() {
        let c = parse_corpus("t", "a\ttarget\tHow much is it?\nb\tnon_target\tplay jazz\n", CorpusFormat::Tsv).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[0].tokens, toks(&["how", "much", "is", "it"]));
        assert!(matches!(
            parse_corpus("t", "a\tmaybe\tx\n", CorpusFormat::Tsv),
            Err(CorpusError::UnknownLabel { line: 1, .. })
        ));
        assert!(matches!(
            parse_corpus("t", "a\ttarget\tx\na\ttarget\ty\n", CorpusFormat::Tsv),
            Err(CorpusError::DuplicateId(id)) if id == "a"
        ));
        assert!(matches!(
            parse_corpus("t", "a\ttarget\tx\nbroken line\n", CorpusFormat::Tsv),
            Err(CorpusError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn ingest_jsonl_fixture() {
        let mut s = String::new();
        for i in 0..10 {
            let label = if i % 3 == 0 { "target" } else { "non_target" };
            s.push_str(&format!("{{\"id\":\"p{i}\",\"label\":\"{label}\",\"text\":\"word {i}\"}}\n"));
        }
        let c = parse_corpus("j", &s, CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.len(), 10);
        let ids: Vec<_> = c.ids().collect();
        assert_eq!(ids, (0..10).map(|i| format!("p{i}")).collect::<Vec<_>>());
        assert_eq!(c.points().iter().filter(|p| p.gold == Label::Target).count(), 4);
    }

    fn corpus_of(n: usize) -> Corpus {
        let points = (0..n)
            .map(|i| DataPoint::new(format!("id{i}"), format!("text {i}"), Label::from_index(i % 2)).unwrap())
            .collect();
        Corpus::new("c", "target", points).unwrap()
    }

    #[test]
    fn split_sizes_and_errors() {
        let s = split_corpus(&corpus_of(10), [0.5, 0.2, 0.3], 7).unwrap();
        assert_eq!((s.pretrain.len(), s.validation.len(), s.crowdsourcing.len()), (5, 2, 3));
        assert!(matches!(split_corpus(&corpus_of(3), [0.9, 0.05, 0.05], 7), Err(CorpusError::EmptySplit(_))));
        assert!(matches!(split_corpus(&corpus_of(10), [0.5, 0.2, 0.2], 7), Err(CorpusError::InvalidRatios(_))));
        assert_eq!(split_corpus(&corpus_of(10), [0.5, 0.2, 0.3], 7).unwrap(), s);
    }

    #[test]
    fn sentiment_filter_examples() {
        let e = |w: &str, m, s| SentimentEntry { word: w.into(), mean: m, std_dev: s };
        let kept = filter_sentiment_lexicon(&[e("awful", -1.5, 0.5), e("odd", 0.4, 0.3), e("Great", 2.0, 0.0), e("meh", 0.0, 0.0)]);
        assert_eq!(kept, ["awful", "great"].iter().map(|s| s.to_string()).collect());
        let neg = negative_words(&[e("awful", -1.5, 0.5), e("great", 2.0, 0.0)]);
        assert_eq!(neg.len(), 1);
    }

    #[test]
    fn builtin_lexicon_contents() {
        let atis = builtin_lexicon("ATIS", None).unwrap();
        assert!(atis.contains_phrase("how much"));
        assert_eq!(atis.len(), 7);
        assert_eq!(builtin_lexicon("SNIPS", None).unwrap().len(), 2);
        assert!(matches!(builtin_lexicon("TA", None), Err(CorpusError::MissingLexiconFile(_))));
        assert!(matches!(builtin_lexicons(None), Err(CorpusError::MissingLexiconFile(_))));
    }

    #[test]
    fn ta_lexicon_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vader.txt");
        fs::write(&path, "worst\t-3.1\t0.5\t[-3, -3]\ngood\t1.9\t0.9\nokay\t0.9\t0.6\n").unwrap();
        let ta = builtin_lexicon("TA", Some(&path)).unwrap();
        assert_eq!(ta.mode, LexiconMode::PresenceImpliesNonTarget);
        assert_eq!(ta.len(), 1);
        assert!(ta.contains_phrase("worst"));
    }

    #[test]
    fn phrase_counting_is_non_overlapping() {
        let lex = TaskLexicon::new(LexiconMode::PresenceImpliesTarget, ["how much", "much", "fare"]).unwrap();
        assert_eq!(lex.count_occurrences(&toks(&["how", "much", "fare", "much", "how"])), 3);
        assert!(lex.occurs_in(&toks(&["so", "much"])));
        assert!(!lex.occurs_in(&toks(&["how", "many"])));
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "[ a-zA-Z0-9<>.,!?@:'_-]{0,60}") {
            let t = tokenize(&s);
            prop_assert_eq!(tokenize(&t.join(" ")), t);
        }

        #[test]
        fn split_is_a_partition(n in 10usize..60, seed in any::<u64>()) {
            let c = corpus_of(n);
            let s = split_corpus(&c, [0.6, 0.2, 0.2], seed).unwrap();
            let mut ids: Vec<&str> = s.pretrain.ids().chain(s.validation.ids()).chain(s.crowdsourcing.ids()).collect();
            prop_assert_eq!(ids.len(), n);
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
        }

        #[test]
        fn sentiment_filter_is_monotone_in_std(mean in -4.0f64..4.0, std in 0.0f64..2.0, extra in 0.0f64..2.0) {
            let e = |s| SentimentEntry { word: "w".into(), mean, std_dev: s };
            let wider = filter_sentiment_lexicon(&[e(std + extra)]);
            let narrow = filter_sentiment_lexicon(&[e(std)]);
            prop_assert!(wider.is_subset(&narrow));
        }
    }
}
