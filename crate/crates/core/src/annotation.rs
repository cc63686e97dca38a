//! Simulated crowdworkers and the HIT / annotation file round trip.
//!
//! A simulated worker first "perceives" a label from the indicator words in
//! the text it is shown. With probability `competence` it reports that label;
//! otherwise it answers from its own spam distribution. This is the
//! generative story MACE assumes, layered on top of an indicator-word
//! reading of the (possibly rewritten) text.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LexiconMode, TaskLexicon};
use crate::seed::{self, Part};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("need {needed} workers per version but only {available} are available")]
    TooFewWorkers { needed: usize, available: usize },
    #[error("invalid worker profile `{0}`")]
    InvalidWorker(String),
    #[error("line {line}: malformed annotation file: {reason}")]
    MalformedAnnotationFile { line: usize, reason: String },
    #[error("line {line}: unknown item `{item_id}` / version `{version_id}`")]
    UnknownItemId { line: usize, item_id: String, version_id: String },
    #[error("HIT batch is empty")]
    EmptyBatch,
    #[error("duplicate HIT `{0}` / `{1}`")]
    DuplicateHit(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    /// Probability of reporting the perceived label.
    pub competence: f64,
    /// `[P(target), P(non_target)]` used when not reporting the perceived label.
    pub spam_dist: [f64; 2],
}

impl WorkerProfile {
    pub fn new(worker_id: impl Into<String>, competence: f64, spam_target: f64) -> Result<Self, AnnotationError> {
        let w = WorkerProfile { worker_id: worker_id.into(), competence, spam_dist: [spam_target, 1.0 - spam_target] };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        let ok = unit(self.competence)
            && self.spam_dist.iter().all(|&p| unit(p))
            && (self.spam_dist[0] + self.spam_dist[1] - 1.0).abs() <= 1e-9
            && !self.worker_id.is_empty();
        if ok {
            Ok(())
        } else {
            Err(AnnotationError::InvalidWorker(self.worker_id.clone()))
        }
    }
}

/// One label from one worker on one version of one item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    pub version_id: String,
    pub worker_id: String,
    pub label: Label,
}

/// A text shown to workers: one version of one item. Carries no gold label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HitItem {
    pub item_id: String,
    pub version_id: String,
    pub tokens: Vec<String>,
}

/// The label a reader relying on indicator words would assign.
pub fn perceive_label(tokens: &[String], lexicon: &TaskLexicon) -> Label {
    let present = lexicon.occurs_in(tokens);
    match (lexicon.mode, present) {
        (LexiconMode::PresenceImpliesTarget, true) | (LexiconMode::PresenceImpliesNonTarget, false) => Label::Target,
        _ => Label::NonTarget,
    }
}

fn worker_label(worker: &WorkerProfile, perceived: Label, base_seed: u64, hit: &HitItem) -> Label {
    let mut rng = seed::rng_for(
        base_seed,
        &[
            Part::Str("answer"),
            Part::Str(&hit.item_id),
            Part::Str(&hit.version_id),
            Part::Str(&worker.worker_id),
        ],
    );
    let copy: f64 = rng.random();
    let spam: f64 = rng.random();
    if copy < worker.competence {
        perceived
    } else if spam < worker.spam_dist[0] {
        Label::Target
    } else {
        Label::NonTarget
    }
}

/// Draws `per_version` distinct workers for every HIT and simulates their labels.
///
/// All randomness is derived per (item, version) and per (item, version,
/// worker), so the result does not depend on the order of `hits`. The output
/// is sorted by item, version and worker.
pub fn simulate_annotations(
    hits: &[HitItem],
    workers: &[WorkerProfile],
    per_version: usize,
    lexicon: &TaskLexicon,
    seed: u64,
) -> Result<Vec<Annotation>, AnnotationError> {
    if per_version == 0 || per_version > workers.len() {
        return Err(AnnotationError::TooFewWorkers { needed: per_version.max(1), available: workers.len() });
    }
    for w in workers {
        w.validate()?;
    }
    // Assignment is keyed on worker order by id so that the caller's ordering
    // of `workers` does not matter.
    let mut pool: Vec<&WorkerProfile> = workers.iter().collect();
    pool.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));

    let mut out = Vec::with_capacity(hits.len() * per_version);
    for hit in hits {
        let perceived = perceive_label(&hit.tokens, lexicon);
        let mut rng = seed::rng_for(seed, &[Part::Str("assign"), Part::Str(&hit.item_id), Part::Str(&hit.version_id)]);
        for idx in sample(&mut rng, pool.len(), per_version) {
            let worker = pool[idx];
            out.push(Annotation {
                item_id: hit.item_id.clone(),
                version_id: hit.version_id.clone(),
                worker_id: worker.worker_id.clone(),
                label: worker_label(worker, perceived, seed, hit),
            });
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct HitRecord {
    item_id: String,
    version_id: String,
    text: String,
}

/// Writes a HIT batch as JSONL (`item_id`, `version_id`, `text`).
pub fn export_hits(hits: &[HitItem], path: &Path) -> Result<(), AnnotationError> {
    if hits.is_empty() {
        return Err(AnnotationError::EmptyBatch);
    }
    let mut out = String::new();
    for h in hits {
        let rec = HitRecord { item_id: h.item_id.clone(), version_id: h.version_id.clone(), text: h.tokens.join(" ") };
        out.push_str(&serde_json::to_string(&rec).expect("HIT serializes"));
        out.push('\n');
    }
    write(path, out)
}

pub fn read_hits(path: &Path) -> Result<Vec<HitItem>, AnnotationError> {
    let mut hits = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in read_jsonl::<HitRecord>(path)? {
        if !seen.insert((rec.item_id.clone(), rec.version_id.clone())) {
            return Err(AnnotationError::DuplicateHit(rec.item_id, rec.version_id));
        }
        let tokens = crate::corpus::tokenize(&rec.text);
        if tokens.is_empty() {
            return Err(AnnotationError::MalformedAnnotationFile { line, reason: "empty text".into() });
        }
        hits.push(HitItem { item_id: rec.item_id, version_id: rec.version_id, tokens });
    }
    Ok(hits)
}

pub fn write_annotations(annotations: &[Annotation], path: &Path) -> Result<(), AnnotationError> {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&serde_json::to_string(a).expect("annotation serializes"));
        out.push('\n');
    }
    write(path, out)
}

/// Reads annotations without checking them against a HIT batch.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, AnnotationError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, a) in read_jsonl::<Annotation>(path)? {
        if !seen.insert((a.item_id.clone(), a.version_id.clone(), a.worker_id.clone())) {
            return Err(AnnotationError::MalformedAnnotationFile {
                line,
                reason: format!("duplicate annotation by `{}` on `{}` / `{}`", a.worker_id, a.item_id, a.version_id),
            });
        }
        out.push(a);
    }
    Ok(out)
}

/// Reads completed annotations and checks every one refers to an exported HIT.
pub fn import_annotations(path: &Path, exported: &[HitItem]) -> Result<Vec<Annotation>, AnnotationError> {
    let known: BTreeSet<(&str, &str)> = exported.iter().map(|h| (h.item_id.as_str(), h.version_id.as_str())).collect();
    let annotations = read_annotations(path)?;
    for (idx, a) in annotations.iter().enumerate() {
        if !known.contains(&(a.item_id.as_str(), a.version_id.as_str())) {
            return Err(AnnotationError::UnknownItemId {
                line: idx + 1,
                item_id: a.item_id.clone(),
                version_id: a.version_id.clone(),
            });
        }
    }
    Ok(annotations)
}

fn write(path: &Path, content: String) -> Result<(), AnnotationError> {
    fs::write(path, content).map_err(|source| AnnotationError::Io { path: path.to_path_buf(), source })
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, AnnotationError> {
    let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| AnnotationError::MalformedAnnotationFile { line: i + 1, reason: e.to_string() })
        })
        .collect()
}

/// Annotations grouped by item id, in item order.
pub fn group_by_item(annotations: &[Annotation]) -> BTreeMap<String, Vec<Label>> {
    let mut groups: BTreeMap<String, Vec<Label>> = BTreeMap::new();
    for a in annotations {
        groups.entry(a.item_id.clone()).or_default().push(a.label);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_lexicon, tokenize};

    fn hit(item: &str, version: &str, text: &str) -> HitItem {
        HitItem { item_id: item.into(), version_id: version.into(), tokens: tokenize(text) }
    }

    fn workers(n: usize, competence: f64, spam_target: f64) -> Vec<WorkerProfile> {
        (0..n).map(|i| WorkerProfile::new(format!("w{i}"), competence, spam_target).unwrap()).collect()
    }

    #[test]
    fn perception_examples() {
        let atis = builtin_lexicon("ATIS", None).unwrap();
        assert_eq!(perceive_label(&tokenize("how much is the cheapest flight"), &atis), Label::Target);
        let snips = builtin_lexicon("SNIPS", None).unwrap();
        assert_eq!(perceive_label(&tokenize("play some jazz"), &snips), Label::NonTarget);
        let ta = TaskLexicon::new(LexiconMode::PresenceImpliesNonTarget, ["worst", "dirty"]).unwrap();
        assert_eq!(perceive_label(&tokenize("worst hotel in <LOCATION>"), &ta), Label::NonTarget);
        assert_eq!(perceive_label(&tokenize("best hotel in <LOCATION>"), &ta), Label::Target);
    }

    #[test]
    fn degenerate_workers() {
        let atis = builtin_lexicon("ATIS", None).unwrap();
        let hits = vec![hit("a", "v0", "what is the fare"), hit("b", "v0", "show flights")];
        let perfect = simulate_annotations(&hits, &workers(5, 1.0, 0.5), 3, &atis, 1).unwrap();
        assert_eq!(perfect.len(), 6);
        for a in &perfect {
            let expect = if a.item_id == "a" { Label::Target } else { Label::NonTarget };
            assert_eq!(a.label, expect);
        }
        let spam = simulate_annotations(&hits, &workers(5, 0.0, 1.0), 5, &atis, 1).unwrap();
        assert!(spam.iter().all(|a| a.label == Label::Target));
        assert!(matches!(
            simulate_annotations(&hits, &workers(2, 0.5, 0.5), 3, &atis, 1),
            Err(AnnotationError::TooFewWorkers { .. })
        ));
    }

    #[test]
    fn distinct_workers_per_hit_and_order_independence() {
        let atis = builtin_lexicon("ATIS", None).unwrap();
        let mut hits: Vec<HitItem> = (0..20).map(|i| hit(&format!("i{i}"), "v0", "cheapest fare please")).collect();
        let pool = workers(6, 0.7, 0.3);
        let a = simulate_annotations(&hits, &pool, 4, &atis, 9).unwrap();
        hits.reverse();
        let mut rev_pool = pool.clone();
        rev_pool.reverse();
        assert_eq!(simulate_annotations(&hits, &rev_pool, 4, &atis, 9).unwrap(), a);
        for g in a.chunks(4) {
            let ids: BTreeSet<_> = g.iter().map(|x| &x.worker_id).collect();
            assert_eq!(ids.len(), 4);
        }
    }

    #[test]
    fn versions_are_conditionally_independent() {
        let atis = builtin_lexicon("ATIS", None).unwrap();
        let pool = workers(5, 0.6, 0.4);
        let base = vec![hit("a", "v0", "what is the fare"), hit("a", "v1", "show flights")];
        let changed = vec![hit("a", "v0", "what is the fare"), hit("a", "v1", "cheapest price")];
        let x = simulate_annotations(&base, &pool, 3, &atis, 4).unwrap();
        let y = simulate_annotations(&changed, &pool, 3, &atis, 4).unwrap();
        let v0 = |s: &[Annotation]| s.iter().filter(|a| a.version_id == "v0").cloned().collect::<Vec<_>>();
        assert_eq!(v0(&x), v0(&y));
    }

    #[test]
    fn marginal_copy_rate_matches_model() {
        let atis = builtin_lexicon("ATIS", None).unwrap();
        let hits: Vec<HitItem> = (0..10_000).map(|i| hit(&format!("i{i}"), "v0", "what is the fare")).collect();
        let (c, s_target) = (0.6, 0.3);
        let ann = simulate_annotations(&hits, &workers(1, c, s_target), 1, &atis, 77).unwrap();
        let rate = ann.iter().filter(|a| a.label == Label::Target).count() as f64 / ann.len() as f64;
        let expect = c + (1.0 - c) * s_target;
        assert!((rate - expect).abs() < 0.02, "rate {rate} vs {expect}");
    }

    #[test]
    fn hit_roundtrip_and_import_checks() {
        let dir = tempfile::tempdir().unwrap();
        let hits = vec![hit("a", "v0", "what is the fare"), hit("b", "v0", "show flights"), hit("c", "v1", "hi")];
        let hp = dir.path().join("hits.jsonl");
        export_hits(&hits, &hp).unwrap();
        assert_eq!(read_hits(&hp).unwrap(), hits);

        let done = dir.path().join("done.jsonl");
        fs::write(
            &done,
            concat!(
                r#"{"item_id":"a","version_id":"v0","worker_id":"w1","label":"target"}"#,
                "\n",
                r#"{"item_id":"b","version_id":"v0","worker_id":"w1","label":"non_target"}"#,
                "\n",
                r#"{"item_id":"c","version_id":"v1","worker_id":"w2","label":"target"}"#,
                "\n"
            ),
        )
        .unwrap();
        let ann = import_annotations(&done, &hits).unwrap();
        assert_eq!(
            ann,
            vec![
                Annotation { item_id: "a".into(), version_id: "v0".into(), worker_id: "w1".into(), label: Label::Target },
                Annotation { item_id: "b".into(), version_id: "v0".into(), worker_id: "w1".into(), label: Label::NonTarget },
                Annotation { item_id: "c".into(), version_id: "v1".into(), worker_id: "w2".into(), label: Label::Target },
            ]
        );

        let bad = dir.path().join("bad.jsonl");
        fs::write(&bad, r#"{"item_id":"zz","version_id":"v0","worker_id":"w1","label":"target"}"#).unwrap();
        assert!(matches!(import_annotations(&bad, &hits), Err(AnnotationError::UnknownItemId { .. })));
        fs::write(&bad, "{not json}\n").unwrap();
        assert!(matches!(read_annotations(&bad), Err(AnnotationError::MalformedAnnotationFile { line: 1, .. })));
    }
}
