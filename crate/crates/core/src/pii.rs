//! Rule-based PII removal.
//!
//! Names and locations come from gazetteers (lists of lowercase token
//! sequences); dates, times, e-mail addresses and phone numbers are matched by
//! patterns. Each matched span collapses into a single placeholder token such
//! as `<LOCATION>`. A recognizer is only as good as its gazetteer: a city that
//! is not listed is copied through unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_placeholder_token, tokenize, Corpus, CorpusError};

/// Longest gazetteer entry, in tokens.
pub const MAX_ENTRY_TOKENS: usize = 3;
/// Longest phone number run, in tokens.
const MAX_PHONE_TOKENS: usize = 4;
const MIN_PHONE_DIGITS: usize = 7;

#[derive(Debug, thiserror::Error)]
pub enum PiiError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("gazetteer entry `{0}` must have 1 to 3 tokens and contain no placeholder")]
    InvalidEntry(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Name,
    Location,
}

/// PII categories in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Name,
    Location,
    Date,
    Time,
    Email,
    Phone,
}

impl Category {
    pub fn placeholder(self) -> &'static str {
        match self {
            Category::Name => "<NAME>",
            Category::Location => "<LOCATION>",
            Category::Date => "<DATE>",
            Category::Time => "<TIME>",
            Category::Email => "<EMAIL>",
            Category::Phone => "<PHONE>",
        }
    }
}

impl From<EntityKind> for Category {
    fn from(k: EntityKind) -> Self {
        match k {
            EntityKind::Name => Category::Name,
            EntityKind::Location => Category::Location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer {
    pub kind: EntityKind,
    entries: BTreeSet<Vec<String>>,
}

impl Gazetteer {
    pub fn empty(kind: EntityKind) -> Self {
        Gazetteer { kind, entries: BTreeSet::new() }
    }

    pub fn new<I, S>(kind: EntityKind, entries: I) -> Result<Self, PiiError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for raw in entries {
            let toks = tokenize(raw.as_ref());
            if toks.is_empty() {
                continue;
            }
            if toks.len() > MAX_ENTRY_TOKENS || toks.iter().any(|t| is_placeholder_token(t)) {
                return Err(PiiError::InvalidEntry(raw.as_ref().to_string()));
            }
            set.insert(toks);
        }
        Ok(Gazetteer { kind, entries: set })
    }

    /// One entry per line; blank lines are ignored.
    pub fn load(kind: EntityKind, path: &Path) -> Result<Self, PiiError> {
        let content = fs::read_to_string(path).map_err(|source| PiiError::Io { path: path.to_path_buf(), source })?;
        Gazetteer::new(kind, content.lines())
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

    /// Length of the longest entry that starts at `tokens[0]`.
    fn longest_match(&self, tokens: &[String]) -> Option<usize> {
        (1..=MAX_ENTRY_TOKENS.min(tokens.len()))
            .rev()
            .find(|&n| self.entries.contains(&tokens[..n]))
    }
}

/// One collapsed span, indexed into the input token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub start: usize,
    pub len: usize,
    pub category: Category,
    pub placeholder: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionResult {
    pub tokens: Vec<String>,
    pub replacements: Vec<Replacement>,
}

const WEEKDAYS: &[&str] = &["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const MONTHS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
    "december",
];

static NUMERIC_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{1,2}[/.\-]\d{1,2}[/.\-]\d{2,4}|\d{4}-\d{1,2}-\d{1,2})$").unwrap()
});
static CLOCK_TIME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{1,2}:\d{2}(am|pm)?|\d{1,2}(am|pm))$").unwrap());
static HOUR_ONLY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{1,2}(:\d{2})?$").unwrap());
static PHONE_PART: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\+?[\d().\-]*\d[\d().\-]*$").unwrap());

fn is_date(tok: &str) -> bool {
    WEEKDAYS.contains(&tok) || MONTHS.contains(&tok) || NUMERIC_DATE.is_match(tok)
}

fn is_meridiem(tok: &str) -> bool {
    matches!(tok, "am" | "pm" | "a.m" | "p.m")
}

/// Span length of a time expression starting at `tokens[0]`.
fn time_match(tokens: &[String]) -> Option<usize> {
    let first = tokens[0].as_str();
    if tokens.len() >= 2 && HOUR_ONLY.is_match(first) && is_meridiem(&tokens[1]) {
        return Some(2);
    }
    (first == "noon" || first == "midnight" || CLOCK_TIME.is_match(first)).then_some(1)
}

fn is_email(tok: &str) -> bool {
    let mut parts = tok.split('@');
    let (Some(local), Some(domain), None) = (parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    !local.is_empty() && domain.contains('.') && domain.split('.').all(|l| !l.is_empty())
}

/// Longest run of digit/separator tokens carrying at least seven digits.
fn phone_match(tokens: &[String]) -> Option<usize> {
    let mut digits = 0;
    let mut best = None;
    for (i, tok) in tokens.iter().take(MAX_PHONE_TOKENS).enumerate() {
        if !PHONE_PART.is_match(tok) {
            break;
        }
        digits += tok.chars().filter(char::is_ascii_digit).count();
        if digits >= MIN_PHONE_DIGITS {
            best = Some(i + 1);
        }
    }
    best
}

/// Longest match at the head of `tokens`; ties go to the earlier category.
fn match_at(tokens: &[String], names: &Gazetteer, locations: &Gazetteer) -> Option<(usize, Category)> {
    let head = tokens[0].as_str();
    let candidates = [
        names.longest_match(tokens).map(|n| (n, Category::Name)),
        locations.longest_match(tokens).map(|n| (n, Category::Location)),
        is_date(head).then_some((1, Category::Date)),
        time_match(tokens).map(|n| (n, Category::Time)),
        is_email(head).then_some((1, Category::Email)),
        phone_match(tokens).map(|n| (n, Category::Phone)),
    ];
    // Greatest length first, then the lowest category.
    candidates
        .into_iter()
        .flatten()
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)))
}

/// Replaces PII spans with placeholders, scanning left to right with the
/// longest match winning at each position. Existing placeholders are copied.
pub fn redact(tokens: &[String], names: &Gazetteer, locations: &Gazetteer) -> RedactionResult {
    let mut out = Vec::with_capacity(tokens.len());
    let mut replacements = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if is_placeholder_token(&tokens[i]) {
            out.push(tokens[i].clone());
            i += 1;
            continue;
        }
        match match_at(&tokens[i..], names, locations) {
            Some((len, category)) => {
                let placeholder = category.placeholder().to_string();
                out.push(placeholder.clone());
                replacements.push(Replacement { start: i, len, category, placeholder });
                i += len;
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    RedactionResult { tokens: out, replacements }
}

/// Redacts every point. Ids and gold labels are kept.
pub fn redact_corpus(
    c: &Corpus,
    names: &Gazetteer,
    locations: &Gazetteer,
) -> Result<(Corpus, BTreeMap<String, RedactionResult>), PiiError> {
    let mut log = BTreeMap::new();
    let redacted = c.map_tokens(|p| {
        let r = redact(&p.tokens, names, locations);
        let toks = r.tokens.clone();
        log.insert(p.id.clone(), r);
        toks
    })?;
    Ok((redacted, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DataPoint, Label};
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn gaz(kind: EntityKind, e: &[&str]) -> Gazetteer {
        Gazetteer::new(kind, e).unwrap()
    }

    #[test]
    fn memphis_example() {
        let locs = gaz(EntityKind::Location, &["indianapolis", "memphis"]);
        let r = redact(&toks("what flights from indianapolis to memphis"), &Gazetteer::empty(EntityKind::Name), &locs);
        assert_eq!(r.tokens, toks("what flights from <LOCATION> to <LOCATION>"));
        assert_eq!(r.replacements.len(), 2);

        // Missing gazetteer entry: memphis survives.
        let partial = gaz(EntityKind::Location, &["indianapolis"]);
        let r = redact(&toks("what flights from indianapolis to memphis"), &Gazetteer::empty(EntityKind::Name), &partial);
        assert_eq!(r.tokens, toks("what flights from <LOCATION> to memphis"));
    }

    #[test]
    fn pattern_examples() {
        let none = Gazetteer::empty(EntityKind::Name);
        let nol = Gazetteer::empty(EntityKind::Location);
        assert_eq!(redact(&toks("meet me at 5pm on monday"), &none, &nol).tokens, toks("meet me at <TIME> on <DATE>"));
        let names = gaz(EntityKind::Name, &["john"]);
        assert_eq!(redact(&toks("mail john at john.doe@mail.com"), &names, &nol).tokens, toks("mail <NAME> at <EMAIL>"));
        assert_eq!(redact(&toks("call 555-123-4567 now"), &none, &nol).tokens, toks("call <PHONE> now"));
        assert_eq!(redact(&toks("call 555 123 4567 now"), &none, &nol).tokens, toks("call <PHONE> now"));
        assert_eq!(redact(&toks("at 10:30 p.m. on 12/05/2021"), &none, &nol).tokens, toks("at <TIME> on <DATE>"));
        assert_eq!(redact(&toks("flight 1234 at noon"), &none, &nol).tokens, toks("flight 1234 at <TIME>"));
        assert_eq!(redact(&toks("on 2021-05-12"), &none, &nol).tokens, toks("on <DATE>"));
    }

    #[test]
    fn longest_match_and_name_priority() {
        let names = gaz(EntityKind::Name, &["paris", "jordan"]);
        let locs = gaz(EntityKind::Location, &["paris", "new york", "new york city"]);
        let r = redact(&toks("from new york city to paris"), &names, &locs);
        assert_eq!(r.tokens, toks("from <LOCATION> to <NAME>"));
        assert_eq!(
            r.replacements[0],
            Replacement { start: 1, len: 3, category: Category::Location, placeholder: "<LOCATION>".into() }
        );
    }

    #[test]
    fn invalid_gazetteer_entries() {
        assert!(Gazetteer::new(EntityKind::Name, ["<NAME>"]).is_err());
        assert!(Gazetteer::new(EntityKind::Location, ["a b c d"]).is_err());
    }

    #[test]
    fn corpus_redaction_keeps_labels_and_unmatched_points() {
        let pts = vec![
            DataPoint::new("a", "How much is a flight from Boston to Denver on Monday?", Label::Target).unwrap(),
            DataPoint::new("b", "Play some jazz", Label::NonTarget).unwrap(),
            DataPoint::new("c", "Ask Mary about the 9am flight", Label::NonTarget).unwrap(),
            DataPoint::new("d", "Email mary.smith@example.org the fare", Label::Target).unwrap(),
            DataPoint::new("e", "New York to Denver at 7:15", Label::NonTarget).unwrap(),
        ];
        let c = Corpus::new("fx", "target", pts).unwrap();
        let names = gaz(EntityKind::Name, &["mary"]);
        let locs = gaz(EntityKind::Location, &["boston", "denver", "new york"]);
        let (r, log) = redact_corpus(&c, &names, &locs).unwrap();
        let texts: Vec<&str> = r.points().iter().map(|p| p.raw_text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "how much is a flight from <LOCATION> to <LOCATION> on <DATE>",
                "play some jazz",
                "ask <NAME> about the <TIME> flight",
                "email <EMAIL> the fare",
                "<LOCATION> to <LOCATION> at <TIME>",
            ]
        );
        assert_eq!(r.gold_by_id(), c.gold_by_id());
        assert!(log["b"].replacements.is_empty());
        assert_eq!(log["e"].replacements[0].len, 2);
    }

    fn word() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("boston".to_string()),
            Just("new".to_string()),
            Just("york".to_string()),
            Just("mary".to_string()),
            Just("5".to_string()),
            Just("pm".to_string()),
            Just("555".to_string()),
            Just("1234".to_string()),
            Just("monday".to_string()),
            Just("<NAME>".to_string()),
            "[a-z]{1,5}",
        ]
    }

    proptest! {
        #[test]
        fn redaction_invariants(tokens in prop::collection::vec(word(), 0..12)) {
            let names = gaz(EntityKind::Name, &["mary", "new"]);
            let locs = gaz(EntityKind::Location, &["boston", "new york"]);
            let once = redact(&tokens, &names, &locs);
            let twice = redact(&once.tokens, &names, &locs);
            prop_assert_eq!(&twice.tokens, &once.tokens);
            prop_assert!(twice.replacements.is_empty());

            let collapsed: usize = once.replacements.iter().map(|r| r.len - 1).sum();
            prop_assert_eq!(once.tokens.len(), tokens.len() - collapsed);

            // Unlogged tokens are copied verbatim and in order.
            let mut out = once.tokens.iter();
            let mut i = 0;
            let mut reps = once.replacements.iter().peekable();
            let mut last_end = 0;
            while i < tokens.len() {
                if let Some(r) = reps.peek() {
                    prop_assert!(r.start >= last_end);
                    if r.start == i {
                        prop_assert_eq!(out.next().unwrap(), &r.placeholder);
                        i += r.len;
                        last_end = i;
                        reps.next();
                        continue;
                    }
                }
                prop_assert_eq!(out.next().unwrap(), &tokens[i]);
                i += 1;
            }
            prop_assert!(out.next().is_none());
        }
    }
}
