//! Question-bank ingestion: MMLU-compatible parsing, normalization,
//! near-duplicate removal, and invariant validation.

mod dedup;
mod parse;

pub use dedup::{dedup, jaccard_similarity, stem_token_set, RemovedPair};
pub use parse::{
    parse_benchmark, parse_benchmark_with_report, serialize_benchmark, RawRecord, SchemaKind,
    SkippedRecord,
};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Answer-choice label, a single letter `A`..=`H`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "char", into = "char")]
pub struct Label(char);

impl Label {
    pub const MAX_CHOICES: usize = 8;

    pub fn new(c: char) -> Result<Self, CorpusError> {
        if ('A'..='H').contains(&c) {
            Ok(Label(c))
        } else {
            Err(CorpusError::InvalidLabel(c))
        }
    }

    /// Label for choice position `idx` (0-based): 0 -> A, 1 -> B, ...
    pub fn from_index(idx: usize) -> Result<Self, CorpusError> {
        if idx < Self::MAX_CHOICES {
            Ok(Label((b'A' + idx as u8) as char))
        } else {
            Err(CorpusError::InvalidLabel('?'))
        }
    }

    pub fn as_char(self) -> char {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 as u8 - b'A') as usize
    }
}

impl TryFrom<char> for Label {
    type Error = CorpusError;
    fn try_from(c: char) -> Result<Self, Self::Error> {
        Label::new(c)
    }
}

impl From<Label> for char {
    fn from(l: Label) -> char {
        l.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Render a label set as "A, C" (sorted).
pub fn render_label_set(labels: &BTreeSet<Label>) -> String {
    labels
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Render a label set as the compact answer string "AC" (sorted).
pub fn render_answer_string(labels: &BTreeSet<Label>) -> String {
    labels.iter().map(|l| l.as_char()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: Label,
    pub text: String,
}

/// One multiple-choice item. `gold` may hold several labels (multi-select).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub stem: String,
    pub choices: Vec<Choice>,
    pub gold: BTreeSet<Label>,
    pub benchmark: String,
    pub multi_select: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl Question {
    pub fn labels(&self) -> BTreeSet<Label> {
        self.choices.iter().map(|c| c.label).collect()
    }

    pub fn num_choices(&self) -> usize {
        self.choices.len()
    }
}

/// A named question bank plus the ids reserved for few-shot exemplars.
/// Exemplar questions are never scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub questions: Vec<Question>,
    #[serde(default)]
    pub exemplar_pool: Vec<String>,
}

impl Benchmark {
    /// Questions eligible for scoring: everything outside the exemplar pool,
    /// in original order.
    pub fn scored_questions(&self) -> Vec<&Question> {
        let pool: BTreeSet<&str> = self.exemplar_pool.iter().map(String::as_str).collect();
        self.questions
            .iter()
            .filter(|q| !pool.contains(q.id.as_str()))
            .collect()
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Move `n` questions (chosen by a seeded shuffle) into the exemplar
    /// pool. Used when no dedicated exemplar file is supplied; the reserved
    /// questions drop out of the scored set.
    pub fn reserve_exemplars(&mut self, n: usize, seed: u64) -> Result<(), CorpusError> {
        if self.questions.len() < n + 1 {
            return Err(CorpusError::ExemplarPoolTooSmall {
                benchmark: self.name.clone(),
                available: self.questions.len(),
                needed: n + 1,
            });
        }
        let mut ids: Vec<String> = self.questions.iter().map(|q| q.id.clone()).collect();
        let mut rng = crate::seed::rng_for(seed, &["reserve_exemplars", &self.name]);
        use rand::seq::SliceRandom;
        ids.shuffle(&mut rng);
        self.exemplar_pool = ids.into_iter().take(n).collect();
        self.exemplar_pool.sort();
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for q in &self.questions {
            if !seen.insert(q.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    benchmark: self.name.clone(),
                    id: q.id.clone(),
                });
            }
            let violations = validate(q);
            if !violations.is_empty() {
                return Err(CorpusError::InvalidQuestion {
                    id: q.id.clone(),
                    violations: violations.join("; "),
                });
            }
        }
        let ids: BTreeSet<&str> = self.questions.iter().map(|q| q.id.as_str()).collect();
        for ex in &self.exemplar_pool {
            if !ids.contains(ex.as_str()) {
                return Err(CorpusError::UnknownExemplar {
                    benchmark: self.name.clone(),
                    id: ex.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid choice label {0:?}; labels run A..H")]
    InvalidLabel(char),
    #[error("record {index}: malformed field `{field}`: {reason}")]
    MalformedRecord {
        index: usize,
        field: String,
        reason: String,
    },
    #[error("duplicate question id `{id}` in benchmark `{benchmark}`")]
    DuplicateId { benchmark: String, id: String },
    #[error("question `{id}` violates invariants: {violations}")]
    InvalidQuestion { id: String, violations: String },
    #[error("exemplar pool of `{benchmark}` references unknown question id `{id}`")]
    UnknownExemplar { benchmark: String, id: String },
    #[error("benchmark `{benchmark}` has {available} questions; {needed} needed to reserve exemplars")]
    ExemplarPoolTooSmall {
        benchmark: String,
        available: usize,
        needed: usize,
    },
    #[error("dedup threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Collapse runs of whitespace to single spaces and trim.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Strip a trailing parenthesized arity hint like "(Choose two.)" from a
/// stem. Exam sources embed the multi-select arity in prose; the flag on
/// the question carries it instead.
pub fn strip_arity_hint(stem: &str) -> String {
    let re = arity_hint_re();
    re.replace(stem, "").trim_end().to_string()
}

fn arity_hint_re() -> &'static regex::Regex {
    use std::sync::OnceLock;
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(r"(?i)\s*\(\s*(?:choose|select)\s+[^)]*\)\s*$").unwrap()
    })
}

/// Check every `Question` invariant; returns one entry per failed invariant,
/// empty when the question is well-formed.
pub fn validate(q: &Question) -> Vec<String> {
    let mut violations = Vec::new();
    if q.choices.len() < 2 {
        violations.push("fewer than 2 choices".to_string());
    }
    if q.choices.len() > Label::MAX_CHOICES {
        violations.push("more than 8 choices".to_string());
    }
    let consecutive = q
        .choices
        .iter()
        .enumerate()
        .all(|(i, c)| Label::from_index(i).map(|l| l == c.label).unwrap_or(false));
    if !consecutive {
        violations.push("labels not consecutive letters from A".to_string());
    }
    if q.gold.is_empty() {
        violations.push("gold empty".to_string());
    }
    let labels = q.labels();
    if !q.gold.iter().all(|g| labels.contains(g)) {
        violations.push("gold not subset of labels".to_string());
    }
    if normalize_whitespace(&q.stem).is_empty() {
        violations.push("empty stem".to_string());
    }
    for c in &q.choices {
        if normalize_whitespace(&c.text).is_empty() {
            violations.push(format!("empty text for choice {}", c.label));
        }
    }
    if q.multi_select != (q.gold.len() > 1) {
        violations.push("multi_select flag inconsistent with gold size".to_string());
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn question(id: &str, stem: &str, choices: &[&str], gold: &str) -> Question {
        let choices: Vec<Choice> = choices
            .iter()
            .enumerate()
            .map(|(i, t)| Choice {
                label: Label::from_index(i).unwrap(),
                text: t.to_string(),
            })
            .collect();
        let gold: BTreeSet<Label> = gold.chars().map(|c| Label::new(c).unwrap()).collect();
        let multi_select = gold.len() > 1;
        Question {
            id: id.to_string(),
            stem: stem.to_string(),
            choices,
            gold,
            benchmark: "test".to_string(),
            multi_select,
            tags: Vec::new(),
        }
    }

    #[test]
    fn well_formed_question_has_no_violations() {
        let q = question("q1", "What is AAA?", &["w", "x", "y", "z"], "B");
        assert!(validate(&q).is_empty());
    }

    #[test]
    fn gold_outside_labels_is_flagged() {
        let mut q = question("q1", "What is AAA?", &["w", "x", "y", "z"], "B");
        q.gold = [Label::new('E').unwrap()].into_iter().collect();
        let v = validate(&q);
        assert!(v.contains(&"gold not subset of labels".to_string()), "{v:?}");
    }

    #[test]
    fn single_choice_is_flagged() {
        let q = question("q1", "Pick one.", &["only"], "A");
        let v = validate(&q);
        assert!(v.contains(&"fewer than 2 choices".to_string()), "{v:?}");
    }

    #[test]
    fn arity_hint_is_stripped() {
        assert_eq!(
            strip_arity_hint("Which two ports are used? (Choose two.)"),
            "Which two ports are used?"
        );
        assert_eq!(
            strip_arity_hint("Which apply? (Select all that apply)"),
            "Which apply?"
        );
        assert_eq!(strip_arity_hint("No hint here."), "No hint here.");
    }

    #[test]
    fn label_range_is_enforced() {
        assert!(Label::new('A').is_ok());
        assert!(Label::new('H').is_ok());
        assert!(Label::new('I').is_err());
        assert!(Label::new('a').is_err());
    }

    #[test]
    fn scored_questions_exclude_exemplars() {
        let qs: Vec<Question> = (0..6)
            .map(|i| question(&format!("q{i}"), "Stem?", &["a", "b"], "A"))
            .collect();
        let bench = Benchmark {
            name: "t".into(),
            questions: qs,
            exemplar_pool: vec!["q0".into(), "q3".into()],
        };
        let scored: Vec<&str> = bench.scored_questions().iter().map(|q| q.id.as_str()).collect();
        assert_eq!(scored, vec!["q1", "q2", "q4", "q5"]);
    }
}
