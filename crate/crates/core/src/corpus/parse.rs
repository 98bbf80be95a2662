//! Dataset file parsing for the two accepted schemas.
//!
//! * `records`: line-delimited JSON objects
//!   `{id?, question, choices: [text...], answer: "letters", benchmark?, tags?, format?}`
//! * `rows`: headerless 6-column CSV `(question, A, B, C, D, answer)` for
//!   MMLU-style files.
//!
//! Non-MCQA formats (drag-and-drop, image-referencing) are excluded at parse
//! time via the `format` field whitelist; excluded records are reported, not
//! errors. Structural problems are hard errors naming the record and field.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    normalize_whitespace, render_answer_string, strip_arity_hint, Benchmark, Choice, CorpusError,
    Label, Question,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    /// Line-delimited JSON records.
    Records,
    /// Headerless 6-column CSV rows.
    Rows,
}

impl Default for SchemaKind {
    fn default() -> Self {
        SchemaKind::Records
    }
}

/// `format` values accepted as standard multiple choice.
const FORMAT_WHITELIST: &[&str] = &["mcqa", "multiple_choice", "multiple-choice"];

/// A record excluded by the format whitelist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub index: usize,
    pub format: String,
}

/// Canonical on-disk shape of one question record.
#[derive(Debug, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub choices: Vec<String>,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

pub fn parse_benchmark(
    path: &Path,
    schema: SchemaKind,
    name: &str,
) -> Result<Benchmark, CorpusError> {
    parse_benchmark_with_report(path, schema, name, name).map(|(b, _)| b)
}

/// As [`parse_benchmark`], also returning the records excluded by the format
/// whitelist. `id_prefix` controls synthesized ids (`<prefix>-<index>`,
/// zero-padded so lexicographic id order preserves row order).
pub fn parse_benchmark_with_report(
    path: &Path,
    schema: SchemaKind,
    name: &str,
    id_prefix: &str,
) -> Result<(Benchmark, Vec<SkippedRecord>), CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut questions = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_ids = BTreeSet::new();

    match schema {
        SchemaKind::Records => {
            for (index, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value =
                    serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                        index,
                        field: "<record>".into(),
                        reason: e.to_string(),
                    })?;
                if let Some(fmt) = value.get("format").and_then(Value::as_str) {
                    if !FORMAT_WHITELIST.contains(&fmt) {
                        skipped.push(SkippedRecord {
                            index,
                            format: fmt.to_string(),
                        });
                        continue;
                    }
                }
                let q = record_to_question(&value, index, name, id_prefix)?;
                push_unique(&mut questions, &mut seen_ids, q, name)?;
            }
        }
        SchemaKind::Rows => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(text.as_bytes());
            for (index, row) in reader.records().enumerate() {
                let row = row.map_err(|e| CorpusError::MalformedRecord {
                    index,
                    field: "<row>".into(),
                    reason: e.to_string(),
                })?;
                if row.len() != 6 {
                    return Err(CorpusError::MalformedRecord {
                        index,
                        field: "<row>".into(),
                        reason: format!("expected 6 columns, got {}", row.len()),
                    });
                }
                let choices: Vec<String> = (1..5).map(|i| row[i].to_string()).collect();
                let q = build_question(
                    None,
                    &row[0],
                    &choices,
                    &row[5],
                    index,
                    name,
                    id_prefix,
                    Vec::new(),
                )?;
                push_unique(&mut questions, &mut seen_ids, q, name)?;
            }
        }
    }

    let bench = Benchmark {
        name: name.to_string(),
        questions,
        exemplar_pool: Vec::new(),
    };
    bench.validate()?;
    Ok((bench, skipped))
}

fn push_unique(
    questions: &mut Vec<Question>,
    seen: &mut BTreeSet<String>,
    q: Question,
    name: &str,
) -> Result<(), CorpusError> {
    if !seen.insert(q.id.clone()) {
        return Err(CorpusError::DuplicateId {
            benchmark: name.to_string(),
            id: q.id,
        });
    }
    questions.push(q);
    Ok(())
}

fn record_to_question(
    value: &Value,
    index: usize,
    name: &str,
    id_prefix: &str,
) -> Result<Question, CorpusError> {
    let field_err = |field: &str, reason: &str| CorpusError::MalformedRecord {
        index,
        field: field.to_string(),
        reason: reason.to_string(),
    };
    let question = value
        .get("question")
        .and_then(Value::as_str)
        .ok_or_else(|| field_err("question", "missing or not a string"))?;
    let choices = value
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| field_err("choices", "missing or not an array"))?;
    let choices: Vec<String> = choices
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.as_str()
                .map(String::from)
                .ok_or_else(|| field_err("choices", &format!("element {i} not a string")))
        })
        .collect::<Result<_, _>>()?;
    let answer = value
        .get("answer")
        .and_then(Value::as_str)
        .ok_or_else(|| field_err("answer", "missing or not a string"))?;
    let id = value.get("id").and_then(Value::as_str).map(String::from);
    let tags = match value.get("tags") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|t| {
                t.as_str()
                    .map(String::from)
                    .ok_or_else(|| field_err("tags", "element not a string"))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(field_err("tags", "not an array")),
    };
    build_question(id, question, &choices, answer, index, name, id_prefix, tags)
}

#[allow(clippy::too_many_arguments)]
fn build_question(
    id: Option<String>,
    stem: &str,
    choice_texts: &[String],
    answer: &str,
    index: usize,
    name: &str,
    id_prefix: &str,
    tags: Vec<String>,
) -> Result<Question, CorpusError> {
    let field_err = |field: &str, reason: String| CorpusError::MalformedRecord {
        index,
        field: field.to_string(),
        reason,
    };

    let stem = strip_arity_hint(&normalize_whitespace(stem));
    if stem.is_empty() {
        return Err(field_err("question", "empty after normalization".into()));
    }
    if choice_texts.len() < 2 || choice_texts.len() > Label::MAX_CHOICES {
        return Err(field_err(
            "choices",
            format!("need 2..=8 choices, got {}", choice_texts.len()),
        ));
    }
    let mut choices = Vec::with_capacity(choice_texts.len());
    for (i, text) in choice_texts.iter().enumerate() {
        let text = normalize_whitespace(text);
        if text.is_empty() {
            return Err(field_err("choices", format!("choice {i} empty")));
        }
        choices.push(Choice {
            label: Label::from_index(i).unwrap(),
            text,
        });
    }
    let mut gold = BTreeSet::new();
    for c in answer.chars() {
        if c.is_ascii_alphabetic() {
            let label = Label::new(c.to_ascii_uppercase())
                .map_err(|_| field_err("answer", format!("label {c:?} out of range")))?;
            if label.index() >= choices.len() {
                return Err(field_err(
                    "answer",
                    format!("label {label} has no matching choice"),
                ));
            }
            gold.insert(label);
        } else if !matches!(c, ',' | ' ' | ';') {
            return Err(field_err("answer", format!("unexpected character {c:?}")));
        }
    }
    if gold.is_empty() {
        return Err(field_err("answer", "no answer labels".into()));
    }
    let multi_select = gold.len() > 1;
    Ok(Question {
        id: id.unwrap_or_else(|| format!("{id_prefix}-{index:05}")),
        stem,
        choices,
        gold,
        benchmark: name.to_string(),
        multi_select,
        tags,
    })
}

/// Serialize a benchmark back to canonical line-delimited records.
/// `parse_benchmark` of the output reproduces the input benchmark.
pub fn serialize_benchmark(bench: &Benchmark) -> String {
    let mut out = String::new();
    for q in &bench.questions {
        let record = RawRecord {
            id: Some(q.id.clone()),
            question: q.stem.clone(),
            choices: q.choices.iter().map(|c| c.text.clone()).collect(),
            answer: render_answer_string(&q.gold),
            benchmark: Some(q.benchmark.clone()),
            tags: q.tags.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}
