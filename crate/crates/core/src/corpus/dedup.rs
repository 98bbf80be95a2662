//! Exact and near-duplicate removal.
//!
//! Near-duplicate metric: token-set Jaccard similarity over lowercased,
//! punctuation-stripped stems. Question banks here are a few hundred items,
//! so the pairwise comparison stays auditable; no signature sketching.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{normalize_whitespace, CorpusError, Question};

/// One dropped question and the kept cluster representative it duplicated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovedPair {
    pub kept: String,
    pub removed: String,
    pub score: f64,
}

/// Lowercased alphanumeric token set of a stem.
pub fn stem_token_set(stem: &str) -> BTreeSet<String> {
    stem.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// Token-set Jaccard similarity. Two empty sets compare equal (1.0).
pub fn jaccard_similarity(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

/// Remove exact duplicates (identical normalized stem plus choices) and
/// near-duplicates (stem Jaccard >= `threshold`). Duplicate clusters keep
/// the lexicographically smallest id; every removal is logged against the
/// kept representative with the pair's score.
pub fn dedup(
    questions: &[Question],
    jaccard_threshold: f64,
) -> Result<(Vec<Question>, Vec<RemovedPair>), CorpusError> {
    if !(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0) {
        return Err(CorpusError::BadThreshold(jaccard_threshold));
    }
    let n = questions.len();
    let token_sets: Vec<BTreeSet<String>> =
        questions.iter().map(|q| stem_token_set(&q.stem)).collect();
    let exact_keys: Vec<(String, Vec<String>)> = questions
        .iter()
        .map(|q| {
            (
                normalize_whitespace(&q.stem).to_lowercase(),
                q.choices
                    .iter()
                    .map(|c| normalize_whitespace(&c.text).to_lowercase())
                    .collect(),
            )
        })
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let exact = exact_keys[i] == exact_keys[j];
            let near = jaccard_similarity(&token_sets[i], &token_sets[j]) >= jaccard_threshold;
            if exact || near {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().push(i);
    }

    let mut keep = vec![true; n];
    let mut removed = Vec::new();
    for members in clusters.values() {
        if members.len() < 2 {
            continue;
        }
        let rep = *members
            .iter()
            .min_by(|&&a, &&b| questions[a].id.cmp(&questions[b].id))
            .unwrap();
        for &m in members {
            if m == rep {
                continue;
            }
            keep[m] = false;
            let score = if exact_keys[rep] == exact_keys[m] {
                1.0
            } else {
                jaccard_similarity(&token_sets[rep], &token_sets[m])
            };
            removed.push(RemovedPair {
                kept: questions[rep].id.clone(),
                removed: questions[m].id.clone(),
                score,
            });
        }
    }
    let kept: Vec<Question> = questions
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, q)| q.clone())
        .collect();
    removed.sort_by(|a, b| a.removed.cmp(&b.removed));
    Ok((kept, removed))
}
