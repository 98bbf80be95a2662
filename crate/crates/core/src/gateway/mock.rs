//! Deterministic mock backend for offline runs and tests.
//!
//! A mock either replays a scripted answer map (keyed by the request's
//! routing key, usually a question id) or answers gold with a seeded
//! per-question probability. Instrumented with in-flight counters so tests
//! can assert the gateway's concurrency bound.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{render_label_set, Benchmark, Label};
use crate::seed;

use super::{Backend, BackendFailure, GatewayError, ModelSpec, Request};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockBehavior {
    /// Answer gold with probability `accuracy`, otherwise a uniformly chosen
    /// wrong option. Per-question reproducible: the draw depends only on
    /// (seed, question id), not call order.
    Accuracy { accuracy: f64, seed: u64 },
    /// Scripted completions per routing key.
    AnswerMap { answer_map: BTreeMap<String, String> },
}

#[derive(Debug, Clone)]
struct MockQuestion {
    labels: Vec<Label>,
    gold: std::collections::BTreeSet<Label>,
}

#[derive(Default)]
pub struct MockBackend {
    behaviors: Mutex<HashMap<String, MockBehavior>>,
    corpus: RwLock<HashMap<String, MockQuestion>>,
    delay: Option<Duration>,
    in_flight: AtomicUsize,
    max_in_flight_seen: AtomicUsize,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mock that holds each call open for `delay`, to make concurrency
    /// observable.
    pub fn with_delay(delay: Duration) -> Self {
        MockBackend {
            delay: Some(delay),
            ..Self::default()
        }
    }

    pub fn register_mock(
        &self,
        model_id: &str,
        behavior: MockBehavior,
    ) -> Result<(), GatewayError> {
        if let MockBehavior::Accuracy { accuracy, .. } = &behavior {
            if !(0.0..=1.0).contains(accuracy) {
                return Err(GatewayError::Configuration(format!(
                    "mock accuracy must be in [0,1], got {accuracy}"
                )));
            }
        }
        let mut behaviors = self.behaviors.lock().unwrap();
        if behaviors.contains_key(model_id) {
            return Err(GatewayError::Configuration(format!(
                "mock already registered for model `{model_id}`"
            )));
        }
        behaviors.insert(model_id.to_string(), behavior);
        Ok(())
    }

    /// Make the benchmark's gold answers visible to accuracy-mode mocks.
    pub fn load_corpus(&self, bench: &Benchmark) {
        let mut corpus = self.corpus.write().unwrap();
        for q in &bench.questions {
            corpus.insert(
                q.id.clone(),
                MockQuestion {
                    labels: q.choices.iter().map(|c| c.label).collect(),
                    gold: q.gold.clone(),
                },
            );
        }
    }

    pub fn clear_corpus(&self) {
        self.corpus.write().unwrap().clear();
    }

    pub fn max_in_flight_observed(&self) -> usize {
        self.max_in_flight_seen.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn answer_with_accuracy(
        &self,
        accuracy: f64,
        mock_seed: u64,
        key: &str,
    ) -> Result<String, BackendFailure> {
        let corpus = self.corpus.read().unwrap();
        let q = corpus.get(key).ok_or_else(|| {
            BackendFailure::Permanent(GatewayError::Configuration(format!(
                "mock corpus has no question `{key}`; load the benchmark first"
            )))
        })?;
        let mut rng = seed::rng_for(mock_seed, &["mock", key]);
        let correct = rng.gen::<f64>() < accuracy;
        if correct {
            return Ok(render_label_set(&q.gold));
        }
        // a single wrong label can never equal a multi-label gold set
        let candidates: Vec<Label> = if q.gold.len() == 1 {
            q.labels.iter().copied().filter(|l| !q.gold.contains(l)).collect()
        } else {
            q.labels.clone()
        };
        let pick = candidates[rng.gen_range(0..candidates.len())];
        Ok(pick.to_string())
    }
}

struct InFlightGuard<'a>(&'a MockBackend);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Backend for MockBackend {
    fn complete(&self, spec: &ModelSpec, request: &Request) -> Result<String, BackendFailure> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight_seen.fetch_max(now, Ordering::SeqCst);
        let _guard = InFlightGuard(self);
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }

        let behavior = {
            let behaviors = self.behaviors.lock().unwrap();
            behaviors.get(&spec.model_id).cloned()
        };
        let behavior = behavior.ok_or_else(|| {
            BackendFailure::Permanent(GatewayError::Configuration(format!(
                "no mock registered for model `{}`",
                spec.model_id
            )))
        })?;
        let key = request.mock_key.as_deref().ok_or_else(|| {
            BackendFailure::Permanent(GatewayError::Configuration(
                "mock request carries no routing key".into(),
            ))
        })?;
        match behavior {
            MockBehavior::AnswerMap { answer_map } => {
                answer_map.get(key).cloned().ok_or_else(|| {
                    BackendFailure::Permanent(GatewayError::Configuration(format!(
                        "mock for `{}` has no scripted answer for key `{key}`",
                        spec.model_id
                    )))
                })
            }
            MockBehavior::Accuracy { accuracy, seed } => {
                self.answer_with_accuracy(accuracy, seed, key)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Choice, Question};

    fn bench_of(n: usize, num_choices: usize, gold: &str) -> Benchmark {
        let questions = (0..n)
            .map(|i| {
                let choices = (0..num_choices)
                    .map(|j| Choice {
                        label: Label::from_index(j).unwrap(),
                        text: format!("choice {j}"),
                    })
                    .collect();
                let gold: std::collections::BTreeSet<Label> =
                    gold.chars().map(|c| Label::new(c).unwrap()).collect();
                Question {
                    id: format!("q-{i:04}"),
                    stem: format!("Question {i}?"),
                    multi_select: gold.len() > 1,
                    choices,
                    gold,
                    benchmark: "mockbench".into(),
                    tags: Vec::new(),
                }
            })
            .collect();
        Benchmark {
            name: "mockbench".into(),
            questions,
            exemplar_pool: Vec::new(),
        }
    }

    fn spec(model_id: &str) -> ModelSpec {
        ModelSpec::mock(model_id)
    }

    fn request(key: &str) -> Request {
        Request {
            prompt: "ignored".into(),
            decoding: crate::gateway::Decoding::greedy(16),
            mock_key: Some(key.into()),
        }
    }

    #[test]
    fn perfect_accuracy_reproduces_gold() {
        let mock = MockBackend::new();
        mock.register_mock("m", MockBehavior::Accuracy { accuracy: 1.0, seed: 1 }).unwrap();
        let bench = bench_of(20, 4, "AC");
        mock.load_corpus(&bench);
        for q in &bench.questions {
            let text = mock.complete(&spec("m"), &request(&q.id)).unwrap();
            assert_eq!(text, "A, C");
        }
    }

    #[test]
    fn zero_accuracy_never_matches_gold() {
        let mock = MockBackend::new();
        mock.register_mock("m", MockBehavior::Accuracy { accuracy: 0.0, seed: 9 }).unwrap();
        let bench = bench_of(50, 4, "B");
        mock.load_corpus(&bench);
        for q in &bench.questions {
            let text = mock.complete(&spec("m"), &request(&q.id)).unwrap();
            assert_ne!(text, "B");
        }
    }

    #[test]
    fn seeded_accuracy_lands_in_binomial_interval() {
        // 1000 draws at accuracy 0.7: the 99% binomial interval is about
        // +/- 3.7 points around 70.
        let mock = MockBackend::new();
        mock.register_mock("m", MockBehavior::Accuracy { accuracy: 0.7, seed: 42 }).unwrap();
        let bench = bench_of(1000, 4, "B");
        mock.load_corpus(&bench);
        let hits = bench
            .questions
            .iter()
            .filter(|q| mock.complete(&spec("m"), &request(&q.id)).unwrap() == "B")
            .count();
        let observed = 100.0 * hits as f64 / 1000.0;
        assert!((observed - 70.0).abs() <= 3.7, "observed {observed}");
    }

    #[test]
    fn same_seed_gives_identical_answer_sequence() {
        let bench = bench_of(64, 5, "C");
        let run = || -> Vec<String> {
            let mock = MockBackend::new();
            mock.register_mock("m", MockBehavior::Accuracy { accuracy: 0.5, seed: 7 }).unwrap();
            mock.load_corpus(&bench);
            bench
                .questions
                .iter()
                .map(|q| mock.complete(&spec("m"), &request(&q.id)).unwrap())
                .collect()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn answer_order_does_not_change_draws() {
        let bench = bench_of(16, 4, "A");
        let mock = MockBackend::new();
        mock.register_mock("m", MockBehavior::Accuracy { accuracy: 0.5, seed: 3 }).unwrap();
        mock.load_corpus(&bench);
        let forward: Vec<String> = bench
            .questions
            .iter()
            .map(|q| mock.complete(&spec("m"), &request(&q.id)).unwrap())
            .collect();
        let backward: Vec<String> = bench
            .questions
            .iter()
            .rev()
            .map(|q| mock.complete(&spec("m"), &request(&q.id)).unwrap())
            .collect();
        let reversed: Vec<String> = backward.into_iter().rev().collect();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn duplicate_registration_is_rejected() {
        let mock = MockBackend::new();
        mock.register_mock("m", MockBehavior::Accuracy { accuracy: 0.5, seed: 1 }).unwrap();
        let err = mock
            .register_mock("m", MockBehavior::Accuracy { accuracy: 0.9, seed: 2 })
            .unwrap_err();
        assert!(err.to_string().contains("already registered"), "{err}");
    }

    #[test]
    fn scripted_map_replays_answers() {
        let mock = MockBackend::new();
        let mut answer_map = BTreeMap::new();
        answer_map.insert("q1".to_string(), "B".to_string());
        mock.register_mock("m", MockBehavior::AnswerMap { answer_map }).unwrap();
        assert_eq!(mock.complete(&spec("m"), &request("q1")).unwrap(), "B");
        assert!(mock.complete(&spec("m"), &request("q2")).is_err());
    }
}
