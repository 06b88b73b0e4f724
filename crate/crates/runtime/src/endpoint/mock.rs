//! Deterministic stand-ins for extraction models.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};

use kgflow_core::flowline::ModelTask;

use super::{Endpoint, EndpointError, InferResult, InferRow};
use crate::record::{Chunk, Document, NO_RELATION};

/// Regex gazetteer: literal surfaces and patterns mapped to entity types.
pub struct GazetteerCe {
    rules: Vec<(Regex, String)>,
}

impl GazetteerCe {
    pub fn new(entries: &BTreeMap<String, String>, patterns: &BTreeMap<String, String>) -> Result<Self, EndpointError> {
        let mut rules = Vec::new();
        for (surface, kind) in entries {
            let re = Regex::new(&format!(r"\b{}\b", regex::escape(surface)))
                .map_err(|e| EndpointError::Config(e.to_string()))?;
            rules.push((re, kind.clone()));
        }
        for (pattern, kind) in patterns {
            let re = Regex::new(pattern).map_err(|e| EndpointError::Config(format!("pattern `{pattern}`: {e}")))?;
            rules.push((re, kind.clone()));
        }
        Ok(GazetteerCe { rules })
    }
}

/// Character offsets of a byte range.
fn char_span(text: &str, start: usize, end: usize) -> (usize, usize) {
    let s = text[..start].chars().count();
    (s, s + text[start..end].chars().count())
}

impl Endpoint for GazetteerCe {
    fn task(&self) -> ModelTask {
        ModelTask::Ce
    }

    fn label_set(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.rules.iter().map(|(_, k)| k.clone()).collect();
        set.into_iter().collect()
    }

    fn infer(&mut self, rows: &[InferRow]) -> Result<Vec<InferResult>, EndpointError> {
        Ok(rows
            .iter()
            .map(|row| {
                let mut chunks: Vec<Chunk> = self
                    .rules
                    .iter()
                    .flat_map(|(re, kind)| {
                        re.find_iter(&row.text).map(move |m| {
                            let (s, e) = char_span(&row.text, m.start(), m.end());
                            Chunk::new(m.as_str(), kind.clone(), s, e)
                        })
                    })
                    .collect();
                chunks.sort_by(|a, b| (a.start, a.end, &a.kind).cmp(&(b.start, b.end, &b.kind)));
                chunks.dedup();
                InferResult::Chunks { chunks }
            })
            .collect())
    }
}

/// A relation assigned when `keyword` occurs in the sample and the pair's
/// types match the optional constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub keyword: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

/// Keyword-pattern relation classifier. The first matching rule wins.
pub struct KeywordCc {
    rules: Vec<(Regex, KeywordRule)>,
    score: f64,
}

impl KeywordCc {
    pub fn new(rules: Vec<KeywordRule>, score: f64) -> Result<Self, EndpointError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EndpointError::Config(format!("score {score} outside [0, 1]")));
        }
        let rules = rules
            .into_iter()
            .map(|r| {
                Regex::new(&format!(r"(?i)\b{}\b", regex::escape(&r.keyword)))
                    .map(|re| (re, r))
                    .map_err(|e| EndpointError::Config(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(KeywordCc { rules, score })
    }
}

impl Endpoint for KeywordCc {
    fn task(&self) -> ModelTask {
        ModelTask::Cc
    }

    fn label_set(&self) -> Vec<String> {
        let mut set: BTreeSet<String> = self.rules.iter().map(|(_, r)| r.label.clone()).collect();
        set.insert(NO_RELATION.into());
        set.into_iter().collect()
    }

    fn infer(&mut self, rows: &[InferRow]) -> Result<Vec<InferResult>, EndpointError> {
        rows.iter()
            .map(|row| {
                let (Some(s), Some(o)) = (&row.subject, &row.object) else {
                    return Err(EndpointError::Protocol(format!("row `{}` has no entity pair", row.id)));
                };
                let hit = self.rules.iter().find(|(re, r)| {
                    r.subject.as_ref().is_none_or(|t| *t == s.kind)
                        && r.object.as_ref().is_none_or(|t| *t == o.kind)
                        && re.is_match(&row.text)
                });
                let label = hit.map_or(NO_RELATION, |(_, r)| r.label.as_str());
                Ok(InferResult::Label {
                    label: label.to_string(),
                    score: self.score,
                    scores: None,
                })
            })
            .collect()
    }
}

/// FNV-1a, used to pick dropped chunks reproducibly across platforms.
fn fnv(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Replays the gold entities of a corpus. A degraded oracle keeps the
/// `ceil(recall * n)` gold chunks that rank lowest under a seeded hash; the
/// complement keeps the others.
pub struct OracleCe {
    gold: HashMap<String, Vec<Chunk>>,
    labels: Vec<String>,
}

impl OracleCe {
    pub fn new(corpus: &[Document]) -> Self {
        Self::degraded(corpus, 1.0, 0, false).expect("full recall is valid")
    }

    pub fn degraded(corpus: &[Document], recall: f64, seed: u64, complement: bool) -> Result<Self, EndpointError> {
        if !(0.0..=1.0).contains(&recall) {
            return Err(EndpointError::Config(format!("recall {recall} outside [0, 1]")));
        }
        let mut ranked: Vec<(u64, &str, &Chunk)> = corpus
            .iter()
            .flat_map(|d| {
                d.entities.iter().map(move |c| {
                    let key = format!("{seed}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}", d.id, c.start, c.end, c.kind);
                    (fnv(&key), d.id.as_str(), c)
                })
            })
            .collect();
        ranked.sort();
        let keep = (recall * ranked.len() as f64).ceil() as usize;
        let mut gold: HashMap<String, Vec<Chunk>> = corpus.iter().map(|d| (d.id.clone(), Vec::new())).collect();
        for (rank, (_, id, chunk)) in ranked.into_iter().enumerate() {
            if (rank < keep) != complement {
                gold.get_mut(id).expect("document present").push(chunk.clone());
            }
        }
        for chunks in gold.values_mut() {
            chunks.sort_by(|a, b| (a.start, a.end).cmp(&(b.start, b.end)));
        }
        let labels: BTreeSet<String> = corpus
            .iter()
            .flat_map(|d| d.entities.iter().map(|c| c.kind.clone()))
            .collect();
        Ok(OracleCe {
            gold,
            labels: labels.into_iter().collect(),
        })
    }
}

impl Endpoint for OracleCe {
    fn task(&self) -> ModelTask {
        ModelTask::Ce
    }

    fn label_set(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn infer(&mut self, rows: &[InferRow]) -> Result<Vec<InferResult>, EndpointError> {
        Ok(rows
            .iter()
            .map(|r| InferResult::Chunks {
                chunks: self.gold.get(&r.id).cloned().unwrap_or_default(),
            })
            .collect())
    }
}

/// Replays gold relations: a pair gets its gold predicate, or
/// [`NO_RELATION`], scored with the configured confidence.
pub struct OracleCc {
    gold: HashMap<(String, String, String), String>,
    labels: Vec<String>,
    confidence: f64,
}

impl OracleCc {
    pub fn new(corpus: &[Document], confidence: f64) -> Result<Self, EndpointError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(EndpointError::Config(format!("confidence {confidence} outside [0, 1]")));
        }
        let mut gold = HashMap::new();
        let mut labels = BTreeSet::from([NO_RELATION.to_string()]);
        for d in corpus {
            for r in &d.relations {
                gold.insert((d.id.clone(), r.subject.clone(), r.object.clone()), r.predicate.clone());
                labels.insert(r.predicate.clone());
            }
        }
        Ok(OracleCc {
            gold,
            labels: labels.into_iter().collect(),
            confidence,
        })
    }
}

impl Endpoint for OracleCc {
    fn task(&self) -> ModelTask {
        ModelTask::Cc
    }

    fn label_set(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn infer(&mut self, rows: &[InferRow]) -> Result<Vec<InferResult>, EndpointError> {
        rows.iter()
            .map(|row| {
                let (Some(s), Some(o)) = (&row.subject, &row.object) else {
                    return Err(EndpointError::Protocol(format!("row `{}` has no entity pair", row.id)));
                };
                let key = (row.id.clone(), s.surface.clone(), o.surface.clone());
                let label = self.gold.get(&key).map_or(NO_RELATION, String::as_str).to_string();
                Ok(InferResult::Label {
                    scores: Some(BTreeMap::from([(label.clone(), self.confidence)])),
                    label,
                    score: self.confidence,
                })
            })
            .collect()
    }
}
