//! Normalized model endpoints.
//!
//! A classification (CC) endpoint returns one label with scores per row; a
//! chunk extraction (CE) endpoint returns a set of chunks per row. Endpoints
//! run in process or behind a line-delimited JSON protocol on a child
//! process's stdin and stdout:
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"task":"ce","label_set":["PER","ORG"]}
//! -> {"op":"infer","task":"ce","rows":[{"id":"d1","text":"..."}]}
//! <- {"rows":[{"chunks":[{"surface":"...","type":"PER","start":0,"end":10}]}]}
//! ```
//!
//! A failed request is answered with `{"error":"..."}`.

mod mock;
mod subprocess;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use kgflow_core::flowline::{ModelTask, TaskNode};

use crate::corpus::load_corpus;
use crate::record::{Chunk, Document};

pub use mock::{GazetteerCe, KeywordCc, KeywordRule, OracleCc, OracleCe};
pub use subprocess::SubprocessEndpoint;

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("endpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("endpoint reported: {0}")]
    Remote(String),
    #[error("bad endpoint config: {0}")]
    Config(String),
}

/// Request row. CC rows carry the pair to classify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRow {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Chunk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<Chunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InferResult {
    Chunks {
        chunks: Vec<Chunk>,
    },
    Label {
        label: String,
        score: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scores: Option<BTreeMap<String, f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello,
    Infer { task: ModelTask, rows: Vec<InferRow> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub task: ModelTask,
    pub label_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Rows { rows: Vec<InferResult> },
    Error { error: String },
    Hello(Hello),
}

pub trait Endpoint: Send {
    fn task(&self) -> ModelTask;
    fn label_set(&self) -> Vec<String>;
    /// One result per request row, in order.
    fn infer(&mut self, rows: &[InferRow]) -> Result<Vec<InferResult>, EndpointError>;
}

/// Endpoint construction recipe, as written in endpoint config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EndpointSpec {
    /// Literal surfaces and regular expressions mapped to entity types.
    Gazetteer {
        #[serde(default)]
        entries: BTreeMap<String, String>,
        #[serde(default)]
        patterns: BTreeMap<String, String>,
    },
    Keyword {
        rules: Vec<KeywordRule>,
        #[serde(default = "default_score")]
        score: f64,
    },
    /// Replays gold entities. `corpus` defaults to the corpus being run.
    OracleCe {
        #[serde(default)]
        corpus: Option<PathBuf>,
        #[serde(default = "one")]
        recall: f64,
        #[serde(default)]
        seed: u64,
        /// Keep exactly the chunks the same settings would drop.
        #[serde(default)]
        complement: bool,
    },
    /// Replays gold relations with a fixed confidence.
    OracleCc {
        #[serde(default)]
        corpus: Option<PathBuf>,
        #[serde(default = "one")]
        confidence: f64,
    },
    Subprocess {
        command: Vec<String>,
    },
}

fn default_score() -> f64 {
    0.9
}

fn one() -> f64 {
    1.0
}

impl EndpointSpec {
    /// Build the endpoint. Oracles without their own corpus replay `gold`.
    pub fn build(&self, gold: Option<&[Document]>) -> Result<Box<dyn Endpoint>, EndpointError> {
        let docs = |path: &Option<PathBuf>| -> Result<Vec<Document>, EndpointError> {
            match (path, gold) {
                (Some(p), _) => load_corpus(p).map_err(|e| EndpointError::Config(e.to_string())),
                (None, Some(g)) => Ok(g.to_vec()),
                (None, None) => Err(EndpointError::Config("oracle endpoint needs a corpus".into())),
            }
        };
        Ok(match self {
            EndpointSpec::Gazetteer { entries, patterns } => Box::new(GazetteerCe::new(entries, patterns)?),
            EndpointSpec::Keyword { rules, score } => Box::new(KeywordCc::new(rules.clone(), *score)?),
            EndpointSpec::OracleCe {
                corpus,
                recall,
                seed,
                complement,
            } => Box::new(OracleCe::degraded(&docs(corpus)?, *recall, *seed, *complement)?),
            EndpointSpec::OracleCc { corpus, confidence } => Box::new(OracleCc::new(&docs(corpus)?, *confidence)?),
            EndpointSpec::Subprocess { command } => Box::new(SubprocessEndpoint::spawn(command)?),
        })
    }
}

/// Endpoints bound to model vertices by vertex id or model function name.
#[derive(Default)]
pub struct EndpointSet {
    bound: HashMap<String, Box<dyn Endpoint>>,
}

impl EndpointSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, endpoint: Box<dyn Endpoint>) {
        self.bound.insert(name.into(), endpoint);
    }

    pub fn with(mut self, name: impl Into<String>, endpoint: impl Endpoint + 'static) -> Self {
        self.bind(name, Box::new(endpoint));
        self
    }

    /// Build every spec of a config map.
    pub fn from_specs(specs: &BTreeMap<String, EndpointSpec>, gold: Option<&[Document]>) -> Result<Self, EndpointError> {
        let mut set = Self::new();
        for (name, spec) in specs {
            set.bind(name.clone(), spec.build(gold)?);
        }
        Ok(set)
    }

    /// Name under which `node` finds its endpoint.
    pub fn binding_for(&self, node: &TaskNode) -> Option<&str> {
        [&node.id, &node.function]
            .into_iter()
            .find_map(|k| self.bound.get_key_value(k.as_str()))
            .map(|(k, _)| k.as_str())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut (dyn Endpoint + 'static)> {
        self.bound.get_mut(name).map(|b| b.as_mut())
    }
}

/// Answer protocol requests from `input` until it closes.
pub fn serve(endpoint: &mut dyn Endpoint, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Hello) => Response::Hello(Hello {
                task: endpoint.task(),
                label_set: endpoint.label_set(),
            }),
            Ok(Request::Infer { task, rows }) if task == endpoint.task() => match endpoint.infer(&rows) {
                Ok(rows) => Response::Rows { rows },
                Err(e) => Response::Error { error: e.to_string() },
            },
            Ok(Request::Infer { task, .. }) => Response::Error {
                error: format!("endpoint serves {} but {} was requested", endpoint.task().as_str(), task.as_str()),
            },
            Err(e) => Response::Error {
                error: format!("bad request: {e}"),
            },
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let r = Request::Infer {
            task: ModelTask::Ce,
            rows: vec![InferRow {
                id: "d".into(),
                text: "t".into(),
                subject: None,
                object: None,
            }],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"infer","task":"ce","rows":[{"id":"d","text":"t"}]}"#
        );
        assert_eq!(serde_json::to_string(&Request::Hello).unwrap(), r#"{"op":"hello"}"#);
        let resp: Response = serde_json::from_str(r#"{"rows":[{"label":"Found","score":0.8}]}"#).unwrap();
        assert!(matches!(resp, Response::Rows { .. }));
        let resp: Response = serde_json::from_str(r#"{"task":"cc","label_set":[]}"#).unwrap();
        assert!(matches!(resp, Response::Hello(_)));
    }

    #[test]
    fn serve_answers_line_by_line() {
        let mut e = GazetteerCe::new(&BTreeMap::from([("Apple".to_string(), "ORG".to_string())]), &BTreeMap::new()).unwrap();
        let input = "{\"op\":\"hello\"}\n{\"op\":\"infer\",\"task\":\"ce\",\"rows\":[{\"id\":\"1\",\"text\":\"I like Apple\"}]}\n{\"op\":\"infer\",\"task\":\"cc\",\"rows\":[]}\nnonsense\n";
        let mut out = Vec::new();
        serve(&mut e, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 4);
        assert!(matches!(&lines[0], Response::Hello(h) if h.task == ModelTask::Ce));
        match &lines[1] {
            Response::Rows { rows } => assert_eq!(
                rows[0],
                InferResult::Chunks {
                    chunks: vec![Chunk::new("Apple", "ORG", 7, 12)]
                }
            ),
            other => panic!("{other:?}"),
        }
        assert!(matches!(&lines[2], Response::Error { .. }));
        assert!(matches!(&lines[3], Response::Error { .. }));
    }
}
