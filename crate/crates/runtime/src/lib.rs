//! Execution of flowlines over text corpora.
//!
//! A corpus is cut into slices of rows. Each slice visits the tasks of a
//! flowline in topological order: model tasks call their bound endpoint,
//! operator tasks run the built-in implementation. Triples produced by the
//! triple constructors are collected, exported as N-Triples and scored
//! against gold annotations.

pub mod corpus;
pub mod endpoint;
pub mod eval;
pub mod executor;
pub mod ntriples;
pub mod ontology;
pub mod operators;
pub mod record;

pub use corpus::{load_corpus, parse_corpus, synthetic_corpus, synthetic_ontology};
pub use endpoint::{Endpoint, EndpointSet, EndpointSpec};
pub use eval::{eval_prf, EvalCounts, Prf};
pub use executor::{run_flowline, Clock, RunError, RunOptions, RunOutput, RunReport};
pub use ontology::{merge_ontologies, MergeStep, Ontology};
pub use record::{Chunk, DataSlice, Document, Record, Triple, NO_RELATION};
