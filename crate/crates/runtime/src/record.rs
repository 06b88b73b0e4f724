//! Rows, slices and the corpus documents they are cut from.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use kgflow_core::registry;

/// Relation label of a rejected or unrelated pair.
pub const NO_RELATION: &str = "no_relation";

pub const DEFAULT_SLICE_SIZE: usize = 200;

/// A text span produced by an extractor. Offsets are character positions,
/// `start` inclusive and `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub surface: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn new(surface: impl Into<String>, kind: impl Into<String>, start: usize, end: usize) -> Self {
        Chunk {
            surface: surface.into(),
            kind: kind.into(),
            start,
            end,
        }
    }

    /// Locate the first occurrence of `surface` in `text`.
    pub fn find(text: &str, surface: &str, kind: &str) -> Option<Chunk> {
        let byte = text.find(surface)?;
        let start = text[..byte].chars().count();
        Some(Chunk::new(surface, kind, start, start + surface.chars().count()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityPair {
    pub subject: Chunk,
    pub object: Chunk,
}

/// A (subject, predicate, object) statement over surface forms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Triple {
            subject: s.into(),
            predicate: p.into(),
            object: o.into(),
        }
    }
}

/// One row flowing through a flowline. Columns are added as the row passes
/// tasks; absent columns are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub row_id: String,
    /// Corpus document the row was derived from.
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<Chunk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_pair: Option<EntityPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "meta.score")]
    pub score: Option<f64>,
    /// Per-label scores of a classifier, when it reports more than the winner.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "meta.scores")]
    pub scores: Option<BTreeMap<String, f64>>,
}

impl Record {
    pub fn from_document(doc: &Document) -> Self {
        Record {
            row_id: doc.id.clone(),
            sample_id: doc.id.clone(),
            sample: Some(doc.text.clone()),
            ..Record::default()
        }
    }

    pub fn has(&self, column: &str) -> bool {
        match column {
            registry::SAMPLE => self.sample.is_some(),
            registry::ENTITY | registry::ENTITY_TYPE => self.entity.is_some(),
            registry::ENTITY_PAIR => self.entity_pair.is_some(),
            registry::RELATION_CATEGORY => self.relation_category.is_some(),
            registry::ATTRIBUTE => self.attribute.is_some(),
            registry::ATTRIBUTE_VALUE => self.attribute_value.is_some(),
            registry::TRIPLE => self.triple.is_some(),
            registry::META_SCORE => self.score.is_some(),
            registry::META_SCORES => self.scores.is_some(),
            _ => false,
        }
    }

    /// Canonical names of the columns this row carries.
    pub fn columns(&self) -> BTreeSet<&'static str> {
        registry::COLUMNS.iter().copied().filter(|c| self.has(c)).collect()
    }

    /// Scores per label, falling back to the single reported label.
    pub fn label_scores(&self) -> BTreeMap<String, f64> {
        if let Some(s) = &self.scores {
            return s.clone();
        }
        match (&self.relation_category, self.score) {
            (Some(l), Some(s)) => BTreeMap::from([(l.clone(), s)]),
            (Some(l), None) => BTreeMap::from([(l.clone(), 1.0)]),
            _ => BTreeMap::new(),
        }
    }

    /// Serialized size in bytes, used as the payload of a pipe.
    pub fn wire_size(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(0)
    }
}

/// A micro-batch of rows processed together by every task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSlice {
    pub slice_index: usize,
    pub records: Vec<Record>,
    /// Columns present on at least one row.
    pub projected_columns: BTreeSet<String>,
}

impl DataSlice {
    pub fn new(slice_index: usize, records: Vec<Record>) -> Self {
        let projected_columns = records
            .iter()
            .flat_map(|r| r.columns())
            .map(str::to_string)
            .collect();
        DataSlice {
            slice_index,
            records,
            projected_columns,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn wire_size(&self) -> usize {
        self.records.iter().map(Record::wire_size).sum()
    }
}

/// Gold relation of an annotated document, by surface form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// One corpus line: `{id, text}` plus optional gold annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<Chunk>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<GoldRelation>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            entities: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn gold_triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.relations
            .iter()
            .map(|r| Triple::new(&r.subject, &r.predicate, &r.object))
    }
}

/// Cut a corpus into consecutive slices of at most `slice_size` documents.
pub fn slice_corpus(corpus: &[Document], slice_size: usize) -> Vec<DataSlice> {
    corpus
        .chunks(slice_size.max(1))
        .enumerate()
        .map(|(i, docs)| DataSlice::new(i, docs.iter().map(Record::from_document).collect()))
        .collect()
}
