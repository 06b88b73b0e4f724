//! JSON-lines corpora and a seeded annotated corpus generator.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ontology::{Attribute, Ontology, Relation};
use crate::record::{Chunk, Document, GoldRelation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
}

/// Parse one `{id, text}` object per non-blank line.
pub fn parse_corpus(text: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let len = doc.text.chars().count();
        if let Some(c) = doc.entities.iter().find(|c| c.start > c.end || c.end > len) {
            return Err(CorpusError::Parse {
                line: i + 1,
                message: format!("entity `{}` offsets {}..{} outside the text", c.surface, c.start, c.end),
            });
        }
        if !ids.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn format_corpus(docs: &[Document]) -> String {
    docs.iter()
        .map(|d| serde_json::to_string(d).expect("documents serialize") + "\n")
        .collect()
}

const PEOPLE: &[&str] = &[
    "Ada Lovelace",
    "Alan Turing",
    "Grace Hopper",
    "Steve Jobs",
    "Linus Torvalds",
    "Marie Curie",
    "Barbara Liskov",
    "Edsger Dijkstra",
    "Katherine Johnson",
    "Donald Knuth",
];
const ORGS: &[&str] = &[
    "Apple",
    "Acme Robotics",
    "Blue Harbor Labs",
    "Northwind",
    "Globex",
    "Initech",
    "Umbrella Works",
    "Vandelay Industries",
];
const PLACES: &[&str] = &["Paris", "Lagos", "Osaka", "Lima", "Oslo", "Cairo", "New York", "Toronto"];

/// The schema the synthetic corpus is annotated against.
pub fn synthetic_ontology() -> Ontology {
    let rel = |n: &str, d: &str, r: &str| Relation {
        name: n.into(),
        domain: d.into(),
        range: r.into(),
    };
    Ontology {
        classes: ["PER", "ORG", "LOC", "DATE"].iter().map(|s| s.to_string()).collect(),
        relations: [
            rel("Found", "PER", "ORG"),
            rel("WorksFor", "PER", "ORG"),
            rel("BasedIn", "ORG", "LOC"),
            rel("BornIn", "PER", "LOC"),
        ]
        .into_iter()
        .collect(),
        attributes: [Attribute {
            name: "FoundedDate".into(),
            domain: "ORG".into(),
            literal_type: "date".into(),
        }]
        .into_iter()
        .collect(),
    }
}

/// `n` template sentences with gold entities and relations, drawn from a
/// seeded generator. One template mentions entities without relating them.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p = *PEOPLE.choose(&mut rng).expect("names");
            let q = loop {
                let q = *PEOPLE.choose(&mut rng).expect("names");
                if q != p {
                    break q;
                }
            };
            let o = *ORGS.choose(&mut rng).expect("names");
            let l = *PLACES.choose(&mut rng).expect("names");
            let year = rng.gen_range(1950..2021).to_string();
            let (text, ents, rels): (String, Vec<(&str, &str)>, Vec<(&str, &str, &str)>) = match rng.gen_range(0..5) {
                0 => (
                    format!("{p} founded {o} in {year}."),
                    vec![(p, "PER"), (o, "ORG"), (year.as_str(), "DATE")],
                    vec![(p, "Found", o), (o, "FoundedDate", year.as_str())],
                ),
                1 => (
                    format!("{p} works for {o}."),
                    vec![(p, "PER"), (o, "ORG")],
                    vec![(p, "WorksFor", o)],
                ),
                2 => (
                    format!("{o} is based in {l}."),
                    vec![(o, "ORG"), (l, "LOC")],
                    vec![(o, "BasedIn", l)],
                ),
                3 => (
                    format!("{p} was born in {l}."),
                    vec![(p, "PER"), (l, "LOC")],
                    vec![(p, "BornIn", l)],
                ),
                _ => (
                    format!("{p} met {q} in {l}."),
                    vec![(p, "PER"), (q, "PER"), (l, "LOC")],
                    vec![],
                ),
            };
            let mut doc = Document::new(format!("s{i:04}"), text.clone());
            doc.entities = ents
                .iter()
                .map(|(s, t)| Chunk::find(&text, s, t).expect("surface occurs in its sentence"))
                .collect();
            doc.relations = rels
                .iter()
                .map(|(s, pr, o)| GoldRelation {
                    subject: s.to_string(),
                    predicate: pr.to_string(),
                    object: o.to_string(),
                })
                .collect();
            doc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_seeded_and_consistent() {
        let a = synthetic_corpus(50, 1);
        assert_eq!(a, synthetic_corpus(50, 1));
        assert_ne!(a, synthetic_corpus(50, 2));
        let onto = synthetic_ontology();
        onto.check().unwrap();
        for d in &a {
            for c in &d.entities {
                let surface: String = d.text.chars().skip(c.start).take(c.end - c.start).collect();
                assert_eq!(surface, c.surface);
                assert!(onto.classes.contains(&c.kind));
            }
            for r in &d.relations {
                assert!(onto.predicates().contains(r.predicate.as_str()));
            }
        }
    }

    #[test]
    fn round_trip_and_errors() {
        let docs = synthetic_corpus(5, 0);
        assert_eq!(parse_corpus(&format_corpus(&docs)).unwrap(), docs);
        assert!(parse_corpus("{\"id\":\"a\",\"text\":\"x\"}\n\n{\"id\":\"b\",\"text\":\"y\"}").is_ok());
        assert!(matches!(
            parse_corpus("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}"),
            Err(CorpusError::DuplicateId(_))
        ));
        assert!(matches!(parse_corpus("{\"id\":1}"), Err(CorpusError::Parse { line: 1, .. })));
        let bad = r#"{"id":"a","text":"ab","entities":[{"surface":"abc","type":"X","start":0,"end":3}]}"#;
        assert!(parse_corpus(bad).is_err());
    }
}
