//! Target schemas and the four merging primitives.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub domain: String,
    pub range: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain: String,
    /// Literal type of the value, e.g. `date` or `string`.
    #[serde(rename = "type")]
    pub literal_type: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    #[serde(default)]
    pub classes: BTreeSet<String>,
    #[serde(default)]
    pub relations: BTreeSet<Relation>,
    #[serde(default)]
    pub attributes: BTreeSet<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("relation `{relation}` references undeclared class `{class}`")]
    UndeclaredClass { relation: String, class: String },
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("overlapping concepts: {}", .0.join(", "))]
    Overlap(Vec<String>),
    #[error("cannot map `{from}` onto existing concept `{to}`")]
    MappingCollision { from: String, to: String },
    #[error("source index {0} out of range")]
    BadSource(usize),
    #[error("{0} sources left unmerged")]
    Unmerged(usize),
    #[error("{0}")]
    Json(String),
}

impl Ontology {
    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let o: Ontology = serde_json::from_str(text).map_err(|e| OntologyError::Json(e.to_string()))?;
        o.check()?;
        Ok(o)
    }

    /// Relation and attribute domains and relation ranges must be classes.
    pub fn check(&self) -> Result<(), OntologyError> {
        let ends = self
            .relations
            .iter()
            .flat_map(|r| [(&r.name, &r.domain), (&r.name, &r.range)])
            .chain(self.attributes.iter().map(|a| (&a.name, &a.domain)));
        for (name, class) in ends {
            if !self.classes.contains(class) {
                return Err(OntologyError::UndeclaredClass {
                    relation: name.clone(),
                    class: class.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Every label a relation classifier may legitimately return.
    pub fn predicates(&self) -> BTreeSet<&str> {
        self.relations
            .iter()
            .map(|r| r.name.as_str())
            .chain(self.attributes.iter().map(|a| a.name.as_str()))
            .collect()
    }

    fn concepts(&self) -> BTreeSet<&str> {
        self.classes
            .iter()
            .map(String::as_str)
            .chain(self.predicates())
            .collect()
    }

    fn contains(&self, name: &str) -> bool {
        self.concepts().contains(name)
    }

    /// Drop named classes, relations or attributes. Relations and attributes
    /// attached to a removed class go with it.
    pub fn filter(&self, remove: &[String]) -> Result<Ontology, OntologyError> {
        for name in remove {
            if !self.contains(name) {
                return Err(OntologyError::UnknownConcept(name.clone()));
            }
        }
        let gone = |s: &String| remove.contains(s);
        Ok(Ontology {
            classes: self.classes.iter().filter(|c| !gone(c)).cloned().collect(),
            relations: self
                .relations
                .iter()
                .filter(|r| !gone(&r.name) && !gone(&r.domain) && !gone(&r.range))
                .cloned()
                .collect(),
            attributes: self
                .attributes
                .iter()
                .filter(|a| !gone(&a.name) && !gone(&a.domain))
                .cloned()
                .collect(),
        })
    }

    /// Rename concepts. Renaming onto another existing concept is refused.
    pub fn map(&self, table: &BTreeMap<String, String>) -> Result<Ontology, OntologyError> {
        for (from, to) in table {
            if !self.contains(from) {
                return Err(OntologyError::UnknownConcept(from.clone()));
            }
            if from != to && self.contains(to) && !table.contains_key(to) {
                return Err(OntologyError::MappingCollision {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        let m = |s: &String| table.get(s).cloned().unwrap_or_else(|| s.clone());
        Ok(Ontology {
            classes: self.classes.iter().map(m).collect(),
            relations: self
                .relations
                .iter()
                .map(|r| Relation {
                    name: m(&r.name),
                    domain: m(&r.domain),
                    range: m(&r.range),
                })
                .collect(),
            attributes: self
                .attributes
                .iter()
                .map(|a| Attribute {
                    name: m(&a.name),
                    domain: m(&a.domain),
                    literal_type: a.literal_type.clone(),
                })
                .collect(),
        })
    }

    fn union(&self, other: &Ontology) -> Ontology {
        Ontology {
            classes: self.classes.union(&other.classes).cloned().collect(),
            relations: self.relations.union(&other.relations).cloned().collect(),
            attributes: self.attributes.union(&other.attributes).cloned().collect(),
        }
    }

    fn overlap(&self, other: &Ontology) -> Overlap {
        let common = |a: BTreeSet<&str>, b: BTreeSet<&str>| -> Vec<String> {
            a.intersection(&b).map(|s| s.to_string()).collect()
        };
        Overlap {
            classes: common(
                self.classes.iter().map(String::as_str).collect(),
                other.classes.iter().map(String::as_str).collect(),
            ),
            relations: common(
                self.relations.iter().map(|r| r.name.as_str()).collect(),
                other.relations.iter().map(|r| r.name.as_str()).collect(),
            ),
            attributes: common(
                self.attributes.iter().map(|a| a.name.as_str()).collect(),
                other.attributes.iter().map(|a| a.name.as_str()).collect(),
            ),
        }
    }
}

/// Concepts present in more than one source of an ensemble step. Each needs
/// an ensemble operator in the flowline.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub classes: Vec<String>,
    pub relations: Vec<String>,
    pub attributes: Vec<String>,
}

impl Overlap {
    pub fn is_empty(&self) -> bool {
        self.classes.is_empty() && self.relations.is_empty() && self.attributes.is_empty()
    }

    fn all(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .classes
            .iter()
            .chain(&self.relations)
            .chain(&self.attributes)
            .cloned()
            .collect();
        v.sort();
        v.dedup();
        v
    }

    fn extend(&mut self, other: Overlap) {
        for (dst, src) in [
            (&mut self.classes, other.classes),
            (&mut self.relations, other.relations),
            (&mut self.attributes, other.attributes),
        ] {
            dst.extend(src);
            dst.sort();
            dst.dedup();
        }
    }
}

/// One step of a merge plan. `source: None` applies to every source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum MergeStep {
    Filter {
        #[serde(default)]
        source: Option<usize>,
        remove: Vec<String>,
    },
    Mapping {
        #[serde(default)]
        source: Option<usize>,
        table: BTreeMap<String, String>,
    },
    /// Union of disjoint sources.
    Merging,
    /// Union of possibly overlapping sources; overlaps are reported.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeOutcome {
    pub ontology: Ontology,
    pub overlap: Overlap,
}

/// Apply `plan` to `sources` in order. Merging and ensemble steps collapse
/// all current sources into one; the plan must end with a single ontology.
pub fn merge_ontologies(sources: &[Ontology], plan: &[MergeStep]) -> Result<MergeOutcome, OntologyError> {
    let mut current: Vec<Ontology> = sources.to_vec();
    let mut overlap = Overlap::default();
    let targets = |source: &Option<usize>, n: usize| -> Result<Vec<usize>, OntologyError> {
        match source {
            Some(i) if *i >= n => Err(OntologyError::BadSource(*i)),
            Some(i) => Ok(vec![*i]),
            None => Ok((0..n).collect()),
        }
    };
    for step in plan {
        match step {
            MergeStep::Filter { source, remove } => {
                for i in targets(source, current.len())? {
                    current[i] = current[i].filter(remove)?;
                }
            }
            MergeStep::Mapping { source, table } => {
                for i in targets(source, current.len())? {
                    current[i] = current[i].map(table)?;
                }
            }
            MergeStep::Merging | MergeStep::Ensemble => {
                let mut acc = Ontology::default();
                for o in &current {
                    let common = acc.overlap(o);
                    if !common.is_empty() {
                        if *step == MergeStep::Merging {
                            return Err(OntologyError::Overlap(common.all()));
                        }
                        overlap.extend(common);
                    }
                    acc = acc.union(o);
                }
                current = vec![acc];
            }
        }
    }
    match current.len() {
        1 => {
            let ontology = current.pop().expect("one source");
            ontology.check()?;
            Ok(MergeOutcome { ontology, overlap })
        }
        0 => Ok(MergeOutcome {
            ontology: Ontology::default(),
            overlap,
        }),
        n => Err(OntologyError::Unmerged(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn onto(classes: &[&str], relations: &[(&str, &str, &str)]) -> Ontology {
        Ontology {
            classes: classes.iter().map(|c| c.to_string()).collect(),
            relations: relations
                .iter()
                .map(|(n, d, r)| Relation {
                    name: n.to_string(),
                    domain: d.to_string(),
                    range: r.to_string(),
                })
                .collect(),
            attributes: BTreeSet::new(),
        }
    }

    #[test]
    fn filter_prunes() {
        let o = onto(&["A", "F"], &[("r", "A", "F")]);
        let out = merge_ontologies(
            &[o],
            &[MergeStep::Filter {
                source: None,
                remove: vec!["F".into()],
            }],
        )
        .unwrap();
        assert_eq!(out.ontology, onto(&["A"], &[]));
    }

    #[test]
    fn mapping_renames() {
        let o = onto(&["PER", "ORG"], &[("Found", "PER", "ORG")]);
        let table = BTreeMap::from([("PER".to_string(), "Person".to_string())]);
        let m = o.map(&table).unwrap();
        assert!(m.classes.contains("Person") && !m.classes.contains("PER"));
        assert_eq!(m.relation("Found").unwrap().domain, "Person");
        let clash = BTreeMap::from([("PER".to_string(), "ORG".to_string())]);
        assert!(matches!(o.map(&clash), Err(OntologyError::MappingCollision { .. })));
    }

    #[test]
    fn merging_requires_disjoint_sources() {
        let a = onto(&["PER", "ORG"], &[("Found", "PER", "ORG")]);
        let b = onto(&["LOC"], &[]);
        let out = merge_ontologies(&[a.clone(), b], &[MergeStep::Merging]).unwrap();
        assert_eq!(out.ontology.classes.len(), 3);
        let err = merge_ontologies(&[a.clone(), a], &[MergeStep::Merging]).unwrap_err();
        assert_eq!(err, OntologyError::Overlap(vec!["Found".into(), "ORG".into(), "PER".into()]));
    }

    #[test]
    fn ensemble_reports_overlap() {
        let a = onto(&["PER", "ORG"], &[("Found", "PER", "ORG")]);
        let b = onto(&["PER", "ORG", "LOC"], &[("Found", "PER", "ORG"), ("BasedIn", "ORG", "LOC")]);
        let out = merge_ontologies(&[a, b], &[MergeStep::Ensemble]).unwrap();
        assert_eq!(out.overlap.relations, ["Found"]);
        assert_eq!(out.ontology.relations.len(), 2);
    }

    #[test]
    fn unmerged_sources_are_an_error() {
        let a = onto(&["A"], &[]);
        assert_eq!(
            merge_ontologies(&[a.clone(), a], &[]).unwrap_err(),
            OntologyError::Unmerged(2)
        );
    }
}
