//! Concrete context elements: predicate-value sets that instantiate the
//! ontologies, plus their triple encoding.

mod triples;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{is_identifier, ConceptName, ContextKind, Ontology, OntologyError, RoleName};

pub use triples::{
    from_triples, parse_triples, serialize_triples, to_triples, Triple, TYPE_PREDICATE,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("literal values must be non-empty")]
    EmptyLiteral,
    #[error("triple component `{0}` must be non-empty and free of whitespace and quotes")]
    InvalidTerm(String),
    #[error("subject `{0}` has no rdf:type triple")]
    MissingType(String),
    #[error("subject `{0}` repeats predicate `{1}`")]
    DuplicatePredicate(String, String),
    #[error("subject `{0}` is typed as `{1}`, which is not a context top concept")]
    UnknownKind(String, String),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextValue {
    Literal(String),
    Concept(ConceptName),
}

impl ContextValue {
    pub fn literal(s: impl Into<String>) -> Result<Self, ContextError> {
        let s = s.into();
        if s.trim().is_empty() {
            Err(ContextError::EmptyLiteral)
        } else {
            Ok(ContextValue::Literal(s))
        }
    }

    /// The bare value text, without quoting.
    pub fn text(&self) -> &str {
        match self {
            ContextValue::Literal(s) => s,
            ContextValue::Concept(c) => c.as_str(),
        }
    }
}

impl fmt::Display for ContextValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

/// One context element `c_i` with its predicate set `P(c_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextElement {
    id: String,
    kind: ContextKind,
    predicates: BTreeMap<String, ContextValue>,
}

impl ContextElement {
    pub fn new(id: impl Into<String>, kind: ContextKind) -> Result<Self, ContextError> {
        let id = id.into();
        if !is_identifier(&id) {
            return Err(ContextError::InvalidIdentifier(id));
        }
        Ok(ContextElement {
            id,
            kind,
            predicates: BTreeMap::new(),
        })
    }

    /// Add a predicate. Fails on an invalid name or a repeated key.
    pub fn insert(
        &mut self,
        predicate: impl Into<String>,
        value: ContextValue,
    ) -> Result<(), ContextError> {
        let predicate = predicate.into();
        if !is_identifier(&predicate) {
            return Err(ContextError::InvalidIdentifier(predicate));
        }
        if let ContextValue::Literal(s) = &value {
            if s.trim().is_empty() {
                return Err(ContextError::EmptyLiteral);
            }
        }
        if self.predicates.contains_key(&predicate) {
            return Err(ContextError::DuplicatePredicate(self.id.clone(), predicate));
        }
        self.predicates.insert(predicate, value);
        Ok(())
    }

    pub fn with(mut self, predicate: &str, value: ContextValue) -> Result<Self, ContextError> {
        self.insert(predicate, value)?;
        Ok(self)
    }

    pub fn with_literal(self, predicate: &str, value: &str) -> Result<Self, ContextError> {
        self.with(predicate, ContextValue::literal(value)?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> ContextKind {
        self.kind
    }

    pub fn predicates(&self) -> &BTreeMap<String, ContextValue> {
        &self.predicates
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }
}

/// How a dataset attribute name relates to the ontology vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeAlias {
    /// Stands for an ontology role.
    Role(RoleName),
    /// A recognised attribute with no ontology counterpart.
    Attribute,
}

/// Maps dataset attribute names (`location`, `religion`, ...) onto ontology roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasRegistry {
    entries: BTreeMap<String, AttributeAlias>,
}

impl Default for AliasRegistry {
    fn default() -> Self {
        let mut reg = AliasRegistry {
            entries: BTreeMap::new(),
        };
        for (attr, role) in [
            ("location", "hasLocation"),
            ("time", "hasTime"),
            ("activity", "hasActivity"),
            ("region", "hasRegion"),
            ("ethnicity", "hasEthnicGroup"),
            ("race", "hasEthnicGroup"),
            ("religion", "hasReligion"),
            ("value", "hasValue"),
            ("principle", "hasPrinciple"),
            ("norm", "hasNorm"),
        ] {
            reg.register_role(attr, RoleName::new(role).expect("valid role"));
        }
        for attr in ["age_group", "age", "gender"] {
            reg.register_attribute(attr);
        }
        reg
    }
}

impl AliasRegistry {
    pub fn empty() -> Self {
        AliasRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn register_role(&mut self, attribute: &str, role: RoleName) {
        self.entries
            .insert(attribute.to_string(), AttributeAlias::Role(role));
    }

    pub fn register_attribute(&mut self, attribute: &str) {
        self.entries
            .insert(attribute.to_string(), AttributeAlias::Attribute);
    }

    pub fn get(&self, attribute: &str) -> Option<&AttributeAlias> {
        self.entries.get(attribute)
    }

    /// The ontology role a predicate name stands for: itself when it already
    /// looks like a role, or its registered alias.
    pub fn role_for<'a>(&'a self, predicate: &'a str) -> Option<&'a str> {
        match self.entries.get(predicate) {
            Some(AttributeAlias::Role(r)) => Some(r.as_str()),
            Some(AttributeAlias::Attribute) => None,
            None => Some(predicate),
        }
    }

    /// Name under which a dataset attribute is stored as a predicate.
    pub fn predicate_for<'a>(&'a self, attribute: &'a str) -> &'a str {
        match self.entries.get(attribute) {
            Some(AttributeAlias::Role(r)) => r.as_str(),
            _ => attribute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub element_id: String,
    pub satisfied: bool,
    pub missing_roles: Vec<RoleName>,
    pub unknown_predicates: Vec<String>,
}

/// Check `element` against the definition of `target` using the default alias registry.
pub fn validate_context(
    element: &ContextElement,
    ontology: &Ontology,
    target: &ConceptName,
) -> Result<ValidationReport, ContextError> {
    validate_context_with(element, ontology, target, &AliasRegistry::default())
}

pub fn validate_context_with(
    element: &ContextElement,
    ontology: &Ontology,
    target: &ConceptName,
    aliases: &AliasRegistry,
) -> Result<ValidationReport, ContextError> {
    let required = ontology.required_roles(target)?;
    let present: Vec<&str> = element
        .predicates
        .keys()
        .filter_map(|p| aliases.role_for(p))
        .collect();
    let missing_roles: Vec<RoleName> = required
        .into_iter()
        .map(|(role, _)| role)
        .filter(|role| !present.contains(&role.as_str()))
        .collect();
    let unknown_predicates: Vec<String> = element
        .predicates
        .keys()
        .filter(|p| !ontology.has_role(p) && aliases.get(p).is_none())
        .cloned()
        .collect();
    Ok(ValidationReport {
        element_id: element.id.clone(),
        satisfied: missing_roles.is_empty() && unknown_predicates.is_empty(),
        missing_roles,
        unknown_predicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::builtin_ontology;

    fn concept(s: &str) -> ConceptName {
        ConceptName::new(s).unwrap()
    }

    #[test]
    fn element_rejects_bad_input() {
        assert!(ContextElement::new("", ContextKind::Cultural).is_err());
        assert!(ContextElement::new("1x", ContextKind::Cultural).is_err());
        let e = ContextElement::new("c", ContextKind::Cultural).unwrap();
        assert_eq!(
            e.clone().with_literal("location", "   ").unwrap_err(),
            ContextError::EmptyLiteral
        );
        assert!(e.clone().with_literal("bad name", "x").is_err());
        let e = e.with_literal("location", "US").unwrap();
        assert!(matches!(
            e.with_literal("location", "UK"),
            Err(ContextError::DuplicatePredicate(..))
        ));
    }

    #[test]
    fn complete_situation_is_satisfied() {
        let o = builtin_ontology(ContextKind::Situational);
        let e = ContextElement::new("s1", ContextKind::Situational)
            .unwrap()
            .with_literal("hasLocation", "US")
            .unwrap()
            .with_literal("hasTime", "2023-10-03T00:00Z")
            .unwrap()
            .with("hasActivity", ContextValue::Concept(concept("Reading")))
            .unwrap();
        let report = validate_context(&e, &o, &concept("Situation")).unwrap();
        assert!(report.satisfied);
        assert!(report.missing_roles.is_empty());
    }

    #[test]
    fn partial_situation_lists_missing_roles_in_definition_order() {
        let o = builtin_ontology(ContextKind::Situational);
        let e = ContextElement::new("s2", ContextKind::Situational)
            .unwrap()
            .with_literal("hasLocation", "US")
            .unwrap();
        let report = validate_context(&e, &o, &concept("Situation")).unwrap();
        assert!(!report.satisfied);
        let names: Vec<_> = report.missing_roles.iter().map(|r| r.as_str()).collect();
        assert_eq!(names, ["hasTime", "hasActivity"]);
    }

    #[test]
    fn aliases_satisfy_roles() {
        let o = builtin_ontology(ContextKind::Situational);
        let e = ContextElement::new("s3", ContextKind::Situational)
            .unwrap()
            .with_literal("location", "US")
            .unwrap()
            .with_literal("time", "noon")
            .unwrap()
            .with_literal("activity", "Reading")
            .unwrap();
        assert!(
            validate_context(&e, &o, &concept("Situation"))
                .unwrap()
                .satisfied
        );
    }

    #[test]
    fn undefined_target_has_no_requirements() {
        let o = builtin_ontology(ContextKind::Situational);
        let e = ContextElement::new("e", ContextKind::Situational).unwrap();
        let report = validate_context(&e, &o, &concept("Location")).unwrap();
        assert!(report.satisfied);
    }

    #[test]
    fn unknown_predicates_are_reported() {
        let o = builtin_ontology(ContextKind::Cultural);
        let e = ContextElement::new("e", ContextKind::Cultural)
            .unwrap()
            .with_literal("shoeSize", "44")
            .unwrap();
        let report = validate_context(&e, &o, &concept("Region")).unwrap();
        assert_eq!(report.unknown_predicates, vec!["shoeSize".to_string()]);
        assert!(!report.satisfied);
    }

    #[test]
    fn undeclared_target_is_an_error() {
        let o = builtin_ontology(ContextKind::Cultural);
        let e = ContextElement::new("e", ContextKind::Cultural).unwrap();
        assert!(matches!(
            validate_context(&e, &o, &concept("Situation")),
            Err(ContextError::Ontology(OntologyError::UnknownConcept(_)))
        ));
    }
}
