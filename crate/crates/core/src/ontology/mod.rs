//! A small description-logic knowledge base: atomic concepts, conjunctions and
//! single-level existential restrictions, with told-edge subsumption closure.

mod builtin;
mod syntax;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{builtin_ontology, builtin_source};
pub use syntax::parse_ontology;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OntologyError {
    #[error("invalid identifier `{0}`: expected [A-Za-z][A-Za-z0-9_]*")]
    InvalidIdentifier(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("undeclared concept `{0}` referenced by axiom `{1}`")]
    UndeclaredConcept(String, String),
    #[error("undeclared role `{0}` referenced by axiom `{1}`")]
    UndeclaredRole(String, String),
    #[error("concept `{0}` has more than one equivalence definition")]
    DuplicateDefinition(String),
    #[error("subsumption cycle through `{0}`")]
    Cycle(String),
    #[error("conflicting definitions for `{0}`: `{1}` vs `{2}`")]
    Conflict(String, String, String),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

macro_rules! identifier_newtype {
    ($name:ident, $what:literal) => {
        #[doc = concat!("A validated ", $what, " identifier (case-sensitive ASCII).")]
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Result<Self, OntologyError> {
                let name = name.into();
                if is_identifier(&name) {
                    Ok(Self(name))
                } else {
                    Err(OntologyError::InvalidIdentifier(name))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = OntologyError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = OntologyError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(n: $name) -> String {
                n.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

identifier_newtype!(ConceptName, "concept");
identifier_newtype!(RoleName, "role");

/// The three context families, each rooted at its own top concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Situational,
    Cultural,
    Ethical,
}

impl ContextKind {
    pub const ALL: [ContextKind; 3] = [
        ContextKind::Situational,
        ContextKind::Cultural,
        ContextKind::Ethical,
    ];

    /// Name of the concept an element of this kind is typed as.
    pub fn top_concept(self) -> &'static str {
        match self {
            ContextKind::Situational => "Situation",
            ContextKind::Cultural => "Culture",
            ContextKind::Ethical => "EthicalContext",
        }
    }

    pub fn from_top_concept(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.top_concept() == name)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Situational => "situational",
            ContextKind::Cultural => "cultural",
            ContextKind::Ethical => "ethical",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "situational" => Ok(ContextKind::Situational),
            "cultural" => Ok(ContextKind::Cultural),
            "ethical" => Ok(ContextKind::Ethical),
            other => Err(format!(
                "unknown context kind `{other}` (expected situational, cultural or ethical)"
            )),
        }
    }
}

/// Right-hand side of a definition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConceptExpr {
    Atomic(ConceptName),
    /// Always flat, de-duplicated and of length >= 2; build with [`ConceptExpr::and`].
    Conjunction(Vec<ConceptExpr>),
    Exists(RoleName, ConceptName),
}

impl ConceptExpr {
    pub fn atomic(name: ConceptName) -> Self {
        ConceptExpr::Atomic(name)
    }

    pub fn some(role: RoleName, filler: ConceptName) -> Self {
        ConceptExpr::Exists(role, filler)
    }

    /// Conjunction of `parts`, flattening nested conjunctions and dropping
    /// repeated conjuncts (first occurrence wins). A single surviving conjunct is
    /// returned unwrapped; `None` when `parts` is empty.
    pub fn and(parts: impl IntoIterator<Item = ConceptExpr>) -> Option<Self> {
        let mut flat: Vec<ConceptExpr> = Vec::new();
        let mut stack: Vec<ConceptExpr> = parts.into_iter().collect();
        stack.reverse();
        while let Some(part) = stack.pop() {
            match part {
                ConceptExpr::Conjunction(inner) => stack.extend(inner.into_iter().rev()),
                other => {
                    if !flat.contains(&other) {
                        flat.push(other);
                    }
                }
            }
        }
        match flat.len() {
            0 => None,
            1 => flat.pop(),
            _ => Some(ConceptExpr::Conjunction(flat)),
        }
    }

    /// The top-level conjuncts (a non-conjunction is its own single conjunct).
    pub fn conjuncts(&self) -> &[ConceptExpr] {
        match self {
            ConceptExpr::Conjunction(parts) => parts,
            other => std::slice::from_ref(other),
        }
    }

    fn collect_names<'a>(
        &'a self,
        concepts: &mut Vec<&'a ConceptName>,
        roles: &mut Vec<&'a RoleName>,
    ) {
        match self {
            ConceptExpr::Atomic(c) => concepts.push(c),
            ConceptExpr::Conjunction(parts) => {
                for p in parts {
                    p.collect_names(concepts, roles);
                }
            }
            ConceptExpr::Exists(r, c) => {
                roles.push(r);
                concepts.push(c);
            }
        }
    }
}

impl fmt::Display for ConceptExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConceptExpr::Atomic(c) => write!(f, "{c}"),
            ConceptExpr::Exists(r, c) => write!(f, "Some({r} {c})"),
            ConceptExpr::Conjunction(parts) => {
                f.write_str("And(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Axiom {
    /// `sub ⊑ sup`
    Subsumption { sub: ConceptName, sup: ConceptName },
    /// `name ≡ definition`
    Equivalence {
        name: ConceptName,
        definition: ConceptExpr,
    },
}

impl Axiom {
    pub fn subsumption(sub: ConceptName, sup: ConceptName) -> Self {
        Axiom::Subsumption { sub, sup }
    }

    pub fn equivalence(name: ConceptName, definition: ConceptExpr) -> Self {
        Axiom::Equivalence { name, definition }
    }

    pub fn lhs(&self) -> &ConceptName {
        match self {
            Axiom::Subsumption { sub, .. } => sub,
            Axiom::Equivalence { name, .. } => name,
        }
    }

    /// Told edges `lhs -> C` this axiom contributes to the subsumption graph.
    fn told_edges(&self) -> Vec<(&ConceptName, &ConceptName)> {
        match self {
            Axiom::Subsumption { sub, sup } => vec![(sub, sup)],
            Axiom::Equivalence { name, definition } => definition
                .conjuncts()
                .iter()
                .filter_map(|c| match c {
                    ConceptExpr::Atomic(a) => Some((name, a)),
                    _ => None,
                })
                .collect(),
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axiom::Subsumption { sub, sup } => write!(f, "SubClassOf({sub} {sup})"),
            Axiom::Equivalence { name, definition } => {
                write!(f, "EquivalentTo({name} {definition})")
            }
        }
    }
}

/// An immutable, validated ontology.
///
/// Axioms are kept de-duplicated and sorted by their functional-syntax
/// rendering, so two ontologies with the same content compare equal and
/// serialize identically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ontology {
    concepts: BTreeSet<ConceptName>,
    roles: BTreeSet<RoleName>,
    axioms: Vec<Axiom>,
}

impl Ontology {
    pub fn new(
        concepts: impl IntoIterator<Item = ConceptName>,
        roles: impl IntoIterator<Item = RoleName>,
        axioms: impl IntoIterator<Item = Axiom>,
    ) -> Result<Self, OntologyError> {
        let concepts: BTreeSet<_> = concepts.into_iter().collect();
        let roles: BTreeSet<_> = roles.into_iter().collect();
        let mut keyed: Vec<(String, Axiom)> =
            axioms.into_iter().map(|a| (a.to_string(), a)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        let axioms: Vec<Axiom> = keyed.into_iter().map(|(_, a)| a).collect();

        let mut defined: BTreeSet<&ConceptName> = BTreeSet::new();
        for axiom in &axioms {
            let mut cs = Vec::new();
            let mut rs = Vec::new();
            match axiom {
                Axiom::Subsumption { sub, sup } => cs.extend([sub, sup]),
                Axiom::Equivalence { name, definition } => {
                    if !defined.insert(name) {
                        return Err(OntologyError::DuplicateDefinition(name.to_string()));
                    }
                    cs.push(name);
                    definition.collect_names(&mut cs, &mut rs);
                }
            }
            if let Some(c) = cs.into_iter().find(|c| !concepts.contains(*c)) {
                return Err(OntologyError::UndeclaredConcept(
                    c.to_string(),
                    axiom.to_string(),
                ));
            }
            if let Some(r) = rs.into_iter().find(|r| !roles.contains(*r)) {
                return Err(OntologyError::UndeclaredRole(
                    r.to_string(),
                    axiom.to_string(),
                ));
            }
        }

        let ontology = Ontology {
            concepts,
            roles,
            axioms,
        };
        ontology.check_acyclic()?;
        Ok(ontology)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn concepts(&self) -> &BTreeSet<ConceptName> {
        &self.concepts
    }

    pub fn roles(&self) -> &BTreeSet<RoleName> {
        &self.roles
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    pub fn has_concept(&self, name: &str) -> bool {
        self.concepts.iter().any(|c| c.as_str() == name)
    }

    pub fn has_role(&self, name: &str) -> bool {
        self.roles.iter().any(|r| r.as_str() == name)
    }

    pub fn definition(&self, name: &ConceptName) -> Option<&ConceptExpr> {
        self.axioms.iter().find_map(|a| match a {
            Axiom::Equivalence {
                name: n,
                definition,
            } if n == name => Some(definition),
            _ => None,
        })
    }

    fn adjacency(&self) -> BTreeMap<&ConceptName, Vec<&ConceptName>> {
        let mut adj: BTreeMap<&ConceptName, Vec<&ConceptName>> = BTreeMap::new();
        for axiom in &self.axioms {
            for (from, to) in axiom.told_edges() {
                adj.entry(from).or_default().push(to);
            }
        }
        adj
    }

    fn check_acyclic(&self) -> Result<(), OntologyError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let adj = self.adjacency();
        let mut marks: BTreeMap<&ConceptName, Mark> = BTreeMap::new();
        for start in adj.keys() {
            if marks.contains_key(start) {
                continue;
            }
            // iterative DFS: (node, next child index)
            let mut stack = vec![(*start, 0usize)];
            marks.insert(start, Mark::Open);
            while let Some((node, idx)) = stack.pop() {
                let children = adj.get(node).map(Vec::as_slice).unwrap_or(&[]);
                if let Some(&child) = children.get(idx) {
                    stack.push((node, idx + 1));
                    match marks.get(child) {
                        Some(Mark::Open) => return Err(OntologyError::Cycle(child.to_string())),
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(child, Mark::Open);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    marks.insert(node, Mark::Done);
                }
            }
        }
        Ok(())
    }

    fn require(&self, name: &ConceptName) -> Result<(), OntologyError> {
        if self.concepts.contains(name) {
            Ok(())
        } else {
            Err(OntologyError::UnknownConcept(name.to_string()))
        }
    }

    fn reachable_from<'a>(
        &'a self,
        adj: &BTreeMap<&'a ConceptName, Vec<&'a ConceptName>>,
        start: &'a ConceptName,
    ) -> BTreeSet<&'a ConceptName> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &next in adj.get(node).into_iter().flatten() {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Whether `sub ⊑ sup` follows from the told edges (reflexive-transitive).
    pub fn is_subsumed(&self, sub: &ConceptName, sup: &ConceptName) -> Result<bool, OntologyError> {
        self.require(sub)?;
        self.require(sup)?;
        if sub == sup {
            return Ok(true);
        }
        let adj = self.adjacency();
        Ok(self.reachable_from(&adj, sub).contains(sup))
    }

    /// Every strict subsumption pair `(A, B)` with `A ≠ B`, sorted.
    pub fn classify(&self) -> Vec<(ConceptName, ConceptName)> {
        let adj = self.adjacency();
        let mut pairs = Vec::new();
        for c in &self.concepts {
            for sup in self.reachable_from(&adj, c) {
                if sup != c {
                    pairs.push((c.clone(), sup.clone()));
                }
            }
        }
        pairs.sort();
        pairs
    }

    /// The `(role, filler)` pairs of `name`'s existential conjuncts, in
    /// definition order. Empty when `name` has no definition.
    pub fn required_roles(
        &self,
        name: &ConceptName,
    ) -> Result<Vec<(RoleName, ConceptName)>, OntologyError> {
        self.require(name)?;
        Ok(self
            .definition(name)
            .map(|def| {
                def.conjuncts()
                    .iter()
                    .filter_map(|c| match c {
                        ConceptExpr::Exists(r, f) => Some((r.clone(), f.clone())),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default())
    }

    /// Canonical line-oriented functional syntax.
    pub fn to_functional_syntax(&self) -> String {
        let mut out = String::new();
        for c in &self.concepts {
            out.push_str(&format!("Concept({c})\n"));
        }
        for r in &self.roles {
            out.push_str(&format!("Role({r})\n"));
        }
        for a in &self.axioms {
            out.push_str(&format!("{a}\n"));
        }
        out
    }
}

/// Union of two ontologies. Fails when both define the same concept differently
/// or when the union introduces a subsumption cycle.
pub fn merge(a: &Ontology, b: &Ontology) -> Result<Ontology, OntologyError> {
    for axiom in &a.axioms {
        if let Axiom::Equivalence { name, definition } = axiom {
            if let Some(other) = b.definition(name) {
                if other != definition {
                    return Err(OntologyError::Conflict(
                        name.to_string(),
                        definition.to_string(),
                        other.to_string(),
                    ));
                }
            }
        }
    }
    Ontology::new(
        a.concepts.iter().chain(&b.concepts).cloned(),
        a.roles.iter().chain(&b.roles).cloned(),
        a.axioms.iter().chain(&b.axioms).cloned(),
    )
}

/// Merge of all three built-in ontologies.
pub fn builtin_all() -> Ontology {
    ContextKind::ALL
        .into_iter()
        .map(builtin_ontology)
        .try_fold(Ontology::empty(), |acc, o| merge(&acc, &o))
        .expect("built-in ontologies are mutually consistent")
}
