//! N-Triples-flavoured plain text encoding of context elements.
//!
//! Each line is `<subject> <predicate> <object> .` where literal objects are
//! double-quoted (with `\"`, `\\`, `\n`, `\r`, `\t` escapes) and concept
//! references are bare.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ContextElement, ContextError, ContextValue};
use crate::ontology::{ConceptName, ContextKind};

pub const TYPE_PREDICATE: &str = "rdf:type";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    subject: String,
    predicate: String,
    object: ContextValue,
}

fn valid_term(s: &str) -> bool {
    !s.is_empty() && s != "." && !s.chars().any(|c| c.is_whitespace() || c == '"')
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: ContextValue,
    ) -> Result<Self, ContextError> {
        let subject = subject.into();
        let predicate = predicate.into();
        for term in [&subject, &predicate] {
            if !valid_term(term) {
                return Err(ContextError::InvalidTerm(term.clone()));
            }
        }
        if let ContextValue::Literal(s) = &object {
            if s.trim().is_empty() {
                return Err(ContextError::EmptyLiteral);
            }
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn object(&self) -> &ContextValue {
        &self.object
    }
}

/// The typing triple followed by one triple per predicate, sorted by predicate name.
pub fn to_triples(element: &ContextElement) -> Vec<Triple> {
    let top = ConceptName::new(element.kind().top_concept()).expect("top concepts are identifiers");
    let mut out = Vec::with_capacity(element.predicates().len() + 1);
    out.push(Triple {
        subject: element.id().to_string(),
        predicate: TYPE_PREDICATE.to_string(),
        object: ContextValue::Concept(top),
    });
    for (predicate, value) in element.predicates() {
        out.push(Triple {
            subject: element.id().to_string(),
            predicate: predicate.clone(),
            object: value.clone(),
        });
    }
    out
}

/// Group triples back into elements, in order of each subject's first appearance.
pub fn from_triples(triples: &[Triple]) -> Result<Vec<ContextElement>, ContextError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in triples {
        let group = groups.entry(t.subject.as_str()).or_default();
        if group.is_empty() {
            order.push(t.subject.as_str());
        }
        group.push(t);
    }

    let mut elements = Vec::with_capacity(order.len());
    for subject in order {
        let group = &groups[subject];
        let mut typing = group.iter().filter(|t| t.predicate == TYPE_PREDICATE);
        let type_triple = typing
            .next()
            .ok_or_else(|| ContextError::MissingType(subject.to_string()))?;
        if typing.next().is_some() {
            return Err(ContextError::DuplicatePredicate(
                subject.to_string(),
                TYPE_PREDICATE.to_string(),
            ));
        }
        let kind = match &type_triple.object {
            ContextValue::Concept(c) => ContextKind::from_top_concept(c.as_str()),
            ContextValue::Literal(_) => None,
        }
        .ok_or_else(|| {
            ContextError::UnknownKind(subject.to_string(), type_triple.object.text().to_string())
        })?;
        let mut element = ContextElement::new(subject, kind)?;
        for t in group.iter().filter(|t| t.predicate != TYPE_PREDICATE) {
            element.insert(t.predicate.clone(), t.object.clone())?;
        }
        elements.push(element);
    }
    Ok(elements)
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
}

pub fn serialize_triples(triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t.subject);
        out.push(' ');
        out.push_str(&t.predicate);
        out.push(' ');
        match &t.object {
            ContextValue::Literal(s) => {
                out.push('"');
                escape_into(&mut out, s);
                out.push('"');
            }
            ContextValue::Concept(c) => out.push_str(c.as_str()),
        }
        out.push_str(" .\n");
    }
    out
}

struct LineScanner {
    line: usize,
    chars: Vec<char>,
    pos: usize,
}

impl LineScanner {
    fn new(line: usize, src: &str) -> Self {
        LineScanner {
            line,
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> ContextError {
        ContextError::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    /// A whitespace-delimited bare token.
    fn bare(&mut self, what: &str) -> Result<(usize, String), ContextError> {
        self.skip_ws();
        let start = self.pos;
        if self.at_end() {
            return Err(self.err(self.col(), format!("expected {what}")));
        }
        while self.pos < self.chars.len() && !self.chars[self.pos].is_whitespace() {
            if self.chars[self.pos] == '"' {
                return Err(self.err(self.col(), format!("unexpected quote in {what}")));
            }
            self.pos += 1;
        }
        Ok((start + 1, self.chars[start..self.pos].iter().collect()))
    }

    fn quoted(&mut self) -> Result<String, ContextError> {
        let open = self.col();
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.chars.get(self.pos) {
                None => return Err(self.err(open, "unterminated string literal")),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    let esc = self.chars.get(self.pos + 1).copied();
                    let c = match esc {
                        Some('"') => '"',
                        Some('\\') => '\\',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('t') => '\t',
                        _ => return Err(self.err(self.col(), "invalid escape sequence")),
                    };
                    out.push(c);
                    self.pos += 2;
                }
                Some(&c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

/// Parse the text produced by [`serialize_triples`]. Blank lines and lines
/// starting with `#` are skipped; tokens may be separated by any whitespace.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>, ContextError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut sc = LineScanner::new(idx + 1, line);
        let (scol, subject) = sc.bare("subject")?;
        let (pcol, predicate) = sc.bare("predicate")?;
        sc.skip_ws();
        if sc.at_end() {
            return Err(sc.err(sc.col(), "expected object"));
        }
        let ocol = sc.col();
        let object = if sc.chars[sc.pos] == '"' {
            let s = sc.quoted()?;
            if s.trim().is_empty() {
                return Err(sc.err(ocol, "empty literal"));
            }
            ContextValue::Literal(s)
        } else {
            let (_, tok) = sc.bare("object")?;
            if tok == "." {
                return Err(sc.err(ocol, "expected object"));
            }
            ContextValue::Concept(
                ConceptName::new(tok.as_str())
                    .map_err(|_| sc.err(ocol, format!("invalid concept reference `{tok}`")))?,
            )
        };
        sc.skip_ws();
        let dot_col = sc.col();
        match sc.bare("`.`") {
            Ok((_, tok)) if tok == "." => {}
            Ok(_) => return Err(sc.err(dot_col, "expected `.`")),
            Err(_) => return Err(sc.err(dot_col, "missing final `.`")),
        }
        sc.skip_ws();
        if !sc.at_end() {
            return Err(sc.err(sc.col(), "trailing input after `.`"));
        }
        for (col, term) in [(scol, &subject), (pcol, &predicate)] {
            if term == "." {
                return Err(sc.err(col, "missing term"));
            }
        }
        out.push(Triple {
            subject,
            predicate,
            object,
        });
    }
    Ok(out)
}
