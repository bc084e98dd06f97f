//! Line-oriented functional syntax:
//!
//! ```text
//! Concept(Situation)
//! Role(hasLocation)
//! SubClassOf(Situation Context)
//! EquivalentTo(Situation And(Some(hasLocation Location) Some(hasTime Time)))
//! ```
//!
//! One declaration or axiom per line; `#` starts a comment. Names may be used
//! before they are declared, but every name must be declared somewhere in the
//! document.

use std::collections::BTreeSet;

use super::{is_identifier, Axiom, ConceptExpr, ConceptName, Ontology, OntologyError, RoleName};

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Open,
    Close,
}

struct Lexer<'a> {
    line_no: usize,
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end_col: usize,
}

impl<'a> Lexer<'a> {
    fn new(line_no: usize, line: &'a str) -> Result<Self, OntologyError> {
        let mut toks = Vec::new();
        let mut chars = line.char_indices().peekable();
        let col_of = |byte: usize| line[..byte].chars().count() + 1;
        while let Some(&(i, ch)) = chars.peek() {
            match ch {
                '#' => break,
                '(' => {
                    toks.push((col_of(i), Tok::Open));
                    chars.next();
                }
                ')' => {
                    toks.push((col_of(i), Tok::Close));
                    chars.next();
                }
                c if c.is_whitespace() => {
                    chars.next();
                }
                c if c.is_ascii_alphanumeric() || c == '_' => {
                    let start = i;
                    let mut end = i;
                    while let Some(&(j, d)) = chars.peek() {
                        if d.is_ascii_alphanumeric() || d == '_' {
                            end = j + d.len_utf8();
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    toks.push((col_of(start), Tok::Ident(&line[start..end])));
                }
                other => {
                    return Err(OntologyError::Parse {
                        line: line_no,
                        column: col_of(i),
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        }
        let end_col = line.split('#').next().unwrap_or("").chars().count() + 1;
        Ok(Lexer {
            line_no,
            toks,
            pos: 0,
            end_col,
        })
    }

    fn err(&self, column: usize, message: impl Into<String>) -> OntologyError {
        OntologyError::Parse {
            line: self.line_no,
            column,
            message: message.into(),
        }
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end_col)
    }

    fn peek(&self) -> Option<&Tok<'a>> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect_open(&mut self) -> Result<(), OntologyError> {
        match self.next() {
            Some((_, Tok::Open)) => Ok(()),
            Some((col, _)) => Err(self.err(col, "expected `(`")),
            None => Err(self.err(self.end_col, "expected `(`")),
        }
    }

    fn expect_close(&mut self) -> Result<(), OntologyError> {
        match self.next() {
            Some((_, Tok::Close)) => Ok(()),
            Some((col, _)) => Err(self.err(col, "expected `)`")),
            None => Err(self.err(self.end_col, "expected `)`")),
        }
    }

    fn ident(&mut self) -> Result<(usize, &'a str), OntologyError> {
        match self.next() {
            Some((col, Tok::Ident(s))) => {
                if is_identifier(s) {
                    Ok((col, s))
                } else {
                    Err(self.err(col, format!("invalid identifier `{s}`")))
                }
            }
            Some((col, _)) => Err(self.err(col, "expected identifier")),
            None => Err(self.err(self.end_col, "expected identifier")),
        }
    }

    fn finish(&mut self) -> Result<(), OntologyError> {
        match self.next() {
            None => Ok(()),
            Some((col, _)) => Err(self.err(col, "trailing input")),
        }
    }
}

/// A name reference together with where it appeared, for undeclared-name errors.
struct Use {
    line: usize,
    column: usize,
    name: String,
    is_role: bool,
}

fn parse_expr(lx: &mut Lexer<'_>, uses: &mut Vec<Use>) -> Result<ConceptExpr, OntologyError> {
    let (col, head) = lx.ident()?;
    if lx.peek() != Some(&Tok::Open) {
        uses.push(Use {
            line: lx.line_no,
            column: col,
            name: head.to_string(),
            is_role: false,
        });
        return Ok(ConceptExpr::Atomic(ConceptName(head.to_string())));
    }
    match head {
        "Some" => {
            lx.expect_open()?;
            let (rc, role) = lx.ident()?;
            let (fc, filler) = lx.ident()?;
            if lx.peek() == Some(&Tok::Open) {
                return Err(lx.err(lx.column(), "existential filler must be a concept name"));
            }
            lx.expect_close()?;
            uses.push(Use {
                line: lx.line_no,
                column: rc,
                name: role.to_string(),
                is_role: true,
            });
            uses.push(Use {
                line: lx.line_no,
                column: fc,
                name: filler.to_string(),
                is_role: false,
            });
            Ok(ConceptExpr::Exists(
                RoleName(role.to_string()),
                ConceptName(filler.to_string()),
            ))
        }
        "And" => {
            lx.expect_open()?;
            let mut parts = Vec::new();
            while lx.peek().is_some() && lx.peek() != Some(&Tok::Close) {
                parts.push(parse_expr(lx, uses)?);
            }
            if parts.len() < 2 {
                return Err(lx.err(col, "And(...) needs at least two operands"));
            }
            lx.expect_close()?;
            Ok(ConceptExpr::and(parts).expect("non-empty"))
        }
        other => Err(lx.err(col, format!("unknown constructor `{other}`"))),
    }
}

/// Parse an ontology document. Errors carry 1-based line and column.
pub fn parse_ontology(text: &str) -> Result<Ontology, OntologyError> {
    let mut concepts = BTreeSet::new();
    let mut roles = BTreeSet::new();
    let mut axioms = Vec::new();
    let mut uses: Vec<Use> = Vec::new();
    let mut defined: Vec<(ConceptName, usize)> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut lx = Lexer::new(line_no, line)?;
        if lx.peek().is_none() {
            continue;
        }
        let (col, keyword) = lx.ident()?;
        lx.expect_open()?;
        match keyword {
            "Concept" => {
                let (_, name) = lx.ident()?;
                concepts.insert(ConceptName(name.to_string()));
            }
            "Role" => {
                let (_, name) = lx.ident()?;
                roles.insert(RoleName(name.to_string()));
            }
            "SubClassOf" => {
                let (sc, sub) = lx.ident()?;
                let (pc, sup) = lx.ident()?;
                for (column, name) in [(sc, sub), (pc, sup)] {
                    uses.push(Use {
                        line: line_no,
                        column,
                        name: name.to_string(),
                        is_role: false,
                    });
                }
                axioms.push(Axiom::Subsumption {
                    sub: ConceptName(sub.to_string()),
                    sup: ConceptName(sup.to_string()),
                });
            }
            "EquivalentTo" => {
                let (nc, name) = lx.ident()?;
                uses.push(Use {
                    line: line_no,
                    column: nc,
                    name: name.to_string(),
                    is_role: false,
                });
                let definition = parse_expr(&mut lx, &mut uses)?;
                let name = ConceptName(name.to_string());
                if let Some((_, first)) = defined.iter().find(|(n, _)| *n == name) {
                    return Err(lx.err(nc, format!("`{name}` already defined on line {first}")));
                }
                defined.push((name.clone(), line_no));
                axioms.push(Axiom::Equivalence { name, definition });
            }
            other => return Err(lx.err(col, format!("unknown keyword `{other}`"))),
        }
        lx.expect_close()?;
        lx.finish()?;
    }

    for u in &uses {
        let declared = if u.is_role {
            roles.iter().any(|r: &RoleName| r.as_str() == u.name)
        } else {
            concepts.iter().any(|c: &ConceptName| c.as_str() == u.name)
        };
        if !declared {
            let what = if u.is_role { "role" } else { "concept" };
            return Err(OntologyError::Parse {
                line: u.line,
                column: u.column,
                message: format!("undeclared {what} `{}`", u.name),
            });
        }
    }

    Ontology::new(concepts, roles, axioms)
}
