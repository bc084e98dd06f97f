//! Turns (record, context) pairs into fixed-length token-id sequences with the
//! serialized context triples placed in front of the text.
//!
//! Layout: `[CTX] context… [SEP] sentence… [SEP] hypothesis… [PAD]…`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::{serialize_triples, to_triples, AliasRegistry, ContextElement, ContextValue};
use crate::corpus::{BiasTypeRegistry, Corpus, Record, SensitiveAttribute, UNKNOWN};
use crate::ontology::ContextKind;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CTX: u32 = 2;
pub const SEP: u32 = 3;
pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CTX]", "[SEP]"];
pub const MIN_MAX_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("vocabulary is missing special token {0} at its fixed id")]
    Vocab(String),
    #[error("max_len {0} is below the minimum of 16")]
    MaxLen(usize),
    #[error("context segment of {needed} tokens does not fit in max_len {max_len}")]
    ContextTooLong { needed: usize, max_len: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Lowercase, split on whitespace, keep every punctuation or symbol character
/// as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from an id-ordered token list; the first four entries must be the specials.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncodeError> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(EncodeError::Vocab(s.to_string()));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(EncodeError::Vocab(format!("duplicate token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn specials_only() -> Self {
        Self::from_tokens(SPECIALS.map(String::from).to_vec()).expect("specials")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>id` per line, in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{t}\t{i}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, EncodeError> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let err = |message: &str| EncodeError::Parse {
                line: n + 1,
                message: message.to_string(),
            };
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| err("expected token<TAB>id"))?;
            let id: usize = id.parse().map_err(|_| err("invalid id"))?;
            if id != tokens.len() {
                return Err(err("ids must be dense and in order"));
            }
            tokens.push(tok.to_string());
        }
        Self::from_tokens(tokens)
    }
}

fn context_tokens(element: &ContextElement) -> Vec<String> {
    if element.is_empty() {
        return Vec::new();
    }
    tokenize(&serialize_triples(&to_triples(element)))
}

/// Token ids ordered by descending frequency, then lexically. Text tokens need
/// `min_freq` occurrences; tokens of the serialized context triples are always kept.
pub fn build_vocab(corpus: &Corpus, contexts: &[ContextElement], min_freq: usize) -> Vocabulary {
    let min_freq = min_freq.max(1);
    let mut text_counts: HashMap<String, usize> = HashMap::new();
    for r in &corpus.records {
        for t in tokenize(&r.sentence)
            .into_iter()
            .chain(tokenize(&r.hypothesis))
        {
            *text_counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut ctx_counts: HashMap<String, usize> = HashMap::new();
    for e in contexts {
        for t in tokenize(&serialize_triples(&to_triples(e))) {
            *ctx_counts.entry(t).or_insert(0) += 1;
        }
    }

    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for (t, &c) in &text_counts {
        if c >= min_freq {
            *totals.entry(t.clone()).or_insert(0) += c;
        }
    }
    for (t, &c) in &ctx_counts {
        let entry = totals.entry(t.clone()).or_insert(0);
        *entry += c;
        if let Some(&tc) = text_counts.get(t) {
            if tc < min_freq {
                *entry += tc;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens).expect("tokenizer never yields special tokens")
}

/// Sorted, distinct `(predicate, value)` pairs seen in a context set: the
/// output space of the auxiliary task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextLabelVocab {
    pairs: Vec<(String, String)>,
}

impl ContextLabelVocab {
    pub fn from_contexts<'a>(contexts: impl IntoIterator<Item = &'a ContextElement>) -> Self {
        let set: BTreeSet<(String, String)> = contexts
            .into_iter()
            .flat_map(|e| {
                e.predicates()
                    .iter()
                    .map(|(p, v)| (p.clone(), v.text().to_string()))
            })
            .collect();
        ContextLabelVocab {
            pairs: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn index_of(&self, predicate: &str, value: &str) -> Option<usize> {
        self.pairs
            .binary_search_by(|(p, v)| (p.as_str(), v.as_str()).cmp(&(predicate, value)))
            .ok()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (p, v) in &self.pairs {
            let _ = writeln!(out, "{p}\t{v}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, EncodeError> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (p, v) = line.split_once('\t').ok_or_else(|| EncodeError::Parse {
                line: n + 1,
                message: "expected predicate<TAB>value".into(),
            })?;
            pairs.push((p.to_string(), v.to_string()));
        }
        let sorted = {
            let mut s = pairs.clone();
            s.sort();
            s.dedup();
            s
        };
        if sorted != pairs {
            return Err(EncodeError::Parse {
                line: 0,
                message: "pairs must be sorted and distinct".into(),
            });
        }
        Ok(ContextLabelVocab { pairs })
    }
}

/// Cultural context element for a record's known sensitive attributes, with
/// attribute names routed through the default alias registry.
pub fn derive_context(record: &Record) -> ContextElement {
    derive_context_with(record, &AliasRegistry::default())
}

pub fn derive_context_with(record: &Record, aliases: &AliasRegistry) -> ContextElement {
    let mut predicates: BTreeMap<String, String> = BTreeMap::new();
    for attr in SensitiveAttribute::ALL {
        let value = record.attribute(attr).trim();
        if value.is_empty() || value == UNKNOWN {
            continue;
        }
        predicates.insert(
            aliases.predicate_for(attr.as_str()).to_string(),
            value.to_string(),
        );
    }
    let mut hasher = Sha256::new();
    for (p, v) in &predicates {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
        hasher.update(v.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let id = format!(
        "ctx_{:02x}{:02x}{:02x}{:02x}",
        digest[0], digest[1], digest[2], digest[3]
    );
    let mut element =
        ContextElement::new(id, ContextKind::Cultural).expect("hex ids are identifiers");
    for (p, v) in predicates {
        // alias targets and attribute names are identifiers and values are non-empty
        element
            .insert(p, ContextValue::Literal(v))
            .expect("derived predicates are valid");
    }
    element
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedInput {
    pub ids: Vec<u32>,
    pub aux_target: Vec<bool>,
    pub main_label: bool,
    pub type_label: Option<usize>,
}

impl GroundedInput {
    /// Length of the context segment (tokens strictly between `CTX` and the first `SEP`).
    pub fn context_len(&self) -> usize {
        self.ids.iter().skip(1).take_while(|&&id| id != SEP).count()
    }

    /// `main_label,type_label,id…` with `-1` for a missing type.
    pub fn dump_line(&self) -> String {
        let mut out = format!(
            "{},{}",
            u8::from(self.main_label),
            self.type_label.map(|t| t as i64).unwrap_or(-1)
        );
        for id in &self.ids {
            let _ = write!(out, ",{id}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    pub vocab: Vocabulary,
    pub labels: ContextLabelVocab,
    pub types: BiasTypeRegistry,
    pub max_len: usize,
}

impl Encoder {
    pub fn new(
        vocab: Vocabulary,
        labels: ContextLabelVocab,
        types: BiasTypeRegistry,
        max_len: usize,
    ) -> Result<Self, EncodeError> {
        if max_len < MIN_MAX_LEN {
            return Err(EncodeError::MaxLen(max_len));
        }
        Ok(Encoder {
            vocab,
            labels,
            types,
            max_len,
        })
    }

    fn check_specials(&self) -> Result<(), EncodeError> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if self.vocab.token(i as u32) != Some(*s) {
                return Err(EncodeError::Vocab(s.to_string()));
            }
        }
        Ok(())
    }

    fn layout(&self, record: &Record, context: &[String]) -> Result<Vec<u32>, EncodeError> {
        self.check_specials()?;
        if self.max_len < MIN_MAX_LEN {
            return Err(EncodeError::MaxLen(self.max_len));
        }
        let needed = context.len() + 3;
        if needed > self.max_len {
            return Err(EncodeError::ContextTooLong {
                needed,
                max_len: self.max_len,
            });
        }
        let mut sentence: Vec<u32> = tokenize(&record.sentence)
            .iter()
            .map(|t| self.vocab.id_or_unk(t))
            .collect();
        let mut hypothesis: Vec<u32> = tokenize(&record.hypothesis)
            .iter()
            .map(|t| self.vocab.id_or_unk(t))
            .collect();
        let room = self.max_len - needed;
        if sentence.len() + hypothesis.len() > room {
            let keep_h = room.saturating_sub(sentence.len());
            hypothesis.truncate(keep_h);
            sentence.truncate(room - hypothesis.len());
        }

        let mut ids = Vec::with_capacity(self.max_len);
        ids.push(CTX);
        ids.extend(context.iter().map(|t| self.vocab.id_or_unk(t)));
        ids.push(SEP);
        ids.extend(sentence);
        ids.push(SEP);
        ids.extend(hypothesis);
        ids.resize(self.max_len, PAD);
        Ok(ids)
    }

    fn labels_of(&self, record: &Record) -> (bool, Option<usize>) {
        let main = record.is_biased();
        let ty = if main {
            record
                .bias_type
                .as_deref()
                .and_then(|t| self.types.index_of(t))
        } else {
            None
        };
        (main, ty)
    }

    /// Encode with `element`'s triples prepended.
    pub fn encode(
        &self,
        record: &Record,
        element: &ContextElement,
    ) -> Result<GroundedInput, EncodeError> {
        let ids = self.layout(record, &context_tokens(element))?;
        let mut aux_target = vec![false; self.labels.len()];
        for (p, v) in element.predicates() {
            if let Some(i) = self.labels.index_of(p, v.text()) {
                aux_target[i] = true;
            }
        }
        let (main_label, type_label) = self.labels_of(record);
        Ok(GroundedInput {
            ids,
            aux_target,
            main_label,
            type_label,
        })
    }

    /// Encode with no context at all and an all-zero auxiliary target.
    pub fn encode_ablation(&self, record: &Record) -> Result<GroundedInput, EncodeError> {
        let ids = self.layout(record, &[])?;
        let (main_label, type_label) = self.labels_of(record);
        Ok(GroundedInput {
            ids,
            aux_target: vec![false; self.labels.len()],
            main_label,
            type_label,
        })
    }

    /// Grounded inputs use the record's derived cultural context.
    pub fn encode_record(
        &self,
        record: &Record,
        grounded: bool,
    ) -> Result<GroundedInput, EncodeError> {
        if grounded {
            self.encode(record, &derive_context(record))
        } else {
            self.encode_ablation(record)
        }
    }

    pub fn encode_corpus(
        &self,
        corpus: &Corpus,
        grounded: bool,
    ) -> Result<Vec<GroundedInput>, EncodeError> {
        corpus
            .records
            .iter()
            .map(|r| self.encode_record(r, grounded))
            .collect()
    }
}
