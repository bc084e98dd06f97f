//! Trained classifier bundle and its self-contained text checkpoint.
//!
//! ```text
//! ctxground-checkpoint 1
//! grounded true
//! lambda 0.5
//! dropout 0.1
//! max_len 128
//! types toxicity<TAB>stereotyping<TAB>offensive_language
//! dims 120 32 64 3 17
//! [vocab]            one token per line
//! [context_labels]   predicate<TAB>value per line
//! [embeddings]       one row per line, space-separated
//! ...                remaining tensors in storage order
//! ```
//!
//! Values are written in shortest round-trip decimal form, so a reload is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::model::{forward, Dims, ModelParams, Tensor};
use super::TrainError;
use crate::corpus::{BiasTypeRegistry, Record};
use crate::encoder::{ContextLabelVocab, Encoder, Vocabulary};
use crate::metrics::{Predictor, Scores};

pub const CHECKPOINT_MAGIC: &str = "ctxground-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub params: ModelParams,
    pub encoder: Encoder,
    pub grounded: bool,
    /// Auxiliary weight the model was trained with.
    pub lambda: f64,
}

impl Predictor for Classifier {
    fn scores(&self, record: &Record) -> Result<Scores, String> {
        let x = self
            .encoder
            .encode_record(record, self.grounded)
            .map_err(|e| e.to_string())?;
        let o = forward(&self.params, &x, false, 0).map_err(|e| e.to_string())?;
        Ok(Scores {
            detect_prob: o.detect_prob,
            type_probs: o.type_probs,
        })
    }
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    /// Error at the most recently consumed line.
    fn err(&self, message: String) -> TrainError {
        TrainError::Checkpoint {
            line: self.pos.max(1),
            message,
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, TrainError> {
        let line = self.lines.get(self.pos).copied();
        self.pos += 1;
        line.ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, TrainError> {
        let line = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => v
                .parse()
                .map_err(|_| self.err(format!("invalid value for `{key}`"))),
            _ => Err(self.err(format!("expected `{key} ...`"))),
        }
    }

    fn section(&mut self, name: &str) -> Result<(), TrainError> {
        if self.next(name)? != format!("[{name}]") {
            return Err(self.err(format!("expected section [{name}]")));
        }
        Ok(())
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

impl Classifier {
    pub fn to_text(&self) -> String {
        let d = self.params.dims;
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "grounded {}", self.grounded);
        let _ = writeln!(out, "lambda {}", self.lambda);
        let _ = writeln!(out, "dropout {}", self.params.dropout);
        let _ = writeln!(out, "max_len {}", self.encoder.max_len);
        let _ = writeln!(out, "types {}", self.encoder.types.categories().join("\t"));
        let _ = writeln!(
            out,
            "dims {} {} {} {} {}",
            d.vocab, d.embed, d.hidden, d.types, d.aux
        );
        out.push_str("[vocab]\n");
        for t in self.encoder.vocab.tokens() {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str("[context_labels]\n");
        out.push_str(&self.encoder.labels.to_tsv());
        for t in Tensor::ALL {
            let _ = writeln!(out, "[{}]", t.name());
            let (rows, cols) = d.shape(t);
            let values = self.params.tensor(t);
            if cols == 0 {
                continue;
            }
            for r in 0..rows {
                out.push_str(&join(&values[r * cols..(r + 1) * cols]));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let mut rd = Lines {
            lines: text.lines().collect(),
            pos: 0,
        };
        let magic = rd.next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(rd.err(format!("expected `{CHECKPOINT_MAGIC}`")));
        }
        let grounded: bool = rd.field("grounded")?;
        let lambda: f64 = rd.field("lambda")?;
        let dropout: f64 = rd.field("dropout")?;
        let max_len: usize = rd.field("max_len")?;
        let types: String = rd.field("types")?;
        let types =
            BiasTypeRegistry::from_categories(types.split('\t').map(String::from).collect());
        let dims: String = rd.field("dims")?;
        let dims: Vec<usize> = dims
            .split(' ')
            .map(|v| v.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| rd.err("invalid dimension".into()))?;
        let [vocab, embed, hidden, n_types, aux] = dims[..] else {
            return Err(rd.err("expected five dimensions".into()));
        };
        let dims = Dims {
            vocab,
            embed,
            hidden,
            types: n_types,
            aux,
        };
        if types.len() != n_types {
            return Err(rd.err("type count disagrees with the type list".into()));
        }

        rd.section("vocab")?;
        let mut tokens = Vec::with_capacity(vocab);
        for _ in 0..vocab {
            tokens.push(rd.next("vocabulary token")?.to_string());
        }
        let vocab_v = Vocabulary::from_tokens(tokens).map_err(|e| rd.err(e.to_string()))?;
        rd.section("context_labels")?;
        let mut label_text = String::new();
        for _ in 0..aux {
            label_text.push_str(rd.next("context label")?);
            label_text.push('\n');
        }
        let labels = ContextLabelVocab::from_tsv(&label_text).map_err(|e| rd.err(e.to_string()))?;

        let mut params = ModelParams::zeros(dims, dropout);
        for t in Tensor::ALL {
            rd.section(t.name())?;
            let (rows, cols) = dims.shape(t);
            if cols == 0 {
                continue;
            }
            let o = dims.offset(t);
            for r in 0..rows {
                let row: Vec<f64> = rd
                    .next(t.name())?
                    .split(' ')
                    .map(|v| v.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| rd.err("invalid number".into()))?;
                if row.len() != cols {
                    return Err(rd.err(format!("expected {cols} values, found {}", row.len())));
                }
                params.values[o + r * cols..o + (r + 1) * cols].copy_from_slice(&row);
            }
        }
        if rd.pos < rd.lines.len() {
            rd.pos += 1;
            return Err(rd.err("trailing content".into()));
        }
        let encoder = Encoder::new(vocab_v, labels, types, max_len)?;
        Ok(Classifier {
            params,
            encoder,
            grounded,
            lambda,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
