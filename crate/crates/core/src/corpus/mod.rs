//! Bias-annotated sentence/hypothesis pairs: CSV ingestion, cleaning and
//! stratified splitting.

pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{synthetic_corpus, SyntheticSpec};

pub const UNKNOWN: &str = "unknown";
pub const NO_BIAS: &str = "none";

pub const REQUIRED_COLUMNS: [&str; 8] = [
    "sentence",
    "hypothesis",
    "bias_label",
    "bias_type",
    "gender",
    "race",
    "religion",
    "age",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing required column `{0}`")]
    Schema(String),
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("corpus has {0} records; at least 10 are needed to split")]
    TooSmall(usize),
    #[error("invalid split specification: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitiveAttribute {
    Gender,
    Race,
    Religion,
    Age,
}

impl SensitiveAttribute {
    pub const ALL: [SensitiveAttribute; 4] = [
        SensitiveAttribute::Gender,
        SensitiveAttribute::Race,
        SensitiveAttribute::Religion,
        SensitiveAttribute::Age,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SensitiveAttribute::Gender => "gender",
            SensitiveAttribute::Race => "race",
            SensitiveAttribute::Religion => "religion",
            SensitiveAttribute::Age => "age",
        }
    }
}

impl fmt::Display for SensitiveAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensitiveAttribute {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown sensitive attribute `{s}` (expected gender, race, religion or age)"
                )
            })
    }
}

/// Closed set of bias categories a positive record may carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasTypeRegistry {
    categories: Vec<String>,
}

impl Default for BiasTypeRegistry {
    fn default() -> Self {
        BiasTypeRegistry {
            categories: ["toxicity", "stereotyping", "offensive_language"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl BiasTypeRegistry {
    /// The default categories followed by `extras` (duplicates and `none` ignored).
    pub fn with_extras<S: AsRef<str>>(extras: &[S]) -> Self {
        let mut reg = Self::default();
        for e in extras {
            let e = e.as_ref().trim();
            if !e.is_empty() && e != NO_BIAS && !reg.categories.iter().any(|c| c == e) {
                reg.categories.push(e.to_string());
            }
        }
        reg
    }

    pub fn from_categories(categories: Vec<String>) -> Self {
        BiasTypeRegistry { categories }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub sentence: String,
    pub hypothesis: String,
    /// `None` when the source row left the label blank; [`preprocess`] drops those.
    pub bias_label: Option<bool>,
    /// `None` means no bias.
    pub bias_type: Option<String>,
    pub attributes: BTreeMap<SensitiveAttribute, String>,
}

impl Record {
    pub fn new(sentence: &str, hypothesis: &str, bias_type: Option<&str>) -> Self {
        Record {
            sentence: sentence.to_string(),
            hypothesis: hypothesis.to_string(),
            bias_label: Some(bias_type.is_some()),
            bias_type: bias_type.map(String::from),
            attributes: SensitiveAttribute::ALL
                .into_iter()
                .map(|a| (a, UNKNOWN.to_string()))
                .collect(),
        }
    }

    pub fn with_attribute(mut self, attribute: SensitiveAttribute, value: &str) -> Self {
        self.attributes.insert(attribute, value.to_string());
        self
    }

    pub fn is_biased(&self) -> bool {
        self.bias_label == Some(true)
    }

    pub fn attribute(&self, attribute: SensitiveAttribute) -> &str {
        self.attributes
            .get(&attribute)
            .map(String::as_str)
            .unwrap_or(UNKNOWN)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<Record>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn new(source: impl Into<String>, records: Vec<Record>) -> Self {
        let rows = records.len();
        Corpus {
            records,
            provenance: Provenance {
                source: source.into(),
                rows,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.is_biased()).count()
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    load_with(path, &BiasTypeRegistry::default())
}

pub fn load_with(
    path: impl AsRef<Path>,
    registry: &BiasTypeRegistry,
) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(file, &path.display().to_string(), registry)
}

/// Parse CSV text from any reader. `source` is recorded as provenance.
pub fn read_csv<R: Read>(
    reader: R,
    source: &str,
    registry: &BiasTypeRegistry,
) -> Result<Corpus, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 8];
    for (slot, col) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| CorpusError::Schema(col.to_string()))?;
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(idx[i]).unwrap_or("");
        let row_err = |message: String| CorpusError::Row { row: line, message };

        let bias_label = match field(2).trim() {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => {
                return Err(row_err(format!(
                    "bias_label must be 0, 1 or empty, got `{other}`"
                )))
            }
        };
        let bias_type = match field(3).trim() {
            "" | NO_BIAS => None,
            t => {
                if registry.index_of(t).is_none() {
                    return Err(row_err(format!("unknown bias_type `{t}`")));
                }
                Some(t.to_string())
            }
        };
        match (bias_label, &bias_type) {
            (Some(false), Some(t)) => {
                return Err(row_err(format!("bias_type `{t}` on a row labelled 0")))
            }
            (Some(true), None) => return Err(row_err("row labelled 1 has no bias_type".into())),
            _ => {}
        }
        let attributes = SensitiveAttribute::ALL
            .into_iter()
            .enumerate()
            .map(|(k, a)| (a, field(4 + k).to_string()))
            .collect();
        records.push(Record {
            sentence: field(0).to_string(),
            hypothesis: field(1).to_string(),
            bias_label,
            bias_type,
            attributes,
        });
    }
    Ok(Corpus::new(source, records))
}

/// Write `corpus` in the schema [`load`] reads.
pub fn write_csv<W: Write>(corpus: &Corpus, writer: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REQUIRED_COLUMNS)?;
    for r in &corpus.records {
        let label = match r.bias_label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let bias_type = match (&r.bias_type, r.bias_label) {
            (Some(t), _) => t.as_str(),
            (None, Some(false)) => NO_BIAS,
            (None, _) => "",
        };
        let mut row = vec![r.sentence.as_str(), r.hypothesis.as_str(), label, bias_type];
        row.extend(
            SensitiveAttribute::ALL
                .iter()
                .map(|a| r.attributes.get(a).map(String::as_str).unwrap_or("")),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    write_csv(corpus, std::io::BufWriter::new(file))
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drop unlabeled or textless rows, bucket missing attributes as `unknown`,
/// normalise whitespace and collapse duplicate (sentence, hypothesis) pairs.
/// Survivors keep their relative order.
pub fn preprocess(corpus: &Corpus) -> Corpus {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut records = Vec::with_capacity(corpus.len());
    for r in &corpus.records {
        if r.bias_label.is_none() {
            continue;
        }
        let sentence = normalize_whitespace(&r.sentence);
        let hypothesis = normalize_whitespace(&r.hypothesis);
        if sentence.is_empty() || hypothesis.is_empty() {
            continue;
        }
        if !seen.insert((sentence.clone(), hypothesis.clone())) {
            continue;
        }
        let attributes = SensitiveAttribute::ALL
            .into_iter()
            .map(|a| {
                let v =
                    normalize_whitespace(r.attributes.get(&a).map(String::as_str).unwrap_or(""));
                (a, if v.is_empty() { UNKNOWN.to_string() } else { v })
            })
            .collect();
        records.push(Record {
            sentence,
            hypothesis,
            bias_label: r.bias_label,
            bias_type: if r.bias_label == Some(true) {
                r.bias_type.clone()
            } else {
                None
            },
            attributes,
        });
    }
    Corpus {
        records,
        provenance: corpus.provenance.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self, CorpusError> {
        let spec = SplitSpec {
            train_fraction: train,
            val_fraction: val,
            test_fraction: test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse `"0.8,0.1,0.1"`.
    pub fn parse_fractions(text: &str, seed: u64) -> Result<Self, CorpusError> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CorpusError::InvalidSplit(format!("`{text}`: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c, seed),
            _ => Err(CorpusError::InvalidSplit(format!(
                "`{text}`: expected three comma-separated fractions"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if let Some(f) = fr.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(CorpusError::InvalidSplit(format!(
                "fraction {f} is outside (0, 1)"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!(
                "fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// Split sizes for `n` records: floors, with the remainder going to train then val.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let mut sizes = [self.train_fraction, self.val_fraction, self.test_fraction]
            .map(|f| (n as f64 * f + 1e-9).floor() as usize);
        let mut rest = n - sizes.iter().sum::<usize>();
        let mut slot = 0;
        while rest > 0 {
            sizes[slot % 3] += 1;
            rest -= 1;
            slot += 1;
        }
        sizes
    }
}

/// Largest-remainder apportionment of `total` items over `sizes` in
/// proportion to each size; ties go to the earlier slot.
fn apportion(total: usize, sizes: [usize; 3]) -> [usize; 3] {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return [0; 3];
    }
    let mut out = [0usize; 3];
    let mut rems = [(0usize, 0usize); 3];
    for k in 0..3 {
        let num = sizes[k] * total;
        out[k] = num / n;
        rems[k] = (num % n, k);
    }
    let mut left = total - out.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in rems.iter() {
        if left == 0 {
            break;
        }
        out[k] += 1;
        left -= 1;
    }
    out
}

/// Seeded shuffle followed by a label-stratified train/val/test partition.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    spec.validate()?;
    let n = corpus.len();
    if n < 10 {
        return Err(CorpusError::TooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let sizes = spec.sizes(n);
    let positives: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| corpus.records[i].is_biased())
        .collect();
    let negatives: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| !corpus.records[i].is_biased())
        .collect();
    let pos_counts = apportion(positives.len(), sizes);

    let mut assignment = vec![0usize; n];
    let (mut p, mut q) = (0usize, 0usize);
    for k in 0..3 {
        for &i in &positives[p..p + pos_counts[k]] {
            assignment[i] = k;
        }
        p += pos_counts[k];
        let neg = sizes[k] - pos_counts[k];
        for &i in &negatives[q..q + neg] {
            assignment[i] = k;
        }
        q += neg;
    }

    let mut parts: [Vec<Record>; 3] = Default::default();
    for &i in &order {
        parts[assignment[i]].push(corpus.records[i].clone());
    }
    let [train, val, test] = parts;
    let src = &corpus.provenance.source;
    Ok((
        Corpus::new(format!("{src}#train"), train),
        Corpus::new(format!("{src}#val"), val),
        Corpus::new(format!("{src}#test"), test),
    ))
}

/// Count of positive records per bias category.
pub fn bias_type_distribution(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in corpus.records.iter().filter(|r| r.is_biased()) {
        let key = r.bias_type.clone().unwrap_or_else(|| NO_BIAS.to_string());
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}
