//! Detection accuracy, type accuracy, disparate impact and equal opportunity,
//! computed from prediction tallies with per-group breakdowns.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BiasTypeRegistry, Corpus, Record, SensitiveAttribute, UNKNOWN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no instances to compute {0} over")]
    Empty(&'static str),
    #[error("group has no instances")]
    EmptyGroup,
    #[error("denominator group has a zero positive rate")]
    ZeroRate,
    #[error("group has no actual positives")]
    NoPositives,
    #[error("value {0} is out of range")]
    Range(f64),
    #[error("invalid option: {0}")]
    Option(String),
    #[error("model failed on instance {index}: {message}")]
    Model { index: usize, message: String },
    #[error("{attribute}: reference group `{group}`: {source}")]
    Reference {
        attribute: String,
        group: String,
        source: Box<MetricError>,
    },
    #[error("predictions file line {line}: {message}")]
    Sidecar { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, label: bool, predicted: bool) {
        match (label, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// `(TP + TN) / (TP + TN + FP + FN)`.
pub fn bda(c: &ConfusionCounts) -> Result<f64, MetricError> {
    let n = c.total();
    if n == 0 {
        return Err(MetricError::Empty("BDA"));
    }
    Ok((c.tp + c.tn) as f64 / n as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerTypeCounts {
    pub correct: BTreeMap<String, u64>,
    pub total: u64,
}

impl PerTypeCounts {
    /// Count one instance; `None` on either side means "no bias type".
    pub fn record(&mut self, truth: Option<&str>, predicted: Option<&str>) {
        self.total += 1;
        if truth == predicted {
            let key = truth.unwrap_or(crate::corpus::NO_BIAS).to_string();
            *self.correct.entry(key).or_insert(0) += 1;
        }
    }
}

/// `Σ_k TP(k) / N`.
pub fn btca(p: &PerTypeCounts) -> Result<f64, MetricError> {
    if p.total == 0 {
        return Err(MetricError::Empty("BTCA"));
    }
    Ok(p.correct.values().sum::<u64>() as f64 / p.total as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTally {
    pub predicted_positive: u64,
    pub total: u64,
    pub true_positive: u64,
    pub actual_positive: u64,
}

impl GroupTally {
    pub fn record(&mut self, label: bool, predicted: bool) {
        self.total += 1;
        self.predicted_positive += u64::from(predicted);
        self.actual_positive += u64::from(label);
        self.true_positive += u64::from(label && predicted);
    }

    pub fn positive_rate(&self) -> Result<f64, MetricError> {
        if self.total == 0 {
            return Err(MetricError::EmptyGroup);
        }
        Ok(self.predicted_positive as f64 / self.total as f64)
    }

    pub fn tpr(&self) -> Result<f64, MetricError> {
        if self.actual_positive == 0 {
            return Err(MetricError::NoPositives);
        }
        Ok(self.true_positive as f64 / self.actual_positive as f64)
    }
}

/// Disparate impact `P(Ŷ=1 | g_ref) / P(Ŷ=1 | g)`; 1 is parity.
pub fn dis(g: &GroupTally, g_ref: &GroupTally) -> Result<f64, MetricError> {
    let denom = g.positive_rate()?;
    let numer = g_ref.positive_rate()?;
    if denom == 0.0 {
        return Err(MetricError::ZeroRate);
    }
    if g == g_ref {
        return Ok(1.0);
    }
    Ok(numer / denom)
}

/// Equal opportunity difference `|TPR(g) − TPR(g_ref)|`; 0 is parity.
pub fn eod(g: &GroupTally, g_ref: &GroupTally) -> Result<f64, MetricError> {
    Ok((g.tpr()? - g_ref.tpr()?).abs())
}

/// Mean of 1..=5 ratings.
pub fn likert_mean(ratings: &[u8]) -> Result<f64, MetricError> {
    if ratings.is_empty() {
        return Err(MetricError::Empty("Likert mean"));
    }
    if let Some(&bad) = ratings.iter().find(|r| !(1..=5).contains(*r)) {
        return Err(MetricError::Range(bad as f64));
    }
    Ok(ratings.iter().map(|&r| r as u64).sum::<u64>() as f64 / ratings.len() as f64)
}

/// Which instances the type accuracy is computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BtcaUniverse {
    /// Only instances whose gold label is biased.
    #[default]
    Positives,
    /// Every instance; unbiased instances are correct when no type is predicted.
    All,
}

impl FromStr for BtcaUniverse {
    type Err = MetricError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positives" => Ok(BtcaUniverse::Positives),
            "all" => Ok(BtcaUniverse::All),
            other => Err(MetricError::Option(format!(
                "btca universe must be `positives` or `all`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for BtcaUniverse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BtcaUniverse::Positives => "positives",
            BtcaUniverse::All => "all",
        })
    }
}

/// One model output on one test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: bool,
    pub true_type: Option<String>,
    pub prob: f64,
    pub predicted: bool,
    /// Argmax type when predicted positive, otherwise `None`.
    pub predicted_type: Option<String>,
    pub attributes: BTreeMap<SensitiveAttribute, String>,
}

/// Model scores for a single record.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub detect_prob: f64,
    pub type_probs: Vec<f64>,
}

pub trait Predictor {
    fn scores(&self, record: &Record) -> Result<Scores, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub threshold: f64,
    pub attributes: Vec<SensitiveAttribute>,
    pub btca_universe: BtcaUniverse,
    /// Per-attribute reference group; the largest group is used otherwise.
    pub reference: BTreeMap<SensitiveAttribute, String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.5,
            attributes: SensitiveAttribute::ALL.to_vec(),
            btca_universe: BtcaUniverse::Positives,
            reference: BTreeMap::new(),
        }
    }
}

fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

/// Run `model` over `test` and turn its scores into thresholded predictions.
pub fn predict_all(
    model: &dyn Predictor,
    test: &Corpus,
    types: &BiasTypeRegistry,
    threshold: f64,
) -> Result<Vec<Prediction>, MetricError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricError::Option(format!(
            "threshold must lie in (0,1), got {threshold}"
        )));
    }
    test.records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let s = model
                .scores(r)
                .map_err(|message| MetricError::Model { index, message })?;
            let predicted = s.detect_prob >= threshold;
            let predicted_type = if predicted {
                argmax(&s.type_probs)
                    .and_then(|k| types.categories().get(k))
                    .cloned()
            } else {
                None
            };
            Ok(Prediction {
                index,
                label: r.is_biased(),
                true_type: if r.is_biased() {
                    r.bias_type.clone()
                } else {
                    None
                },
                prob: s.detect_prob,
                predicted,
                predicted_type,
                attributes: r.attributes.clone(),
            })
        })
        .collect()
}

/// Fairness breakdown for one sensitive attribute. Groups whose metric is
/// undefined (no members, zero positive rate, no actual positives) carry `None`
/// and are listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBreakdown {
    /// `None` when no instance has a known value for the attribute.
    pub reference: Option<String>,
    pub groups: BTreeMap<String, GroupTally>,
    pub dis: BTreeMap<String, Option<f64>>,
    pub eod: BTreeMap<String, Option<f64>>,
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub instances: usize,
    pub threshold: f64,
    pub btca_universe: BtcaUniverse,
    pub bda: f64,
    pub btca: f64,
    pub confusion: ConfusionCounts,
    pub type_counts: PerTypeCounts,
    /// Per attribute: the group ratio farthest from parity.
    pub dis: BTreeMap<String, Option<f64>>,
    /// Per attribute: the largest group gap.
    pub eod: BTreeMap<String, Option<f64>>,
    pub attributes: BTreeMap<String, AttributeBreakdown>,
    pub interpretability: Option<f64>,
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Pretty JSON with fields in declaration order and maps sorted by key.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports are always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub const ACCURACY_NOTE: &str = "accuracy denominator is TP+TN+FP+FN";

fn reference_group(groups: &BTreeMap<String, GroupTally>) -> Option<&String> {
    // largest group; ties go to the lexically first name
    groups
        .iter()
        .max_by(|a, b| a.1.total.cmp(&b.1.total).then_with(|| b.0.cmp(a.0)))
        .map(|(g, _)| g)
}

fn breakdown(
    attr: SensitiveAttribute,
    predictions: &[Prediction],
    reference: Option<&String>,
) -> Result<AttributeBreakdown, MetricError> {
    let mut groups: BTreeMap<String, GroupTally> = BTreeMap::new();
    for p in predictions {
        let value = p
            .attributes
            .get(&attr)
            .map(String::as_str)
            .unwrap_or(UNKNOWN);
        if value == UNKNOWN {
            continue;
        }
        groups
            .entry(value.to_string())
            .or_default()
            .record(p.label, p.predicted);
    }
    let reference = match reference.or_else(|| reference_group(&groups)) {
        Some(r) => r.clone(),
        None => {
            return Ok(AttributeBreakdown {
                reference: None,
                groups,
                dis: BTreeMap::new(),
                eod: BTreeMap::new(),
                undefined: vec!["no instance has a known value".to_string()],
            })
        }
    };
    let annotate = |e: MetricError| MetricError::Reference {
        attribute: attr.as_str().to_string(),
        group: reference.clone(),
        source: Box::new(e),
    };
    let r = groups
        .get(&reference)
        .copied()
        .ok_or_else(|| annotate(MetricError::EmptyGroup))?;
    r.positive_rate().map_err(annotate)?;

    let mut dis_map = BTreeMap::new();
    let mut eod_map = BTreeMap::new();
    let mut undefined = Vec::new();
    for (name, g) in &groups {
        match dis(g, &r) {
            Ok(v) => {
                dis_map.insert(name.clone(), Some(v));
            }
            Err(e) => {
                undefined.push(format!("dis[{name}]: {e}"));
                dis_map.insert(name.clone(), None);
            }
        }
        match eod(g, &r) {
            Ok(v) => {
                eod_map.insert(name.clone(), Some(v));
            }
            Err(e) => {
                undefined.push(format!("eod[{name}]: {e}"));
                eod_map.insert(name.clone(), None);
            }
        }
    }
    Ok(AttributeBreakdown {
        reference: Some(reference),
        groups,
        dis: dis_map,
        eod: eod_map,
        undefined,
    })
}

fn dis_summary(b: &AttributeBreakdown) -> Option<f64> {
    b.dis
        .iter()
        .filter(|(g, _)| Some(*g) != b.reference.as_ref())
        .filter_map(|(_, v)| *v)
        .fold(None, |best: Option<f64>, v| match best {
            Some(x) if x.ln().abs() >= v.ln().abs() => Some(x),
            _ => Some(v),
        })
        .or_else(|| {
            b.reference
                .as_ref()
                .and_then(|r| b.dis.get(r).copied().flatten())
        })
}

fn eod_summary(b: &AttributeBreakdown) -> Option<f64> {
    b.eod
        .values()
        .filter_map(|v| *v)
        .fold(None, |best: Option<f64>, v| {
            Some(best.map_or(v, |x| x.max(v)))
        })
}

/// Assemble a report from raw predictions.
pub fn report_from_predictions(
    model: &str,
    predictions: &[Prediction],
    opts: &EvalOptions,
) -> Result<MetricsReport, MetricError> {
    let mut confusion = ConfusionCounts::default();
    let mut type_counts = PerTypeCounts::default();
    for p in predictions {
        confusion.record(p.label, p.predicted);
        if p.label || opts.btca_universe == BtcaUniverse::All {
            type_counts.record(p.true_type.as_deref(), p.predicted_type.as_deref());
        }
    }
    let mut attributes = BTreeMap::new();
    let mut dis_map = BTreeMap::new();
    let mut eod_map = BTreeMap::new();
    for &attr in &opts.attributes {
        let b = breakdown(attr, predictions, opts.reference.get(&attr))?;
        dis_map.insert(attr.as_str().to_string(), dis_summary(&b));
        eod_map.insert(attr.as_str().to_string(), eod_summary(&b));
        attributes.insert(attr.as_str().to_string(), b);
    }
    Ok(MetricsReport {
        model: model.to_string(),
        instances: predictions.len(),
        threshold: opts.threshold,
        btca_universe: opts.btca_universe,
        bda: bda(&confusion)?,
        btca: btca(&type_counts)?,
        confusion,
        type_counts,
        dis: dis_map,
        eod: eod_map,
        attributes,
        interpretability: None,
        notes: vec![ACCURACY_NOTE.to_string()],
    })
}

/// Predict over `test` and build the report.
pub fn evaluate(
    name: &str,
    model: &dyn Predictor,
    test: &Corpus,
    types: &BiasTypeRegistry,
    opts: &EvalOptions,
) -> Result<(MetricsReport, Vec<Prediction>), MetricError> {
    let predictions = predict_all(model, test, types, opts.threshold)?;
    let report = report_from_predictions(name, &predictions, opts)?;
    Ok((report, predictions))
}

const SIDECAR_FIXED: [&str; 6] = [
    "index",
    "label",
    "prob",
    "predicted",
    "true_type",
    "predicted_type",
];

/// Raw predictions as CSV: one row per instance, attributes in canonical order.
pub fn predictions_to_csv(predictions: &[Prediction]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = SIDECAR_FIXED
        .iter()
        .copied()
        .chain(SensitiveAttribute::ALL.iter().map(|a| a.as_str()))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for p in predictions {
        let mut row = vec![
            p.index.to_string(),
            u8::from(p.label).to_string(),
            p.prob.to_string(),
            u8::from(p.predicted).to_string(),
            p.true_type.clone().unwrap_or_default(),
            p.predicted_type.clone().unwrap_or_default(),
        ];
        for a in SensitiveAttribute::ALL {
            row.push(
                p.attributes
                    .get(&a)
                    .cloned()
                    .unwrap_or_else(|| UNKNOWN.to_string()),
            );
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn predictions_from_csv(text: &str) -> Result<Vec<Prediction>, MetricError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let bad = |line: usize, message: String| MetricError::Sidecar { line, message };
    let headers = rd.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let expected: Vec<&str> = SIDECAR_FIXED
        .iter()
        .copied()
        .chain(SensitiveAttribute::ALL.iter().map(|a| a.as_str()))
        .collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(bad(1, format!("expected header {}", expected.join(","))));
    }
    let flag = |s: &str, line: usize| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(bad(line, format!("expected 0 or 1, got `{other}`"))),
    };
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let mut attributes = BTreeMap::new();
        for (j, a) in SensitiveAttribute::ALL.iter().enumerate() {
            attributes.insert(*a, row[6 + j].to_string());
        }
        out.push(Prediction {
            index: row[0]
                .parse()
                .map_err(|_| bad(line, "invalid index".into()))?,
            label: flag(&row[1], line)?,
            prob: row[2]
                .parse()
                .map_err(|_| bad(line, "invalid probability".into()))?,
            predicted: flag(&row[3], line)?,
            true_type: opt(&row[4]),
            predicted_type: opt(&row[5]),
            attributes,
        });
    }
    Ok(out)
}

/// Table-shaped CSV: one row per report with BDA, BTCA, then DIS and EOD per attribute.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut attrs: Vec<&String> = reports.iter().flat_map(|r| r.dis.keys()).collect();
    attrs.sort();
    attrs.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string(), "BDA".into(), "BTCA".into()];
    header.extend(attrs.iter().map(|a| format!("DIS({a})")));
    header.extend(attrs.iter().map(|a| format!("EOD({a})")));
    w.write_record(&header).expect("in-memory write");
    let cell = |v: Option<&Option<f64>>| {
        v.copied()
            .flatten()
            .map(|x| x.to_string())
            .unwrap_or_default()
    };
    for r in reports {
        let mut row = vec![r.model.clone(), r.bda.to_string(), r.btca.to_string()];
        row.extend(attrs.iter().map(|a| cell(r.dis.get(*a))));
        row.extend(attrs.iter().map(|a| cell(r.eod.get(*a))));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally(pp: u64, total: u64, tp: u64, ap: u64) -> GroupTally {
        GroupTally {
            predicted_positive: pp,
            total,
            true_positive: tp,
            actual_positive: ap,
        }
    }

    #[test]
    fn bda_examples() {
        let c = ConfusionCounts {
            tp: 5,
            tn: 3,
            fp: 1,
            fn_: 1,
        };
        assert!((bda(&c).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(
            bda(&ConfusionCounts {
                tp: 4,
                tn: 7,
                fp: 0,
                fn_: 0
            })
            .unwrap(),
            1.0
        );
        assert_eq!(
            bda(&ConfusionCounts::default()),
            Err(MetricError::Empty("BDA"))
        );
    }

    #[test]
    fn btca_examples() {
        let p = PerTypeCounts {
            correct: [("toxicity".to_string(), 3), ("stereotyping".to_string(), 2)].into(),
            total: 10,
        };
        assert_eq!(btca(&p).unwrap(), 0.5);
        assert!(btca(&PerTypeCounts::default()).is_err());
    }

    #[test]
    fn dis_and_eod_examples() {
        let g = tally(10, 20, 0, 0);
        let g_ref = tally(9, 20, 0, 0);
        assert!((dis(&g, &g_ref).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(dis(&g, &g).unwrap(), 1.0);
        assert_eq!(dis(&tally(0, 5, 0, 0), &g), Err(MetricError::ZeroRate));
        assert_eq!(dis(&tally(0, 0, 0, 0), &g), Err(MetricError::EmptyGroup));

        let a = tally(0, 0, 90, 100);
        let b = tally(0, 0, 83, 100);
        assert!((eod(&a, &b).unwrap() - 0.07).abs() < 1e-12);
        assert_eq!(eod(&a, &b).unwrap(), eod(&b, &a).unwrap());
        assert_eq!(eod(&a, &a).unwrap(), 0.0);
        assert_eq!(eod(&tally(1, 1, 0, 0), &a), Err(MetricError::NoPositives));
    }

    #[test]
    fn likert_examples() {
        assert_eq!(likert_mean(&[3, 3, 3]).unwrap(), 3.0);
        assert_eq!(likert_mean(&[1, 5, 4, 2]).unwrap(), 3.0);
        assert_eq!(likert_mean(&[5; 7]).unwrap(), 5.0);
        assert!(matches!(likert_mean(&[0, 3]), Err(MetricError::Range(_))));
        assert!(matches!(likert_mean(&[]), Err(MetricError::Empty(_))));
    }

    struct Oracle;
    impl Predictor for Oracle {
        fn scores(&self, r: &Record) -> Result<Scores, String> {
            let types = BiasTypeRegistry::default();
            let mut type_probs = vec![0.0; types.len()];
            if let Some(k) = r.bias_type.as_deref().and_then(|t| types.index_of(t)) {
                type_probs[k] = 1.0;
            }
            Ok(Scores {
                detect_prob: if r.is_biased() { 1.0 } else { 0.0 },
                type_probs,
            })
        }
    }

    fn fixture() -> Corpus {
        let mut records = Vec::new();
        for (i, (ty, gender)) in [
            (Some("toxicity"), "male"),
            (None, "male"),
            (Some("stereotyping"), "female"),
            (None, "female"),
            (Some("offensive_language"), "male"),
            (None, "unknown"),
        ]
        .into_iter()
        .enumerate()
        {
            records.push(
                Record::new(&format!("s{i}"), "h", ty)
                    .with_attribute(SensitiveAttribute::Gender, gender),
            );
        }
        Corpus::new("fixture", records)
    }

    #[test]
    fn oracle_model_is_perfect_and_fair() {
        let opts = EvalOptions {
            attributes: vec![SensitiveAttribute::Gender, SensitiveAttribute::Race],
            ..EvalOptions::default()
        };
        let (report, preds) = evaluate(
            "oracle",
            &Oracle,
            &fixture(),
            &BiasTypeRegistry::default(),
            &opts,
        )
        .unwrap();
        assert_eq!(report.bda, 1.0);
        assert_eq!(report.btca, 1.0);
        assert_eq!(report.type_counts.total, 3);
        let g = &report.attributes["gender"];
        assert_eq!(g.reference.as_deref(), Some("male"));
        assert_eq!(report.attributes["race"].reference, None);
        assert_eq!(report.dis["race"], None);
        assert!(!g.groups.contains_key(UNKNOWN));
        assert_eq!(report.eod["gender"], Some(0.0));
        assert_eq!(preds.len(), 6);
        assert_eq!(report.notes, [ACCURACY_NOTE]);

        let all = EvalOptions {
            btca_universe: BtcaUniverse::All,
            ..opts
        };
        let r = report_from_predictions("oracle", &preds, &all).unwrap();
        assert_eq!(r.type_counts.total, 6);
        assert_eq!(r.btca, 1.0);
    }

    #[test]
    fn undefined_groups_are_reported_not_fatal() {
        let mk = |label: bool, predicted: bool, g: &str| Prediction {
            index: 0,
            label,
            true_type: None,
            prob: 0.0,
            predicted,
            predicted_type: None,
            attributes: [(SensitiveAttribute::Race, g.to_string())].into(),
        };
        let preds = vec![
            mk(true, true, "a"),
            mk(false, true, "a"),
            mk(false, false, "b"),
        ];
        let opts = EvalOptions {
            attributes: vec![SensitiveAttribute::Race],
            btca_universe: BtcaUniverse::All,
            ..EvalOptions::default()
        };
        let r = report_from_predictions("m", &preds, &opts).unwrap();
        let b = &r.attributes["race"];
        assert_eq!(b.reference.as_deref(), Some("a"));
        assert_eq!(b.dis["b"], None);
        assert_eq!(b.eod["b"], None);
        assert_eq!(b.undefined.len(), 2);
        assert_eq!(r.dis["race"], Some(1.0));

        let override_ref = EvalOptions {
            reference: [(SensitiveAttribute::Race, "zzz".to_string())].into(),
            ..opts
        };
        assert!(matches!(
            report_from_predictions("m", &preds, &override_ref),
            Err(MetricError::Reference { .. })
        ));
    }

    #[test]
    fn dis_summary_picks_farthest_from_parity() {
        let b = AttributeBreakdown {
            reference: Some("r".into()),
            groups: BTreeMap::new(),
            dis: [
                ("a".to_string(), Some(0.8)),
                ("b".to_string(), Some(1.5)),
                ("r".to_string(), Some(1.0)),
            ]
            .into(),
            eod: [("a".to_string(), Some(0.1)), ("b".to_string(), None)].into(),
            undefined: vec![],
        };
        assert_eq!(dis_summary(&b), Some(1.5));
        assert_eq!(eod_summary(&b), Some(0.1));
    }

    #[test]
    fn sidecar_and_report_serialization_roundtrip() {
        let opts = EvalOptions::default();
        let (report, preds) = evaluate(
            "oracle",
            &Oracle,
            &fixture(),
            &BiasTypeRegistry::default(),
            &opts,
        )
        .unwrap();
        let csv = predictions_to_csv(&preds);
        assert_eq!(predictions_from_csv(&csv).unwrap(), preds);
        let json = report.to_json();
        let back = MetricsReport::from_json(&json).unwrap();
        assert_eq!(back, report);

        let table = reports_to_csv(&[report.clone(), report]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "model,BDA,BTCA,DIS(age),DIS(gender),DIS(race),DIS(religion),EOD(age),EOD(gender),EOD(race),EOD(religion)"
        );
    }

    #[test]
    fn threshold_must_be_open_interval() {
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(predict_all(&Oracle, &fixture(), &BiasTypeRegistry::default(), t).is_err());
        }
    }
}
