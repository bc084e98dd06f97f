//! Multi-task training with Adam and a warmup + warm-restart schedule.

mod checkpoint;
mod model;
mod schedule;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::encoder::{EncodeError, Encoder, GroundedInput};
use crate::metrics::{bda, btca, ConfusionCounts, PerTypeCounts};

pub use checkpoint::{Classifier, CHECKPOINT_MAGIC};
pub use model::{
    batch_loss, forward, gradients, loss_and_gradients, loss_aux, loss_main, loss_total, loss_type,
    Dims, LossParts, ModelParams, Output, Tensor, EPS,
};
pub use schedule::{cosine_lr, lr_at, restart_position, warmup_steps};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_fraction: f64,
    /// First cosine period in steps; `None` means one epoch.
    pub restart_period: Option<usize>,
    pub restart_mult: usize,
    pub lambda: f64,
    pub dropout: f64,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
    pub min_freq: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr_max: 1e-2,
            lr_min: 1e-4,
            warmup_fraction: 0.1,
            restart_period: None,
            restart_mult: 2,
            lambda: 0.5,
            dropout: 0.1,
            seed: 1,
            embed_dim: 32,
            hidden_dim: 64,
            max_len: 128,
            min_freq: 1,
        }
    }
}

const CONFIG_KEYS: [&str; 14] = [
    "epochs",
    "batch_size",
    "lr_max",
    "lr_min",
    "warmup_fraction",
    "restart_period",
    "restart_mult",
    "lambda",
    "dropout",
    "seed",
    "embed_dim",
    "hidden_dim",
    "max_len",
    "min_freq",
];

impl TrainConfig {
    /// Peak rate 2e-5 as used for full-size encoder fine-tuning.
    pub fn with_finetune_lr(mut self) -> Self {
        self.lr_max = 2e-5;
        self.lr_min = 2e-7;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if !(self.lr_min.is_finite()
            && self.lr_max.is_finite()
            && self.lr_min >= 0.0
            && self.lr_min <= self.lr_max)
        {
            return bad("learning rates must satisfy 0 <= lr_min <= lr_max");
        }
        if self.restart_mult == 0 {
            return bad("restart_mult must be at least 1");
        }
        if self.restart_period == Some(0) {
            return bad("restart_period must be at least 1");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be a finite value >= 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be at least 1");
        }
        if self.max_len < crate::encoder::MIN_MAX_LEN {
            return bad("max_len must be at least 16");
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr_max" => self.lr_max.to_string(),
            "lr_min" => self.lr_min.to_string(),
            "warmup_fraction" => self.warmup_fraction.to_string(),
            "restart_period" => self
                .restart_period
                .map(|p| p.to_string())
                .unwrap_or_else(|| "epoch".to_string()),
            "restart_mult" => self.restart_mult.to_string(),
            "lambda" => self.lambda.to_string(),
            "dropout" => self.dropout.to_string(),
            "seed" => self.seed.to_string(),
            "embed_dim" => self.embed_dim.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "max_len" => self.max_len.to_string(),
            "min_freq" => self.min_freq.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Set one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
            value
                .parse()
                .map_err(|_| TrainError::Config(format!("`{key}` has invalid value `{value}`")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr_max" => self.lr_max = num(key, value)?,
            "lr_min" => self.lr_min = num(key, value)?,
            "warmup_fraction" => self.warmup_fraction = num(key, value)?,
            "restart_period" => {
                self.restart_period = if value == "epoch" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "restart_mult" => self.restart_mult = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "min_freq" => self.min_freq = num(key, value)?,
            other => return Err(TrainError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Flat `key = value` text; every key, fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    /// Parse `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), n + 1) {
                return Err(TrainError::Config(format!(
                    "line {}: `{key}` already set on line {first}",
                    n + 1
                )));
            }
            cfg.set(key, value.trim())
                .map_err(|e| TrainError::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_main: f64,
    pub train_type: f64,
    pub train_aux: f64,
    pub val_loss: f64,
    pub val_main: f64,
    pub val_type: f64,
    pub val_aux: f64,
    pub val_bda: Option<f64>,
    pub val_btca: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub lr_trace: Vec<f64>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_loss,train_main,train_type,train_aux,val_loss,val_main,val_type,val_aux,val_bda,val_btca\n",
        );
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.train_main,
                e.train_type,
                e.train_aux,
                e.val_loss,
                e.val_main,
                e.val_type,
                e.val_aux,
                opt_cell(e.val_bda),
                opt_cell(e.val_btca)
            );
        }
        out
    }

    pub fn lr_trace_csv(&self) -> String {
        let mut out = String::from("step,lr\n");
        for (i, lr) in self.lr_trace.iter().enumerate() {
            let _ = writeln!(out, "{i},{lr}");
        }
        out
    }
}

/// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + Self::EPSILON);
        }
    }
}

fn evaluate_inputs(
    p: &ModelParams,
    inputs: &[GroundedInput],
    lambda: f64,
) -> Result<(LossParts, Option<f64>, Option<f64>), TrainError> {
    let mut confusion = ConfusionCounts::default();
    let mut types = PerTypeCounts::default();
    for x in inputs {
        let o = forward(p, x, false, 0)?;
        let predicted = o.detect_prob >= 0.5;
        confusion.record(x.main_label, predicted);
        if x.main_label {
            let best = o
                .type_probs
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (k, &q)| if q > acc.1 { (k, q) } else { acc },
                )
                .0;
            let truth = x.type_label.map(|k| k.to_string());
            let guess = predicted.then(|| best.to_string());
            types.record(truth.as_deref(), guess.as_deref());
        }
    }
    Ok((
        batch_loss(p, inputs, lambda)?,
        bda(&confusion).ok(),
        btca(&types).ok(),
    ))
}

/// Parameter dimensions implied by an encoder and a config.
pub fn dims_for(encoder: &Encoder, cfg: &TrainConfig) -> Dims {
    Dims {
        vocab: encoder.vocab.len(),
        embed: cfg.embed_dim,
        hidden: cfg.hidden_dim,
        types: encoder.types.len(),
        aux: encoder.labels.len(),
    }
}

/// Train a classifier. Grounded runs see each record's derived context and
/// learn the auxiliary task; ablation runs see no context and use λ = 0.
pub fn train(
    train_c: &Corpus,
    val_c: &Corpus,
    encoder: &Encoder,
    cfg: &TrainConfig,
    grounded: bool,
) -> Result<(Classifier, TrainHistory), TrainError> {
    cfg.validate()?;
    if encoder.max_len != cfg.max_len {
        return Err(TrainError::Config(format!(
            "encoder max_len {} differs from config max_len {}",
            encoder.max_len, cfg.max_len
        )));
    }
    let lambda = if grounded { cfg.lambda } else { 0.0 };
    let train_x = encoder.encode_corpus(train_c, grounded)?;
    let val_x = encoder.encode_corpus(val_c, grounded)?;

    let mut params = ModelParams::init(dims_for(encoder, cfg), cfg.dropout, cfg.seed);
    let mut history = TrainHistory::default();
    let steps_per_epoch = train_x.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let period = cfg.restart_period.unwrap_or(steps_per_epoch.max(1));

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut adam = Adam::new(params.values.len());
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = LossParts::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<GroundedInput> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let seeds: Vec<u64> = (0..batch.len()).map(|_| dropout_rng.gen()).collect();
            let (parts, grad) = loss_and_gradients(&params, &batch, lambda, Some(&seeds))?;
            let lr = lr_at(step, total_steps, cfg, period)?;
            adam.step(&mut params.values, &grad, lr);
            history.lr_trace.push(lr);
            let w = batch.len() as f64;
            sums.main += parts.main * w;
            sums.type_ += parts.type_ * w;
            sums.aux += parts.aux * w;
            sums.total += parts.total * w;
            step += 1;
        }
        let n = train_x.len().max(1) as f64;
        let (val, val_bda, val_btca) = evaluate_inputs(&params, &val_x, lambda)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: sums.total / n,
            train_main: sums.main / n,
            train_type: sums.type_ / n,
            train_aux: sums.aux / n,
            val_loss: val.total,
            val_main: val.main,
            val_type: val.type_,
            val_aux: val.aux,
            val_bda,
            val_btca,
        });
    }
    if !params.is_finite() {
        return Err(TrainError::Range(
            "training produced non-finite parameters".into(),
        ));
    }
    let classifier = Classifier {
        params,
        encoder: encoder.clone(),
        grounded,
        lambda,
    };
    Ok((classifier, history))
}
