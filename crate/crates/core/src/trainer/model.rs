//! Mean-pooled embedding classifier with a tanh hidden layer and three heads
//! (detection, bias type, context prediction), plus its losses and gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::encoder::{GroundedInput, PAD};

/// Probability clamp used by every cross-entropy term.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub types: usize,
    pub aux: usize,
}

/// Parameter tensors, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    Embeddings,
    HiddenW,
    HiddenB,
    DetectW,
    DetectB,
    TypeW,
    TypeB,
    AuxW,
    AuxB,
}

impl Tensor {
    pub const ALL: [Tensor; 9] = [
        Tensor::Embeddings,
        Tensor::HiddenW,
        Tensor::HiddenB,
        Tensor::DetectW,
        Tensor::DetectB,
        Tensor::TypeW,
        Tensor::TypeB,
        Tensor::AuxW,
        Tensor::AuxB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::Embeddings => "embeddings",
            Tensor::HiddenW => "hidden_w",
            Tensor::HiddenB => "hidden_b",
            Tensor::DetectW => "detect_w",
            Tensor::DetectB => "detect_b",
            Tensor::TypeW => "type_w",
            Tensor::TypeB => "type_b",
            Tensor::AuxW => "aux_w",
            Tensor::AuxB => "aux_b",
        }
    }
}

impl Dims {
    /// `(rows, cols)` of a tensor in row-major layout.
    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        match t {
            Tensor::Embeddings => (self.vocab, self.embed),
            Tensor::HiddenW => (self.embed, self.hidden),
            Tensor::HiddenB => (1, self.hidden),
            Tensor::DetectW => (self.hidden, 1),
            Tensor::DetectB => (1, 1),
            Tensor::TypeW => (self.hidden, self.types),
            Tensor::TypeB => (1, self.types),
            Tensor::AuxW => (self.hidden, self.aux),
            Tensor::AuxB => (1, self.aux),
        }
    }

    pub fn len(&self, t: Tensor) -> usize {
        let (r, c) = self.shape(t);
        r * c
    }

    pub fn offset(&self, t: Tensor) -> usize {
        Tensor::ALL
            .iter()
            .take_while(|&&u| u != t)
            .map(|&u| self.len(u))
            .sum()
    }

    pub fn total(&self) -> usize {
        Tensor::ALL.iter().map(|&t| self.len(t)).sum()
    }
}

/// All weights in one flat vector; tensors are contiguous row-major slices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub dropout: f64,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: Dims, dropout: f64) -> Self {
        ModelParams {
            dims,
            dropout,
            values: vec![0.0; dims.total()],
        }
    }

    /// Small uniform embeddings, Glorot-uniform weights, zero biases.
    pub fn init(dims: Dims, dropout: f64, seed: u64) -> Self {
        let mut p = Self::zeros(dims, dropout);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in Tensor::ALL {
            let (rows, cols) = dims.shape(t);
            let limit = match t {
                Tensor::Embeddings => 0.1,
                Tensor::HiddenW | Tensor::DetectW | Tensor::TypeW | Tensor::AuxW => {
                    (6.0 / (rows + cols) as f64).sqrt()
                }
                _ => continue,
            };
            for v in p.tensor_mut(t) {
                *v = rng.gen_range(-limit..limit);
            }
        }
        p.tensor_mut(Tensor::Embeddings)[..dims.embed].fill(0.0);
        p
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        let o = self.dims.offset(t);
        &self.values[o..o + self.dims.len(t)]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        let o = self.dims.offset(t);
        let n = self.dims.len(t);
        &mut self.values[o..o + n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check(&self, x: &GroundedInput) -> Result<(), TrainError> {
        let d = &self.dims;
        if let Some(&id) = x.ids.iter().find(|&&id| id as usize >= d.vocab) {
            return Err(TrainError::Dimension(format!(
                "token id {id} outside vocabulary of {}",
                d.vocab
            )));
        }
        if x.aux_target.len() != d.aux {
            return Err(TrainError::Dimension(format!(
                "aux target has {} bits, model has {}",
                x.aux_target.len(),
                d.aux
            )));
        }
        if let Some(k) = x.type_label.filter(|&k| k >= d.types) {
            return Err(TrainError::Dimension(format!(
                "type label {k} outside {} categories",
                d.types
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub detect_prob: f64,
    pub type_probs: Vec<f64>,
    pub aux_probs: Vec<f64>,
}

/// Intermediate values kept for backpropagation.
struct Trace {
    tokens: Vec<usize>,
    pooled: Vec<f64>,
    activ: Vec<f64>,
    mask: Vec<f64>,
    hidden: Vec<f64>,
    out: Output,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dropout_mask(rate: f64, n: usize, seed: Option<u64>) -> Vec<f64> {
    match seed {
        Some(s) if rate > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let keep = 1.0 / (1.0 - rate);
            (0..n)
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                .collect()
        }
        _ => vec![1.0; n],
    }
}

fn run(p: &ModelParams, x: &GroundedInput, dropout_seed: Option<u64>) -> Trace {
    let d = p.dims;
    let emb = p.tensor(Tensor::Embeddings);
    let tokens: Vec<usize> = x
        .ids
        .iter()
        .filter(|&&id| id != PAD)
        .map(|&id| id as usize)
        .collect();
    let mut pooled = vec![0.0; d.embed];
    for &t in &tokens {
        for (acc, v) in pooled.iter_mut().zip(&emb[t * d.embed..(t + 1) * d.embed]) {
            *acc += v;
        }
    }
    if !tokens.is_empty() {
        let n = tokens.len() as f64;
        pooled.iter_mut().for_each(|v| *v /= n);
    }

    let hw = p.tensor(Tensor::HiddenW);
    let mut activ = p.tensor(Tensor::HiddenB).to_vec();
    for (i, &e) in pooled.iter().enumerate() {
        for (a, w) in activ.iter_mut().zip(&hw[i * d.hidden..(i + 1) * d.hidden]) {
            *a += e * w;
        }
    }
    activ.iter_mut().for_each(|a| *a = a.tanh());
    let mask = dropout_mask(p.dropout, d.hidden, dropout_seed);
    let hidden: Vec<f64> = activ.iter().zip(&mask).map(|(a, m)| a * m).collect();

    let affine = |w: Tensor, b: Tensor, n: usize| -> Vec<f64> {
        let w = p.tensor(w);
        let mut out = p.tensor(b).to_vec();
        for (j, &h) in hidden.iter().enumerate() {
            for (o, wv) in out.iter_mut().zip(&w[j * n..(j + 1) * n]) {
                *o += h * wv;
            }
        }
        out
    };
    let detect = affine(Tensor::DetectW, Tensor::DetectB, 1)[0];
    let type_logits = affine(Tensor::TypeW, Tensor::TypeB, d.types);
    let aux_logits = affine(Tensor::AuxW, Tensor::AuxB, d.aux);

    Trace {
        tokens,
        pooled,
        activ,
        mask,
        hidden,
        out: Output {
            detect_prob: sigmoid(detect),
            type_probs: softmax(&type_logits),
            aux_probs: aux_logits.into_iter().map(sigmoid).collect(),
        },
    }
}

/// Evaluate the model on one input. In train mode the hidden layer is
/// dropped out with a mask drawn from `rng_seed`.
pub fn forward(
    p: &ModelParams,
    x: &GroundedInput,
    train_mode: bool,
    rng_seed: u64,
) -> Result<Output, TrainError> {
    p.check(x)?;
    Ok(run(p, x, train_mode.then_some(rng_seed)).out)
}

fn clamp(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// Batch-averaged binary cross-entropy of the detection head.
pub fn loss_main(probs: &[f64], labels: &[bool]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp(p);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / probs.len() as f64
}

/// Batch-averaged negative log-likelihood of the true type, over the
/// instances that have one; 0 when none do.
pub fn loss_type(type_probs: &[Vec<f64>], labels: &[Option<usize>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (q, k) in type_probs.iter().zip(labels) {
        if let Some(k) = k {
            sum += -q[*k].max(EPS).ln();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per-instance mean over bits of binary cross-entropy, batch-averaged.
pub fn loss_aux(aux_probs: &[Vec<f64>], targets: &[Vec<bool>]) -> Result<f64, TrainError> {
    if aux_probs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (r, t) in aux_probs.iter().zip(targets) {
        if r.len() != t.len() {
            return Err(TrainError::Dimension(format!(
                "aux probabilities have {} bits, target has {}",
                r.len(),
                t.len()
            )));
        }
        if r.is_empty() {
            continue;
        }
        let bits: f64 = r
            .iter()
            .zip(t)
            .map(|(&p, &y)| {
                let p = clamp(p);
                if y {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum();
        total += bits / r.len() as f64;
    }
    Ok(total / aux_probs.len() as f64)
}

/// `(main + type) + λ·aux`.
pub fn loss_total(main: f64, type_: f64, aux: f64, lambda: f64) -> f64 {
    (main + type_) + lambda * aux
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub main: f64,
    pub type_: f64,
    pub aux: f64,
    pub total: f64,
}

fn losses_of(
    outs: &[Output],
    batch: &[GroundedInput],
    lambda: f64,
) -> Result<LossParts, TrainError> {
    let probs: Vec<f64> = outs.iter().map(|o| o.detect_prob).collect();
    let labels: Vec<bool> = batch.iter().map(|x| x.main_label).collect();
    let type_probs: Vec<Vec<f64>> = outs.iter().map(|o| o.type_probs.clone()).collect();
    let type_labels: Vec<Option<usize>> = batch
        .iter()
        .map(|x| if x.main_label { x.type_label } else { None })
        .collect();
    let aux_probs: Vec<Vec<f64>> = outs.iter().map(|o| o.aux_probs.clone()).collect();
    let targets: Vec<Vec<bool>> = batch.iter().map(|x| x.aux_target.clone()).collect();
    let main = loss_main(&probs, &labels);
    let type_ = loss_type(&type_probs, &type_labels);
    let aux = loss_aux(&aux_probs, &targets)?;
    Ok(LossParts {
        main,
        type_,
        aux,
        total: loss_total(main, type_, aux, lambda),
    })
}

/// Losses of a batch with dropout disabled.
pub fn batch_loss(
    p: &ModelParams,
    batch: &[GroundedInput],
    lambda: f64,
) -> Result<LossParts, TrainError> {
    let outs = batch
        .iter()
        .map(|x| forward(p, x, false, 0))
        .collect::<Result<Vec<_>, _>>()?;
    losses_of(&outs, batch, lambda)
}

/// Loss and its gradient with respect to every parameter. `dropout_seeds`
/// gives one mask seed per instance; `None` disables dropout.
pub fn loss_and_gradients(
    p: &ModelParams,
    batch: &[GroundedInput],
    lambda: f64,
    dropout_seeds: Option<&[u64]>,
) -> Result<(LossParts, Vec<f64>), TrainError> {
    let d = p.dims;
    for x in batch {
        p.check(x)?;
    }
    let traces: Vec<Trace> = batch
        .iter()
        .enumerate()
        .map(|(i, x)| run(p, x, dropout_seeds.map(|s| s[i])))
        .collect();
    let outs: Vec<Output> = traces.iter().map(|t| t.out.clone()).collect();
    let parts = losses_of(&outs, batch, lambda)?;

    let mut grad = vec![0.0; d.total()];
    if batch.is_empty() {
        return Ok((parts, grad));
    }
    let b = batch.len() as f64;
    let n_typed = batch
        .iter()
        .filter(|x| x.main_label && x.type_label.is_some())
        .count() as f64;
    let off = |t: Tensor| d.offset(t);

    for (x, tr) in batch.iter().zip(&traces) {
        let o = &tr.out;
        // detection head: d/ds of mean BCE through the sigmoid
        let pd = o.detect_prob;
        let g_detect = if pd > EPS && pd < 1.0 - EPS {
            (pd - f64::from(u8::from(x.main_label))) / b
        } else {
            0.0
        };
        // type head: softmax cross-entropy, only for typed positives
        let mut g_type = vec![0.0; d.types];
        if let (true, Some(k)) = (x.main_label, x.type_label) {
            if o.type_probs[k] >= EPS {
                for (j, g) in g_type.iter_mut().enumerate() {
                    *g = (o.type_probs[j] - if j == k { 1.0 } else { 0.0 }) / n_typed;
                }
            }
        }
        // auxiliary head: mean BCE over bits, weighted by λ
        let mut g_aux = vec![0.0; d.aux];
        if d.aux > 0 {
            let scale = lambda / (b * d.aux as f64);
            for (m, g) in g_aux.iter_mut().enumerate() {
                let r = o.aux_probs[m];
                if r > EPS && r < 1.0 - EPS {
                    *g = scale * (r - f64::from(u8::from(x.aux_target[m])));
                }
            }
        }

        grad[off(Tensor::DetectB)] += g_detect;
        for (k, g) in g_type.iter().enumerate() {
            grad[off(Tensor::TypeB) + k] += g;
        }
        for (m, g) in g_aux.iter().enumerate() {
            grad[off(Tensor::AuxB) + m] += g;
        }

        let dw = p.tensor(Tensor::DetectW);
        let tw = p.tensor(Tensor::TypeW);
        let aw = p.tensor(Tensor::AuxW);
        let mut g_act = vec![0.0; d.hidden];
        for j in 0..d.hidden {
            let h = tr.hidden[j];
            grad[off(Tensor::DetectW) + j] += h * g_detect;
            let mut gh = dw[j] * g_detect;
            for k in 0..d.types {
                grad[off(Tensor::TypeW) + j * d.types + k] += h * g_type[k];
                gh += tw[j * d.types + k] * g_type[k];
            }
            for m in 0..d.aux {
                grad[off(Tensor::AuxW) + j * d.aux + m] += h * g_aux[m];
                gh += aw[j * d.aux + m] * g_aux[m];
            }
            let a = tr.activ[j];
            g_act[j] = gh * tr.mask[j] * (1.0 - a * a);
        }

        let hw = p.tensor(Tensor::HiddenW);
        let mut g_pool = vec![0.0; d.embed];
        for i in 0..d.embed {
            let e = tr.pooled[i];
            for j in 0..d.hidden {
                grad[off(Tensor::HiddenW) + i * d.hidden + j] += e * g_act[j];
                g_pool[i] += hw[i * d.hidden + j] * g_act[j];
            }
        }
        for j in 0..d.hidden {
            grad[off(Tensor::HiddenB) + j] += g_act[j];
        }
        if !tr.tokens.is_empty() {
            let n = tr.tokens.len() as f64;
            for &t in &tr.tokens {
                let row = off(Tensor::Embeddings) + t * d.embed;
                for i in 0..d.embed {
                    grad[row + i] += g_pool[i] / n;
                }
            }
        }
    }
    Ok((parts, grad))
}

/// Gradient of the batch loss with dropout disabled.
pub fn gradients(
    p: &ModelParams,
    batch: &[GroundedInput],
    lambda: f64,
) -> Result<Vec<f64>, TrainError> {
    loss_and_gradients(p, batch, lambda, None).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            vocab: 12,
            embed: 4,
            hidden: 5,
            types: 3,
            aux: 2,
        }
    }

    fn input(ids: &[u32], label: bool, ty: Option<usize>) -> GroundedInput {
        GroundedInput {
            ids: ids.to_vec(),
            aux_target: vec![true, false],
            main_label: label,
            type_label: ty,
        }
    }

    #[test]
    fn offsets_tile_the_vector() {
        let d = dims();
        let mut end = 0;
        for t in Tensor::ALL {
            assert_eq!(d.offset(t), end);
            end += d.len(t);
        }
        assert_eq!(end, d.total());
    }

    #[test]
    fn zero_params_are_uninformative() {
        let p = ModelParams::zeros(dims(), 0.1);
        let o = forward(&p, &input(&[2, 5, 3, 0], true, Some(1)), false, 0).unwrap();
        assert_eq!(o.detect_prob, 0.5);
        assert!(o.type_probs.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn eval_mode_is_deterministic_and_normalized() {
        let p = ModelParams::init(dims(), 0.5, 3);
        let x = input(&[2, 5, 7, 3, 9, 0, 0], true, Some(2));
        let a = forward(&p, &x, false, 1).unwrap();
        assert_eq!(a, forward(&p, &x, false, 99).unwrap());
        assert!((a.type_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let t1 = forward(&p, &x, true, 1).unwrap();
        assert_eq!(t1, forward(&p, &x, true, 1).unwrap());
    }

    #[test]
    fn dimension_errors() {
        let p = ModelParams::zeros(dims(), 0.0);
        assert!(forward(&p, &input(&[2, 40], false, None), false, 0).is_err());
        assert!(forward(&p, &input(&[2], true, Some(3)), false, 0).is_err());
        let mut x = input(&[2], false, None);
        x.aux_target.push(true);
        assert!(forward(&p, &x, false, 0).is_err());
        assert!(loss_aux(&[vec![0.5]], &[vec![true, false]]).is_err());
    }

    #[test]
    fn loss_examples() {
        assert!((loss_main(&[0.5, 0.5], &[true, false]) - 2f64.ln()).abs() < 1e-9);
        assert!(loss_main(&[1.0 - EPS], &[true]) < 1e-6);
        assert!((loss_main(&[EPS], &[true]) - 16.118095650958317).abs() < 1e-6);
        assert!((loss_type(&[vec![0.25; 4]], &[Some(2)]) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(loss_type(&[vec![0.25; 4]], &[None]), 0.0);
        assert!(
            (loss_aux(&[vec![0.5; 3]], &[vec![true, false, true]]).unwrap() - 2f64.ln()).abs()
                < 1e-12
        );
        let base = loss_aux(&[vec![0.9, 0.1]], &[vec![true, false]]).unwrap();
        assert!(loss_aux(&[vec![0.6, 0.1]], &[vec![true, false]]).unwrap() > base);
        assert!((loss_total(1.0, 0.5, 0.4, 0.5) - 1.7).abs() < 1e-15);
        assert_eq!(loss_total(0.3, 0.2, 9.0, 0.0), 0.3 + 0.2);
    }

    #[test]
    fn detect_bias_gradient_closed_form() {
        let mut p = ModelParams::init(dims(), 0.0, 1);
        for t in [Tensor::DetectW, Tensor::DetectB] {
            p.tensor_mut(t).fill(0.0);
        }
        let batch = [input(&[2, 5], true, Some(0)), input(&[2, 6], false, None)];
        let g = gradients(&p, &batch, 0.5).unwrap();
        // mean(p - y) with p = 0.5 on a balanced batch
        assert_eq!(g[p.dims.offset(Tensor::DetectB)], 0.0);
        let one = gradients(&p, &batch[..1], 0.5).unwrap();
        assert_eq!(one[p.dims.offset(Tensor::DetectB)], -0.5);
    }

    #[test]
    fn lambda_zero_silences_aux_head() {
        let p = ModelParams::init(dims(), 0.0, 2);
        let batch = [
            input(&[2, 5, 3, 7], true, Some(1)),
            input(&[2, 6, 3], false, None),
        ];
        let g = gradients(&p, &batch, 0.0).unwrap();
        for t in [Tensor::AuxW, Tensor::AuxB] {
            let o = p.dims.offset(t);
            assert!(g[o..o + p.dims.len(t)].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = ModelParams::init(dims(), 0.0, 5);
        let batch = [
            input(&[2, 5, 3, 7, 8, 0], true, Some(1)),
            input(&[2, 6, 3, 9, 0, 0], false, None),
            input(&[2, 4, 4, 3, 10, 11], true, Some(2)),
        ];
        let g = gradients(&p, &batch, 0.7).unwrap();
        let h = 1e-5;
        for (i, &gi) in g.iter().enumerate() {
            let mut plus = p.clone();
            plus.values[i] += h;
            let mut minus = p.clone();
            minus.values[i] -= h;
            let num = (batch_loss(&plus, &batch, 0.7).unwrap().total
                - batch_loss(&minus, &batch, 0.7).unwrap().total)
                / (2.0 * h);
            let err = (num - gi).abs() / num.abs().max(gi.abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: analytic {gi} numeric {num}");
        }
    }
}
