use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{cosine_logits, interpolate_logits, softmax, task_loss, ClassPrototypes};
use super::{AcwError, ConfidenceHead, EmbeddingSet, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcwTrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub temperature: f64,
    /// Target mean confidence loss; when set, lambda is multiplied by 1.01
    /// after every batch whose mean `-log c` exceeds it and divided otherwise.
    pub budget: Option<f64>,
    pub hidden: usize,
    pub train_prototypes: bool,
}

impl Default for AcwTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            lr: 0.006,
            batch: 384,
            epochs: 20,
            temperature: 8.0,
            budget: None,
            hidden: 64,
            train_prototypes: false,
        }
    }
}

impl AcwTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AcwError::Config(m.to_string()));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be finite and >= 0");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad("temperature must be finite and > 0");
        }
        if self.batch == 0 || self.hidden == 0 {
            return bad("batch and hidden must be positive");
        }
        if let Some(b) = self.budget {
            if !(b > 0.0) || !b.is_finite() {
                return bad("budget must be finite and > 0");
            }
        }
        Ok(())
    }
}

/// Gradients of the batch-mean loss `L_t + lambda * L_c` for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// Present only for prototypes that are not frozen.
    pub prototypes: Option<Vec<f64>>,
    pub loss: f64,
    pub task_loss: f64,
    pub confidence_loss: f64,
}

impl BatchGradient {
    fn zeros(head: &ConfidenceHead, protos: Option<usize>) -> Self {
        Self {
            w1: vec![0.0; head.w1.len()],
            b1: vec![0.0; head.hidden],
            w2: vec![0.0; head.hidden],
            b2: 0.0,
            prototypes: protos.map(|n| vec![0.0; n]),
            loss: 0.0,
            task_loss: 0.0,
            confidence_loss: 0.0,
        }
    }

    fn add(&mut self, other: &Self) {
        let acc = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        acc(&mut self.w1, &other.w1);
        acc(&mut self.b1, &other.b1);
        acc(&mut self.w2, &other.w2);
        self.b2 += other.b2;
        if let (Some(a), Some(b)) = (&mut self.prototypes, &other.prototypes) {
            acc(a, b);
        }
        self.loss += other.loss;
        self.task_loss += other.task_loss;
        self.confidence_loss += other.confidence_loss;
    }

    fn scale(&mut self, s: f64) {
        for v in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.prototypes.iter_mut().flatten())
        {
            *v *= s;
        }
        self.b2 *= s;
        self.loss *= s;
        self.task_loss *= s;
        self.confidence_loss *= s;
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(self.prototypes.iter().flatten())
            .map(|v| v * v)
            .sum();
        (sq + self.b2 * self.b2).sqrt()
    }
}

// fixed chunking keeps the floating-point reduction order independent of
// the number of worker threads
const CHUNK: usize = 64;

fn accumulate_sample(
    head: &ConfidenceHead,
    prototypes: &ClassPrototypes,
    x: &[f64],
    y: usize,
    lambda: f64,
    tau: f64,
    g: &mut BatchGradient,
) -> Result<()> {
    let act = head.forward(x)?;
    let z = cosine_logits(prototypes, x)?;
    let c = act.confidence;
    let zi = interpolate_logits(&z, y, c);
    let p = softmax(&zi, tau);
    let lt = task_loss(&zi, y, tau);
    let lc = -c.ln();

    let onehot = |i: usize| if i == y { 1.0 } else { 0.0 };
    let s: f64 = (0..z.len()).map(|i| (p[i] - onehot(i)) * (z[i] - onehot(i))).sum();
    // dL/da through c = sigmoid(a): task part c(1-c) dLt/dc, confidence part -(1-c)
    let ga = c * (1.0 - c) * tau * s - lambda * (1.0 - c);

    g.b2 += ga;
    for k in 0..head.hidden {
        g.w2[k] += ga * act.hidden[k];
        if act.pre[k] > 0.0 {
            let gp = ga * head.w2[k];
            g.b1[k] += gp;
            let row = &mut g.w1[k * head.dim..(k + 1) * head.dim];
            row.iter_mut().zip(&act.input).for_each(|(w, xi)| *w += gp * xi);
        }
    }
    if let Some(gr) = &mut g.prototypes {
        let u = super::unit(x)?;
        for i in 0..prototypes.classes {
            let gz = c * tau * (p[i] - onehot(i));
            let r = prototypes.row(i);
            let out = &mut gr[i * prototypes.dim..(i + 1) * prototypes.dim];
            for d in 0..prototypes.dim {
                out[d] += gz * (u[d] - z[i] * r[d]);
            }
        }
    }
    g.loss += lt + lambda * lc;
    g.task_loss += lt;
    g.confidence_loss += lc;
    Ok(())
}

/// Exact gradient of the mean over `batch` of `L_t + lambda * L_c` with
/// respect to the head parameters, and to the prototype rows when they are
/// not frozen.
pub fn backward(
    head: &ConfidenceHead,
    prototypes: &ClassPrototypes,
    batch: &[(&[f64], usize)],
    lambda: f64,
    tau: f64,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(AcwError::Empty);
    }
    if prototypes.dim != head.dim {
        return Err(AcwError::DimensionMismatch {
            expected: head.dim,
            actual: prototypes.dim,
        });
    }
    if let Some(&(_, y)) = batch.iter().find(|(_, y)| *y >= prototypes.classes) {
        return Err(AcwError::MissingPrototype {
            label: y as u32,
            classes: prototypes.classes,
        });
    }
    let proto_len = (!prototypes.frozen).then_some(prototypes.rows().len());
    let partials: Vec<Result<BatchGradient>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = BatchGradient::zeros(head, proto_len);
            for &(x, y) in chunk {
                accumulate_sample(head, prototypes, x, y, lambda, tau, &mut g)?;
            }
            Ok(g)
        })
        .collect();
    let mut total = BatchGradient::zeros(head, proto_len);
    for p in partials {
        total.add(&p?);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok(total)
}

/// One modality's training input.
#[derive(Debug, Clone, Copy)]
pub struct TrainModality<'a> {
    pub embeddings: &'a EmbeddingSet,
    pub prototypes: &'a ClassPrototypes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over samples of the total loss summed over modalities.
    pub mean_loss: f64,
    pub mean_task_loss: f64,
    pub mean_confidence_loss: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub modalities: Vec<String>,
    pub heads: Vec<ConfidenceHead>,
    pub prototypes: Vec<ClassPrototypes>,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn head(&self, modality: &str) -> Option<&ConfidenceHead> {
        self.modalities
            .iter()
            .position(|m| m == modality)
            .map(|i| &self.heads[i])
    }
}

fn check_alignment(modalities: &[TrainModality<'_>]) -> Result<()> {
    let first = modalities.first().ok_or(AcwError::NoModalities)?.embeddings;
    if first.is_empty() {
        return Err(AcwError::Empty);
    }
    for m in modalities {
        let e = m.embeddings;
        if e.len() != first.len() {
            return Err(AcwError::Misaligned(format!(
                "'{}' has {} samples, '{}' has {}",
                first.modality,
                first.len(),
                e.modality,
                e.len()
            )));
        }
        if let Some(i) = (0..e.len()).find(|&i| e.labels[i] != first.labels[i]) {
            return Err(AcwError::Misaligned(format!(
                "sample {i} is labeled {} in '{}' but {} in '{}'",
                first.labels[i], first.modality, e.labels[i], e.modality
            )));
        }
        if m.prototypes.dim != e.dim {
            return Err(AcwError::DimensionMismatch {
                expected: e.dim,
                actual: m.prototypes.dim,
            });
        }
        if let Some(&l) = e.labels.iter().find(|&&l| l as usize >= m.prototypes.classes) {
            return Err(AcwError::MissingPrototype {
                label: l,
                classes: m.prototypes.classes,
            });
        }
    }
    Ok(())
}

/// Trains one confidence head per modality with mini-batch SGD.
///
/// Heads are initialized in modality order from a generator seeded with
/// `seed`, which then shuffles the sample order at the start of every epoch.
pub fn train(
    modalities: &[TrainModality<'_>],
    config: &AcwTrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_alignment(modalities)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heads: Vec<ConfidenceHead> = modalities
        .iter()
        .map(|m| ConfidenceHead::init(m.embeddings.dim, config.hidden, &mut rng))
        .collect();
    let mut prototypes: Vec<ClassPrototypes> = modalities
        .iter()
        .map(|m| {
            let mut p = m.prototypes.clone();
            p.frozen = !config.train_prototypes;
            p
        })
        .collect();
    let data: Vec<Vec<Vec<f64>>> = modalities.iter().map(|m| m.embeddings.rows_f64()).collect();
    let labels = &modalities[0].embeddings.labels;
    let n = labels.len();
    let n_mod = modalities.len() as f64;

    let mut lambda = config.lambda;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut sum_loss, mut sum_task, mut sum_conf) = (0.0, 0.0, 0.0);
        for idx in order.chunks(config.batch) {
            let mut batch_conf = 0.0;
            for (j, head) in heads.iter_mut().enumerate() {
                let batch: Vec<(&[f64], usize)> = idx
                    .iter()
                    .map(|&i| (data[j][i].as_slice(), labels[i] as usize))
                    .collect();
                let g = backward(head, &prototypes[j], &batch, lambda, config.temperature)?;
                let w = idx.len() as f64;
                sum_loss += g.loss * w;
                sum_task += g.task_loss * w;
                sum_conf += g.confidence_loss * w;
                batch_conf += g.confidence_loss;

                let step = |p: &mut [f64], d: &[f64]| {
                    p.iter_mut().zip(d).for_each(|(p, d)| *p -= config.lr * d)
                };
                step(&mut head.w1, &g.w1);
                step(&mut head.b1, &g.b1);
                step(&mut head.w2, &g.w2);
                head.b2 -= config.lr * g.b2;
                if let Some(gp) = &g.prototypes {
                    prototypes[j].step(gp, config.lr)?;
                }
            }
            if let Some(beta) = config.budget {
                if batch_conf / n_mod > beta {
                    lambda *= 1.01;
                } else {
                    lambda /= 1.01;
                }
            }
        }
        let mean = |s: f64| s / n as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: mean(sum_loss),
            mean_task_loss: mean(sum_task),
            mean_confidence_loss: mean(sum_conf),
            lambda,
        };
        if !stats.mean_loss.is_finite() {
            return Err(AcwError::NonFinite("training loss"));
        }
        history.push(stats);
    }
    Ok(TrainOutcome {
        modalities: modalities.iter().map(|m| m.embeddings.modality.clone()).collect(),
        heads,
        prototypes,
        history,
    })
}
