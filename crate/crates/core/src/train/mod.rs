//! Desk-scale contrastive trainer for bag-of-tokens representations and the
//! two downstream evaluations.

pub mod adam;
pub mod corpus;
pub mod head;
pub mod nce;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Embedding, RepKind, Representation};
use crate::rng;
use crate::sampler::{pair_epoch, sample_batch_negatives};

use adam::Adam;
pub use corpus::{Corpus, SplitCorpus, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub num_negatives: usize,
    pub temperature: f64,
    pub nce_epochs: usize,
    pub head_epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: Option<f64>,
    pub embedding_dim: usize,
    pub collision_free: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk defaults: embedding dimension 64, everything else as in the
    /// reference hyperparameters.
    pub fn new(batch_size: usize, num_negatives: usize) -> Result<Self> {
        let cfg = TrainConfig {
            batch_size,
            num_negatives,
            temperature: 1.0,
            nce_epochs: 50,
            head_epochs: 50,
            learning_rate: 0.01,
            grad_clip_norm: Some(2.5),
            embedding_dim: 64,
            collision_free: false,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reference-scale preset with 768-dimensional embeddings.
    pub fn paper_nlp(batch_size: usize, num_negatives: usize) -> Result<Self> {
        let mut cfg = Self::new(batch_size, num_negatives)?;
        cfg.embedding_dim = 768;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2".into()));
        }
        if self.num_negatives == 0 || self.num_negatives > 2 * (self.batch_size - 1) {
            return Err(Error::InvalidArgument(format!(
                "k = {} must satisfy 1 ≤ k ≤ 2(B−1) = {}",
                self.num_negatives,
                2 * (self.batch_size - 1)
            )));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.learning_rate) || self.grad_clip_norm.is_some_and(|c| !positive(c)) {
            return Err(Error::InvalidArgument("learning rate and clip norm must be positive".into()));
        }
        if self.nce_epochs == 0 || self.head_epochs == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidArgument("epochs and dimension must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean batch loss of every epoch (NaN is never recorded: epochs with no
    /// update abort the run).
    pub epoch_losses: Vec<f64>,
    pub skipped_batches: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub mean_classifier_accuracy: f64,
    pub linear_head_accuracy: f64,
    pub final_nce_loss: f64,
    pub skipped_batches: usize,
    pub epochs_run: usize,
    pub head_selection_epoch: usize,
    pub epoch_losses: Vec<f64>,
}

fn embedding_of(rep: &Representation) -> Result<&Embedding> {
    match rep.kind() {
        RepKind::BagOfTokens(e) => Ok(e),
        RepKind::Table(_) => Err(Error::InvalidArgument("expected a bag-of-tokens representation".into())),
    }
}

/// `f(x)` for every sentence of `corpus`.
pub fn features(rep: &Representation, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    let emb = embedding_of(rep)?;
    corpus.sentences.iter().map(|s| emb.embed_tokens(s)).collect()
}

/// Embedding rows drawn i.i.d. uniform on `[−1/√d, 1/√d]`.
pub fn init_embedding(vocab: usize, dim: usize, rng: &mut rng::StreamRng) -> Result<Embedding> {
    let a = 1.0 / (dim as f64).sqrt();
    let data = (0..vocab * dim).map(|_| rng.random_range(-a..=a)).collect();
    Embedding::new(vocab, dim, data)
}

/// Trains a bag-of-tokens representation on the batch NCE objective.
pub fn train_nce(corpus: &Corpus, config: &TrainConfig) -> Result<(Representation, TrainLog)> {
    config.validate()?;
    let by_class = corpus.by_class();
    let mut r = rng::stream(config.seed, 0);
    let mut emb = init_embedding(corpus.vocab, config.embedding_dim, &mut r)?;
    let mut grad = vec![0.0; emb.as_slice().len()];
    let mut opt = Adam::new(grad.len(), config.learning_rate, config.grad_clip_norm);
    let mut log = TrainLog {
        epoch_losses: Vec::with_capacity(config.nce_epochs),
        skipped_batches: 0,
        epochs_run: 0,
    };
    for epoch in 0..config.nce_epochs {
        let batches = pair_epoch(&by_class, config.batch_size, &mut r)?;
        if batches.is_empty() {
            return Err(Error::DegenerateInput(format!(
                "corpus yields fewer than {} pairs",
                config.batch_size
            )));
        }
        let mut total = 0.0;
        let mut used = 0usize;
        for batch in &batches {
            let Some(negatives) = sample_batch_negatives(batch, config.num_negatives, config.collision_free, &mut r)?
            else {
                log.skipped_batches += 1;
                continue;
            };
            if config.collision_free {
                debug_assert!(negatives.iter().enumerate().all(|(i, negs)| negs
                    .iter()
                    .all(|s| batch.class_of(s.pair) != batch.class_of(i))));
            }
            let sentences: Vec<&[u32]> = (0..2 * batch.len())
                .map(|flat| {
                    let slot = crate::sampler::Slot {
                        pair: flat / 2,
                        positive: flat % 2 == 1,
                    };
                    corpus.sentences[batch.point(slot) as usize].as_slice()
                })
                .collect();
            total += nce::batch_nce_loss_and_grad(&emb, &sentences, &negatives, config.temperature, &mut grad)?;
            opt.step(emb.as_mut_slice(), &mut grad)?;
            used += 1;
        }
        if used == 0 {
            return Err(Error::AllBatchesSkipped { epoch });
        }
        log.epoch_losses.push(total / used as f64);
        log.epochs_run += 1;
    }
    Ok((Representation::bag_of_tokens(emb), log))
}

/// Class-mean rows computed on `train`, each `N × d`.
pub fn mean_classifier(rep: &Representation, train: &Corpus) -> Result<Vec<Vec<f64>>> {
    let feats = features(rep, train)?;
    let mut sums = vec![vec![0.0; rep.dim()]; train.num_classes];
    let mut counts = vec![0usize; train.num_classes];
    for (x, &c) in feats.iter().zip(&train.labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(x) {
            *s += v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::DegenerateInput(format!("class {c} has no training sentences")));
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

/// Test accuracy of the class-mean classifier built on `train`.
pub fn eval_mean_classifier(rep: &Representation, train: &Corpus, test: &Corpus) -> Result<f64> {
    let w = mean_classifier(rep, train)?;
    Ok(head::accuracy(&w, &features(rep, test)?, &test.labels))
}

/// Softmax cross-entropy of `weights` on a labeled feature set.
pub fn softmax_loss(weights: &[Vec<f64>], feats: &[Vec<f64>], labels: &[usize]) -> f64 {
    let flat: Vec<f64> = weights.iter().flatten().copied().collect();
    let mut scratch = vec![0.0; flat.len()];
    let all: Vec<usize> = (0..feats.len()).collect();
    head::head_loss_and_grad(&flat, weights.len(), feats, labels, &all, &mut scratch)
}

/// Trains a linear head on frozen features of `train`; rows are `N × d`.
pub fn train_linear_head(
    rep: &Representation,
    train: &Corpus,
    config: &TrainConfig,
) -> Result<(Vec<Vec<f64>>, head::HeadResult)> {
    let feats = features(rep, train)?;
    let mut r = rng::stream(config.seed, 1);
    let res = head::train_head(
        &feats,
        &train.labels,
        train.num_classes,
        config.head_epochs,
        config.batch_size,
        config.learning_rate,
        config.grad_clip_norm,
        &mut r,
    )?;
    let rows = res.weights.chunks(rep.dim()).map(<[f64]>::to_vec).collect();
    Ok((rows, res))
}

/// Full pipeline: NCE training, mean classifier, trained head.
pub fn run(split: &SplitCorpus, config: &TrainConfig) -> Result<TrainResult> {
    let (rep, log) = train_nce(&split.train, config)?;
    let mean_acc = eval_mean_classifier(&rep, &split.train, &split.test)?;
    let (rows, head_res) = train_linear_head(&rep, &split.train, config)?;
    let head_acc = head::accuracy(&rows, &features(&rep, &split.test)?, &split.test.labels);
    Ok(TrainResult {
        mean_classifier_accuracy: mean_acc,
        linear_head_accuracy: head_acc,
        final_nce_loss: *log.epoch_losses.last().expect("at least one epoch"),
        skipped_batches: log.skipped_batches,
        epochs_run: log.epochs_run,
        head_selection_epoch: head_res.selected_epoch,
        epoch_losses: log.epoch_losses,
    })
}
