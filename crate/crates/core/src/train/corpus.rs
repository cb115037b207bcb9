//! Labeled sentence corpora for the trainer.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::model::PointId;
use crate::rng;

/// Token reserved for rare or unseen words.
pub const UNK: u32 = 0;

/// Default count below which a word maps to [`UNK`].
pub const DEFAULT_MIN_COUNT: usize = 50;

/// Sentences with class labels over a shared vocabulary of `vocab` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: usize,
    pub num_classes: usize,
    pub sentences: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sentence indices grouped by class, usable as point ids for pairing.
    pub fn by_class(&self) -> Vec<Vec<PointId>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i as PointId);
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_classes];
        for &c in &self.labels {
            out[c] += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub test: Corpus,
}

/// Per class, the first `⌊4n/5⌋` sentences go to train and the rest to test.
fn split(vocab: usize, num_classes: usize, per_class: Vec<Vec<Vec<u32>>>) -> SplitCorpus {
    let empty = || Corpus {
        vocab,
        num_classes,
        sentences: Vec::new(),
        labels: Vec::new(),
    };
    let (mut train, mut test) = (empty(), empty());
    for (c, sentences) in per_class.into_iter().enumerate() {
        let cut = sentences.len() * 4 / 5;
        for (i, s) in sentences.into_iter().enumerate() {
            let part = if i < cut { &mut train } else { &mut test };
            part.sentences.push(s);
            part.labels.push(c);
        }
    }
    SplitCorpus { train, test }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub sentences_per_class: usize,
    pub tokens_per_sentence: usize,
    pub vocab_per_class: usize,
    pub shared_vocab: usize,
    pub seed: u64,
}

/// Probability that a token comes from the sentence's own class block.
pub const OWN_BLOCK_SHARE: f64 = 0.7;

/// Token layout: `0` is [`UNK`] (never emitted), class `c` owns
/// `1 + c·V .. 1 + (c+1)·V`, and the shared block follows. Own-block tokens
/// follow a Zipf(1) law over the block; shared tokens are uniform.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SplitCorpus> {
    let SyntheticSpec {
        num_classes: n,
        sentences_per_class,
        tokens_per_sentence,
        vocab_per_class: v,
        shared_vocab,
        seed,
    } = *spec;
    if n == 0 || sentences_per_class == 0 || tokens_per_sentence == 0 || v == 0 {
        return Err(Error::InvalidArgument("synthetic corpus counts must be positive".into()));
    }
    let zipf = Zipf::new(v as f64, 1.0).map_err(|e| Error::InvalidArgument(format!("zipf: {e}")))?;
    let shared_start = 1 + n * v;
    let mut r = rng::stream(seed, 0);
    // One random relabelling of ranks per class so blocks are not aligned.
    let perms: Vec<Vec<u32>> = (0..n)
        .map(|c| {
            let mut p: Vec<u32> = (0..v as u32).map(|j| 1 + (c * v) as u32 + j).collect();
            p.shuffle(&mut r);
            p
        })
        .collect();
    let per_class = (0..n)
        .map(|c| {
            (0..sentences_per_class)
                .map(|_| {
                    (0..tokens_per_sentence)
                        .map(|_| {
                            if shared_vocab == 0 || r.random_bool(OWN_BLOCK_SHARE) {
                                perms[c][zipf.sample(&mut r) as usize - 1]
                            } else {
                                (shared_start + r.random_range(0..shared_vocab)) as u32
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(split(shared_start + shared_vocab, n, per_class))
}

/// Parses `<class>\t<word word ...>` lines. Class labels are mapped to
/// `0..N` in order of first appearance; words seen fewer than `min_count`
/// times become [`UNK`]. Each class is shuffled with `seed` before the
/// 80/20 split.
pub fn parse_corpus(text: &str, origin: &str, min_count: usize, seed: u64) -> Result<SplitCorpus> {
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut classes: HashMap<&str, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `<class>\\t<tokens>`"))?;
        let words: Vec<&str> = body.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::parse(origin, i + 1, "empty sentence"));
        }
        let next = classes.len();
        let c = *classes.entry(label.trim()).or_insert(next);
        rows.push((c, words));
    }
    if rows.is_empty() {
        return Err(Error::DegenerateInput(format!("{origin}: no sentences")));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (_, words) in &rows {
        for w in words {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut per_class = vec![Vec::new(); classes.len()];
    for (c, words) in &rows {
        let sentence = words
            .iter()
            .map(|w| {
                if counts[w] < min_count {
                    UNK
                } else {
                    let next = ids.len() as u32 + 1;
                    *ids.entry(w).or_insert(next)
                }
            })
            .collect();
        per_class[*c].push(sentence);
    }
    let mut r = rng::stream(seed, 0);
    for sentences in &mut per_class {
        sentences.shuffle(&mut r);
    }
    Ok(split(ids.len() + 1, classes.len(), per_class))
}

pub fn load_corpus(path: &Path, min_count: usize, seed: u64) -> Result<SplitCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, &path.display().to_string(), min_count, seed)
}
