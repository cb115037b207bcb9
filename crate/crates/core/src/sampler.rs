//! NCE tuple generation, collision tracking and in-batch negative sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::mc;
use crate::model::{LatentModel, PointId};
use crate::rng::StreamRng;
use crate::stats::Moments;

/// One draw `(x, x⁺, x⁻_1..x⁻_k)` with its latent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NceTuple {
    pub anchor: PointId,
    pub positive: PointId,
    pub negatives: Vec<PointId>,
    pub anchor_class: usize,
    pub negative_classes: Vec<usize>,
    /// Sorted indices `i` with `negative_classes[i] == anchor_class`.
    pub collisions: Vec<usize>,
}

pub fn collisions_of(anchor_class: usize, negative_classes: &[usize]) -> Vec<usize> {
    negative_classes
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == anchor_class).then_some(i))
        .collect()
}

/// Precomputed samplers for a model.
///
/// The anchor class is drawn from `ρ` and `x, x⁺` i.i.d. from `D_c`. Each
/// negative is drawn from the joint law of `(c⁻, x⁻)`, i.e. point `x` with
/// probability `ρ(class(x)) · D_class(x)(x)`, which is the same as drawing
/// `c⁻ ∼ ρ` then `x⁻ ∼ D_{c⁻}` but costs one draw.
pub struct TupleSampler<'a> {
    model: &'a LatentModel,
    classes: WeightedAliasIndex<f64>,
    conditionals: Vec<WeightedAliasIndex<f64>>,
    joint: WeightedAliasIndex<f64>,
}

/// Positions (not ids) of one sampled tuple.
#[derive(Debug, Clone, Copy)]
pub struct DrawnAnchor {
    pub class: usize,
    pub anchor: usize,
    pub positive: usize,
}

fn alias(weights: Vec<f64>) -> WeightedAliasIndex<f64> {
    WeightedAliasIndex::new(weights).expect("validated distribution")
}

impl<'a> TupleSampler<'a> {
    pub fn new(model: &'a LatentModel) -> Self {
        let conditionals = (0..model.num_classes())
            .map(|c| {
                alias(
                    model
                        .conditional(c)
                        .iter()
                        .map(|&i| model.points()[i].prob)
                        .collect(),
                )
            })
            .collect();
        TupleSampler {
            model,
            classes: alias(model.prior().to_vec()),
            conditionals,
            joint: alias(model.marginals()),
        }
    }

    pub fn model(&self) -> &LatentModel {
        self.model
    }

    /// Samples a tuple into position buffers. `negatives` is overwritten.
    pub fn draw_into(&self, k: usize, rng: &mut StreamRng, negatives: &mut Vec<usize>) -> DrawnAnchor {
        let class = self.classes.sample(rng);
        let support = self.model.conditional(class);
        let anchor = support[self.conditionals[class].sample(rng)];
        let positive = support[self.conditionals[class].sample(rng)];
        negatives.clear();
        negatives.extend((0..k).map(|_| self.joint.sample(rng)));
        DrawnAnchor {
            class,
            anchor,
            positive,
        }
    }

    pub fn sample(&self, k: usize, rng: &mut StreamRng) -> NceTuple {
        let mut neg = Vec::with_capacity(k);
        let d = self.draw_into(k, rng, &mut neg);
        let points = self.model.points();
        let negative_classes: Vec<usize> = neg.iter().map(|&i| points[i].class).collect();
        NceTuple {
            anchor: points[d.anchor].id,
            positive: points[d.positive].id,
            negatives: neg.iter().map(|&i| points[i].id).collect(),
            anchor_class: d.class,
            collisions: collisions_of(d.class, &negative_classes),
            negative_classes,
        }
    }
}

pub fn sample_tuple(model: &LatentModel, k: usize, rng: &mut StreamRng) -> NceTuple {
    TupleSampler::new(model).sample(k, rng)
}

/// Monte-Carlo estimate of `Pr[∃ i: c⁻ᵢ = c]` with its binomial standard error.
pub fn collision_probability_mc(
    model: &LatentModel,
    k: usize,
    num_samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if num_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if k == 0 {
        return Ok((0.0, 0.0));
    }
    let classes = alias(model.prior().to_vec());
    let hits: u64 = mc::run_chunks(num_samples, seed, |rng, n| {
        let mut hits = 0u64;
        for _ in 0..n {
            let c = classes.sample(rng);
            // Only the indicator matters, so stop at the first collision.
            if (0..k).any(|_| classes.sample(rng) == c) {
                hits += 1;
            }
        }
        hits
    })
    .into_iter()
    .sum();
    let m = num_samples as f64;
    let p = hits as f64 / m;
    let stderr = (p * (1.0 - p) / (m - 1.0)).sqrt();
    Ok((p, stderr))
}

/// Sample mean and standard error of `|I|` over `num_samples` tuples.
pub fn collision_count_mc(model: &LatentModel, k: usize, num_samples: u64, seed: u64) -> Moments {
    let classes = alias(model.prior().to_vec());
    let mut total = Moments::default();
    for part in mc::run_chunks(num_samples, seed, |rng, n| {
        let mut m = Moments::default();
        for _ in 0..n {
            let c = classes.sample(rng);
            m.push((0..k).filter(|_| classes.sample(rng) == c).count() as f64);
        }
        m
    }) {
        total.merge(&part);
    }
    total
}

/// `B` positively aligned pairs `(x, x⁺, class)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPairs {
    pairs: Vec<(PointId, PointId, usize)>,
}

impl BatchPairs {
    pub fn new(pairs: Vec<(PointId, PointId, usize)>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a batch needs at least 2 pairs, got {}",
                pairs.len()
            )));
        }
        Ok(BatchPairs { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(PointId, PointId, usize)] {
        &self.pairs
    }

    pub fn class_of(&self, pair: usize) -> usize {
        self.pairs[pair].2
    }

    pub fn point(&self, slot: Slot) -> PointId {
        let (x, xp, _) = self.pairs[slot.pair];
        if slot.positive {
            xp
        } else {
            x
        }
    }
}

/// A member of a batch: the anchor (`positive == false`) or positive of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub pair: usize,
    pub positive: bool,
}

impl Slot {
    /// Index in `0..2B` with anchors at even and positives at odd positions.
    pub fn flat(self) -> usize {
        2 * self.pair + self.positive as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NegativeDraw {
    Picked(Vec<Slot>),
    /// Not enough candidates of other classes; the batch gets no update.
    Skip,
}

/// Draws `k` distinct negatives for pair `i` from `C_i = {x_j, x_j⁺ : j ≠ i}`,
/// uniformly without replacement.
pub fn sample_negatives_from_batch(
    batch: &BatchPairs,
    i: usize,
    k: usize,
    collision_free: bool,
    rng: &mut StreamRng,
) -> Result<NegativeDraw> {
    let b = batch.len();
    if i >= b {
        return Err(Error::InvalidArgument(format!("pair index {i} outside batch of {b}")));
    }
    if k == 0 || k > 2 * (b - 1) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must satisfy 1 ≤ k ≤ 2(B−1) = {}",
            2 * (b - 1)
        )));
    }
    let anchor_class = batch.class_of(i);
    let mut pool: Vec<Slot> = (0..b)
        .filter(|&j| j != i && !(collision_free && batch.class_of(j) == anchor_class))
        .flat_map(|j| [Slot { pair: j, positive: false }, Slot { pair: j, positive: true }])
        .collect();
    if pool.len() < k {
        return Ok(NegativeDraw::Skip);
    }
    let (picked, _) = pool.partial_shuffle(rng, k);
    Ok(NegativeDraw::Picked(picked.to_vec()))
}

/// Negatives for every pair of a batch, or `None` when any pair must skip.
pub fn sample_batch_negatives(
    batch: &BatchPairs,
    k: usize,
    collision_free: bool,
    rng: &mut StreamRng,
) -> Result<Option<Vec<Vec<Slot>>>> {
    let mut all = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        match sample_negatives_from_batch(batch, i, k, collision_free, rng)? {
            NegativeDraw::Picked(s) => all.push(s),
            NegativeDraw::Skip => return Ok(None),
        }
    }
    Ok(Some(all))
}

/// One epoch of positive pairs, chunked into batches of `batch_size`.
///
/// Within each class the points are shuffled and paired consecutively (an
/// odd leftover is dropped); all pairs are then shuffled together and a
/// final short chunk is dropped.
pub fn pair_epoch(
    corpus: &[Vec<PointId>],
    batch_size: usize,
    rng: &mut StreamRng,
) -> Result<Vec<BatchPairs>> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument("batch size must be at least 2".into()));
    }
    let mut pairs = Vec::new();
    for (class, points) in corpus.iter().enumerate() {
        if points.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "class {class} has {} points; pairing needs at least 2",
                points.len()
            )));
        }
        let mut shuffled = points.clone();
        shuffled.shuffle(rng);
        pairs.extend(shuffled.chunks_exact(2).map(|p| (p[0], p[1], class)));
    }
    pairs.shuffle(rng);
    pairs
        .chunks_exact(batch_size)
        .map(|chunk| BatchPairs::new(chunk.to_vec()))
        .collect()
}

/// Uniform draw from `0..n`; shared by callers that need raw indices.
pub fn uniform_index(rng: &mut StreamRng, n: usize) -> usize {
    rng.random_range(0..n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Payload, Point};
    use crate::rng;
    use std::collections::{BTreeMap, HashSet};

    fn uniform_model(n: usize, support: usize) -> LatentModel {
        let mut points = Vec::new();
        for c in 0..n {
            for j in 0..support {
                points.push(Point {
                    id: (c * support + j) as u64,
                    class: c,
                    prob: 1.0 / support as f64,
                    payload: Payload::Opaque(String::new()),
                });
            }
        }
        LatentModel::new(vec![1.0 / n as f64; n], points).unwrap()
    }

    #[test]
    fn single_class_always_collides() {
        let m = uniform_model(1, 2);
        let mut r = rng::stream(1, 0);
        for _ in 0..50 {
            let t = sample_tuple(&m, 4, &mut r);
            assert_eq!(t.collisions, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn zero_negatives() {
        let m = uniform_model(3, 2);
        let t = sample_tuple(&m, 0, &mut rng::stream(1, 0));
        assert!(t.negatives.is_empty() && t.collisions.is_empty());
    }

    #[test]
    fn tuple_invariants_hold() {
        let m = uniform_model(4, 3);
        let s = TupleSampler::new(&m);
        let mut r = rng::stream(5, 0);
        for _ in 0..1000 {
            let t = s.sample(3, &mut r);
            assert_eq!(t.negatives.len(), t.negative_classes.len());
            assert_eq!(t.collisions, collisions_of(t.anchor_class, &t.negative_classes));
            assert_eq!(m.point(t.anchor).unwrap().class, t.anchor_class);
            assert_eq!(m.point(t.positive).unwrap().class, t.anchor_class);
            for (id, c) in t.negatives.iter().zip(&t.negative_classes) {
                assert_eq!(m.point(*id).unwrap().class, *c);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = uniform_model(5, 2);
        let a: Vec<NceTuple> = {
            let mut r = rng::stream(42, 3);
            (0..20).map(|_| sample_tuple(&m, 3, &mut r)).collect()
        };
        let mut r = rng::stream(42, 3);
        let b: Vec<NceTuple> = (0..20).map(|_| sample_tuple(&m, 3, &mut r)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn collision_rate_two_classes() {
        let m = uniform_model(2, 1);
        let s = TupleSampler::new(&m);
        let mut r = rng::stream(11, 0);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| !s.sample(1, &mut r).collisions.is_empty()).count();
        let p = hits as f64 / n as f64;
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn collision_probability_edge_cases() {
        let m = uniform_model(3, 1);
        assert_eq!(collision_probability_mc(&m, 0, 100, 1).unwrap(), (0.0, 0.0));
        let one = uniform_model(1, 2);
        let (p, se) = collision_probability_mc(&one, 3, 1000, 1).unwrap();
        assert_eq!((p, se), (1.0, 0.0));
        assert!(collision_probability_mc(&m, 1, 1, 1).is_err());
    }

    #[test]
    fn mean_collision_count_matches_k_sum_rho_squared() {
        let prior = [0.5, 0.3, 0.2];
        let points = (0..3)
            .map(|c| Point { id: c as u64, class: c, prob: 1.0, payload: Payload::Opaque(String::new()) })
            .collect();
        let m = LatentModel::new(prior.to_vec(), points).unwrap();
        let k = 7;
        let est = collision_count_mc(&m, k, 200_000, 3);
        let expect = k as f64 * prior.iter().map(|p| p * p).sum::<f64>();
        assert!((est.mean - expect).abs() < 3.0 * est.stderr(), "{} vs {expect}", est.mean);
    }

    #[test]
    fn conditional_collision_count_matches_identity() {
        // E[|I| | I ≠ ∅, c] = kρ(c)/τ_k(c).
        let prior = [0.6, 0.4];
        let k = 4;
        let mut r = rng::stream(8, 0);
        let classes = alias(prior.to_vec());
        let mut per_class = [Moments::default(), Moments::default()];
        for _ in 0..400_000 {
            let c = classes.sample(&mut r);
            let t = (0..k).filter(|_| classes.sample(&mut r) == c).count();
            if t > 0 {
                per_class[c].push(t as f64);
            }
        }
        for c in 0..2 {
            let tau_c = 1.0 - (1.0 - prior[c]).powi(k);
            let expect = k as f64 * prior[c] / tau_c;
            let m = &per_class[c];
            assert!((m.mean - expect).abs() < 3.0 * m.stderr(), "class {c}: {} vs {expect}", m.mean);
        }
    }

    fn batch(classes: &[usize]) -> BatchPairs {
        BatchPairs::new(
            classes
                .iter()
                .enumerate()
                .map(|(j, &c)| (2 * j as u64, 2 * j as u64 + 1, c))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn full_pool_is_taken_deterministically() {
        let b = batch(&[0, 1]);
        let mut r = rng::stream(1, 0);
        match sample_negatives_from_batch(&b, 0, 2, false, &mut r).unwrap() {
            NegativeDraw::Picked(mut s) => {
                s.sort();
                assert_eq!(s, vec![Slot { pair: 1, positive: false }, Slot { pair: 1, positive: true }]);
            }
            NegativeDraw::Skip => panic!("unexpected skip"),
        }
    }

    #[test]
    fn single_class_batch_skips_when_collision_free() {
        let b = batch(&[3, 3, 3, 3]);
        let mut r = rng::stream(1, 0);
        for k in 1..=6 {
            assert_eq!(sample_negatives_from_batch(&b, 0, k, true, &mut r).unwrap(), NegativeDraw::Skip);
        }
        assert!(sample_batch_negatives(&b, 1, true, &mut r).unwrap().is_none());
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let b = batch(&[0, 1, 2]);
        let mut r = rng::stream(1, 0);
        assert!(matches!(sample_negatives_from_batch(&b, 0, 0, false, &mut r), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_negatives_from_batch(&b, 0, 5, false, &mut r), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn subsets_are_uniform() {
        let b = batch(&[0, 1, 2]);
        let mut r = rng::stream(21, 0);
        let n = 1_000_000;
        let mut counts: BTreeMap<Vec<Slot>, usize> = BTreeMap::new();
        for _ in 0..n {
            let NegativeDraw::Picked(mut s) = sample_negatives_from_batch(&b, 0, 2, false, &mut r).unwrap() else {
                panic!()
            };
            s.sort();
            *counts.entry(s).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (s, c) in counts {
            let f = c as f64 / n as f64;
            assert!((f - p).abs() < 3.0 * sigma, "{s:?}: {f}");
        }
    }

    #[test]
    fn negatives_are_distinct_and_exclude_own_pair() {
        let b = batch(&[0, 1, 0, 2, 1, 0]);
        let mut r = rng::stream(4, 0);
        for _ in 0..2000 {
            for i in 0..b.len() {
                for cf in [false, true] {
                    if let NegativeDraw::Picked(s) = sample_negatives_from_batch(&b, i, 3, cf, &mut r).unwrap() {
                        let set: HashSet<Slot> = s.iter().copied().collect();
                        assert_eq!(set.len(), 3);
                        assert!(s.iter().all(|x| x.pair != i));
                        if cf {
                            assert!(s.iter().all(|x| b.class_of(x.pair) != b.class_of(i)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pairing_rules() {
        let mut r = rng::stream(2, 0);
        let one = pair_epoch(&[vec![10, 11], vec![12, 13]], 2, &mut r).unwrap();
        assert_eq!(one.len(), 1);
        let mut ids: Vec<(u64, u64)> = one[0].pairs().iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect();
        ids.sort();
        assert_eq!(ids, vec![(10, 11), (12, 13)]);

        let five = pair_epoch(&[vec![1, 2, 3, 4, 5]], 2, &mut r).unwrap();
        assert_eq!(five.len(), 1);
        assert_eq!(five[0].len(), 2);

        let corpus: Vec<Vec<u64>> = (0..3).map(|c| (0..200).map(|i| c * 1000 + i).collect()).collect();
        let batches = pair_epoch(&corpus, 100, &mut r).unwrap();
        assert_eq!(batches.len(), 3);
        for b in &batches {
            for &(x, xp, c) in b.pairs() {
                assert_eq!(x / 1000, c as u64);
                assert_eq!(xp / 1000, c as u64);
            }
        }

        assert!(matches!(pair_epoch(&[vec![1]], 2, &mut r), Err(Error::DegenerateInput(_))));
    }
}
