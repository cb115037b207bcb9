//! The paired-class world where more negatives first hurt and then help.
//!
//! `N` classes (even) with a uniform prior; class `c` has two equiprobable
//! points with ids `2c` and `2c + 1`. Two representations compete:
//!
//! * `f1` sends every point of classes `2i` and `2i + 1` to `e_i` in
//!   dimension `N/2`, so it cannot separate paired classes;
//! * `f2` sends point `2c` to `(1 + ε)e_c` and `2c + 1` to `(1 − ε)e_c` in
//!   dimension `N`, separating every class at the cost of some spread.
//!
//! Under the hinge loss `f1` has `L_unsup = 1 − (1 − 2/N)^k` and `f2` is
//! bracketed by explicit envelopes. Monte Carlo fills in `f2` in between.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::{self, GramTable, LossKind};
use crate::mc;
use crate::model::{LatentModel, Payload, Point, Representation};
use crate::rng;
use crate::sampler::TupleSampler;
use crate::stats::Moments;
use crate::theory;

/// Largest admissible spread, `(√3 − 1)/2`.
pub fn epsilon_max() -> f64 {
    (3f64.sqrt() - 1.0) / 2.0
}

fn check_params(n: usize, epsilon: f64) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("N must be even and ≥ 2 (got {n})")));
    }
    if !(epsilon > 0.0 && epsilon <= epsilon_max()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, {:.6}] (got {epsilon})",
            epsilon_max()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExampleWorld {
    num_classes: usize,
    epsilon: f64,
    model: LatentModel,
    f1: Representation,
    f2: Representation,
}

impl ExampleWorld {
    pub fn new(num_classes: usize, epsilon: f64) -> Result<Self> {
        check_params(num_classes, epsilon)?;
        let n = num_classes;
        let points = (0..2 * n as u64)
            .map(|id| Point {
                id,
                class: (id / 2) as usize,
                prob: 0.5,
                payload: Payload::Opaque(format!("x{}^{}", id % 2 + 1, id / 2)),
            })
            .collect();
        let model = LatentModel::new(vec![1.0 / n as f64; n], points)?;
        let basis = |dim: usize, i: usize, scale: f64| {
            let mut v = vec![0.0; dim];
            v[i] = scale;
            v
        };
        let f1 = Representation::table(
            n / 2,
            (0..2 * n).map(|id| (id as u64, basis(n / 2, id / 4, 1.0))),
        )?;
        let f2 = Representation::table(
            n,
            (0..2 * n).map(|id| {
                let s = if id % 2 == 0 { 1.0 + epsilon } else { 1.0 - epsilon };
                (id as u64, basis(n, id / 2, s))
            }),
        )?;
        Ok(ExampleWorld {
            num_classes,
            epsilon,
            model,
            f1,
            f2,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn model(&self) -> &LatentModel {
        &self.model
    }

    pub fn f1(&self) -> &Representation {
        &self.f1
    }

    pub fn f2(&self) -> &Representation {
        &self.f2
    }
}

/// `1 − L(f1) = (1 − 2/N)^k`, kept separate to avoid cancellation.
pub fn f1_nce_complement(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    (k as f64 * (-2.0 / n as f64).ln_1p()).exp()
}

/// Hinge `L^{(k)}_unsup(f1) = 1 − (1 − 2/N)^k`.
pub fn f1_nce_closed_form(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    -(k as f64 * (-2.0 / n as f64).ln_1p()).exp_m1()
}

/// `(L(f1) − τ_k)/(1 − τ_k)` evaluated as
/// `((1−1/N)^k − (1−2/N)^k)/(1−1/N)^k`.
pub fn f1_normalized_excess(n: usize, k: usize) -> f64 {
    let prior = vec![1.0 / n as f64; n];
    let miss = theory::tau_complement(&prior, k);
    (miss - f1_nce_complement(n, k)) / miss
}

/// Hinge envelope `(lower, upper)` for `L^{(k)}_unsup(f2)`.
pub fn f2_nce_bounds(n: usize, k: usize, epsilon: f64) -> Result<(f64, f64)> {
    check_params(n, epsilon)?;
    let prior = vec![1.0 / n as f64; n];
    let tau = theory::tau(&prior, k);
    let miss = theory::tau_complement(&prior, k);
    let spread = epsilon * epsilon / 4.0 + epsilon / 2.0;
    let upper = miss * spread + tau * (1.0 + epsilon);
    let single = if k == 0 {
        0.0
    } else {
        k as f64 / n as f64 * ((k - 1) as f64 * (-1.0 / n as f64).ln_1p()).exp()
    };
    let lower = tau + miss * epsilon * epsilon / 4.0 + epsilon / 2.0 * (1.0 - single);
    Ok((lower, upper))
}

/// Hinge mean-classifier losses `(L^μ_sup(f1), L^μ_sup(f2)) = (1, ε/2)`.
pub fn supervised_losses(n: usize, epsilon: f64) -> Result<(f64, f64)> {
    check_params(n, epsilon)?;
    Ok((1.0, epsilon / 2.0))
}

/// Scan grid: every `k` up to `2N`, then steps of ×1.1, always ending at `k_max`.
pub fn scan_ks(n: usize, k_max: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (1..=k_max.min(2 * n)).collect();
    let mut k = 2 * n;
    while k < k_max {
        k = ((k as f64 * 1.1).ceil() as usize).max(k + 1).min(k_max);
        ks.push(k);
    }
    ks
}

/// Sample means of both representations' NCE losses on shared tuples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedEstimate {
    pub k: usize,
    pub f1: f64,
    pub f1_stderr: f64,
    pub f2: f64,
    pub f2_stderr: f64,
}

/// Monte Carlo of `L^{(k)}_unsup` for `f1` and `f2` on the same tuples.
pub fn estimate_pair(
    world: &ExampleWorld,
    k: usize,
    kind: LossKind,
    num_samples: u64,
    seed: u64,
) -> Result<PairedEstimate> {
    if num_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let g1 = GramTable::new(&world.model, &world.f1)?;
    let g2 = GramTable::new(&world.model, &world.f2)?;
    let sampler = TupleSampler::new(&world.model);
    let parts = mc::run_chunks(num_samples, seed, |rng, m| {
        let mut a = Moments::default();
        let mut b = Moments::default();
        let mut negatives = Vec::with_capacity(k);
        let mut v1 = Vec::with_capacity(k);
        let mut v2 = Vec::with_capacity(k);
        for _ in 0..m {
            let d = sampler.draw_into(k, rng, &mut negatives);
            let p1 = g1.get(d.anchor, d.positive);
            let p2 = g2.get(d.anchor, d.positive);
            v1.clear();
            v2.clear();
            for &j in &negatives {
                v1.push(p1 - g1.get(d.anchor, j));
                v2.push(p2 - g2.get(d.anchor, j));
            }
            a.push(kind.eval(&v1));
            b.push(kind.eval(&v2));
        }
        (a, b)
    });
    let (mut a, mut b) = (Moments::default(), Moments::default());
    for (x, y) in &parts {
        a.merge(x);
        b.merge(y);
    }
    Ok(PairedEstimate {
        k,
        f1: a.mean,
        f1_stderr: a.stderr(),
        f2: b.mean,
        f2_stderr: b.stderr(),
    })
}

/// Seed used for the tuples at one scanned `k`.
pub fn scan_seed(seed: u64, k: usize) -> u64 {
    rng::mix_seed(&[seed, k as u64])
}

/// One row of `figure2.csv`. Closed forms are `None` for the logistic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Row {
    pub k: usize,
    pub f1_closed: Option<f64>,
    pub f2_lower: Option<f64>,
    pub f2_upper: Option<f64>,
    pub f1_mc: f64,
    pub f1_mc_stderr: f64,
    pub f2_mc: f64,
    pub f2_mc_stderr: f64,
}

pub const FIGURE2_HEADER: &str = "k,f1_closed,f2_lower,f2_upper,f1_mc,f1_mc_stderr,f2_mc,f2_mc_stderr";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanParams {
    pub num_classes: usize,
    pub epsilon: f64,
    pub k_max: usize,
    pub samples: u64,
    pub seed: u64,
    pub kind: LossKind,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            num_classes: 40,
            epsilon: 0.35,
            k_max: 600,
            samples: 1_000_000,
            seed: 0,
            kind: LossKind::Hinge,
        }
    }
}

/// Evaluates every scanned `k`, in increasing order of `k`.
pub fn figure2_rows(p: &ScanParams) -> Result<Vec<Figure2Row>> {
    let world = ExampleWorld::new(p.num_classes, p.epsilon)?;
    if p.k_max < 2 {
        return Err(Error::InvalidArgument("k_max must be at least 2".into()));
    }
    let hinge = p.kind == LossKind::Hinge;
    scan_ks(p.num_classes, p.k_max)
        .into_par_iter()
        .map(|k| {
            let est = estimate_pair(&world, k, p.kind, p.samples, scan_seed(p.seed, k))?;
            let bounds = f2_nce_bounds(p.num_classes, k, p.epsilon)?;
            Ok(Figure2Row {
                k,
                f1_closed: hinge.then(|| f1_nce_closed_form(p.num_classes, k)),
                f2_lower: hinge.then_some(bounds.0),
                f2_upper: hinge.then_some(bounds.1),
                f1_mc: est.f1,
                f1_mc_stderr: est.f1_stderr,
                f2_mc: est.f2,
                f2_mc_stderr: est.f2_stderr,
            })
        })
        .collect()
}

pub fn figure2_csv(rows: &[Figure2Row]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    let mut out = format!("{}\n{FIGURE2_HEADER}\n", crate::csvio::SCHEMA_LINE);
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.k,
            opt(r.f1_closed),
            opt(r.f2_lower),
            opt(r.f2_upper),
            r.f1_mc,
            r.f1_mc_stderr,
            r.f2_mc,
            r.f2_mc_stderr
        ));
    }
    out
}

pub fn emit_figure2_data(p: &ScanParams, out_path: &Path) -> Result<Vec<Figure2Row>> {
    let rows = figure2_rows(p)?;
    crate::csvio::write_atomic(out_path, figure2_csv(&rows).as_bytes())?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    /// `L(f1) > L(f2)` beyond 3σ, so `f2` would be selected.
    Positive,
    Negative,
    Unresolved,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Unresolved => "?",
        })
    }
}

/// Confidence-aware sign of `L(f1) − L(f2)` at each scanned `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingScan {
    pub points: Vec<(usize, f64, f64, Sign)>,
    /// `(k_a, k_b)`: consecutive confident points of opposite sign.
    pub crossings: Vec<(usize, usize)>,
}

impl CrossingScan {
    pub fn unresolved(&self) -> Vec<usize> {
        self.points
            .iter()
            .filter(|p| p.3 == Sign::Unresolved)
            .map(|p| p.0)
            .collect()
    }
}

/// Builds the sign sequence from rows. With closed forms available the `f1`
/// side is exact; otherwise both sides are sampled and their errors combined.
pub fn crossings_from_rows(rows: &[Figure2Row]) -> CrossingScan {
    let mut points = Vec::with_capacity(rows.len());
    for r in rows {
        let (diff, sigma) = match r.f1_closed {
            Some(f1) => (f1 - r.f2_mc, r.f2_mc_stderr),
            None => (
                r.f1_mc - r.f2_mc,
                (r.f1_mc_stderr.powi(2) + r.f2_mc_stderr.powi(2)).sqrt(),
            ),
        };
        let sign = if diff > 3.0 * sigma {
            Sign::Positive
        } else if diff < -3.0 * sigma {
            Sign::Negative
        } else {
            Sign::Unresolved
        };
        points.push((r.k, diff, sigma, sign));
    }
    let mut crossings = Vec::new();
    let mut last: Option<(usize, Sign)> = None;
    for &(k, _, _, s) in &points {
        if s == Sign::Unresolved {
            continue;
        }
        if let Some((k0, s0)) = last {
            if s0 != s {
                crossings.push((k0, k));
            }
        }
        last = Some((k, s));
    }
    CrossingScan { points, crossings }
}

pub fn crossing_scan(p: &ScanParams) -> Result<CrossingScan> {
    Ok(crossings_from_rows(&figure2_rows(p)?))
}

/// Exact hinge losses of `f1` and `f2` by enumeration, for small worlds.
pub fn exact_losses(world: &ExampleWorld, k: usize) -> Result<(f64, f64)> {
    let a = losses::nce_loss_exact(&world.model, &world.f1, k, LossKind::Hinge, losses::DEFAULT_BUDGET)?;
    let b = losses::nce_loss_exact(&world.model, &world.f2, k, LossKind::Hinge, losses::DEFAULT_BUDGET)?;
    Ok((a.nce_loss, b.nce_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent derivation of `L(f2)`: condition on the anchor point and
    /// the number of negatives landing on the anchor's own points and on
    /// other classes.
    fn f2_oracle(n: usize, k: usize, eps: f64) -> f64 {
        let n = n as f64;
        let tau = 1.0 - (1.0 - 1.0 / n).powi(k as i32);
        (1.0 - tau) * (eps * eps / 4.0 + eps / 2.0) + tau * (1.0 + eps)
            - 2.0 * eps * ((1.0 - 1.0 / (2.0 * n)).powi(k as i32) - (1.0 - 1.0 / n).powi(k as i32))
    }

    #[test]
    fn parameter_checks() {
        assert!(ExampleWorld::new(3, 0.1).is_err());
        assert!(ExampleWorld::new(0, 0.1).is_err());
        assert!(ExampleWorld::new(4, 0.0).is_err());
        assert!(ExampleWorld::new(4, 0.37).is_err());
        assert!(ExampleWorld::new(4, epsilon_max()).is_ok());
        assert!(f2_nce_bounds(40, 1, 0.5).is_err());
    }

    #[test]
    fn images_have_expected_structure() {
        let w = ExampleWorld::new(6, 0.2).unwrap();
        let v1 = w.f1().embed_all(w.model()).unwrap();
        let mut distinct1 = v1.clone();
        distinct1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct1.dedup();
        assert_eq!(distinct1.len(), 3);
        let v2 = w.f2().embed_all(w.model()).unwrap();
        let mut distinct2 = v2.clone();
        distinct2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct2.dedup();
        assert_eq!(distinct2.len(), 12);
    }

    #[test]
    fn f1_closed_form_values() {
        assert_eq!(f1_nce_closed_form(40, 0), 0.0);
        assert!((f1_nce_closed_form(40, 1) - 0.05).abs() < 1e-15);
        assert!((f1_nce_closed_form(40, 2000) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn supervised_values_match_evaluator() {
        let (a, b) = supervised_losses(40, 0.35).unwrap();
        assert_eq!((a, b), (1.0, 0.175));
        let w = ExampleWorld::new(8, 0.35).unwrap();
        let m1 = losses::mean_classifier_loss(w.model(), w.f1(), LossKind::Hinge).unwrap();
        let m2 = losses::mean_classifier_loss(w.model(), w.f2(), LossKind::Hinge).unwrap();
        assert!((m1 - 1.0).abs() < 1e-12);
        assert!((m2 - 0.175).abs() < 1e-12);
    }

    #[test]
    fn exact_enumeration_agrees_with_closed_forms() {
        for n in [2usize, 4] {
            let w = ExampleWorld::new(n, 0.3).unwrap();
            for k in 1..=2 {
                let (e1, e2) = exact_losses(&w, k).unwrap();
                assert!((e1 - f1_nce_closed_form(n, k)).abs() < 1e-12, "N={n} k={k}");
                let (lo, hi) = f2_nce_bounds(n, k, 0.3).unwrap();
                assert!(lo <= e2 + 1e-12 && e2 <= hi + 1e-12, "N={n} k={k}: {lo} {e2} {hi}");
                assert!((e2 - f2_oracle(n, k, 0.3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_excess_identity_small_exact() {
        for k in 1..=4 {
            let w = ExampleWorld::new(4, 0.2).unwrap();
            let (l, _) = exact_losses(&w, k).unwrap();
            let t = theory::tau(w.model().prior(), k);
            let lhs = (l - t) / (1.0 - t);
            let rhs = 1.0 - (2.0f64 / 3.0).powi(k as i32);
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((f1_normalized_excess(4, k) - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn envelopes_at_limits() {
        let (lo, hi) = f2_nce_bounds(40, 0, 0.35).unwrap();
        assert!((lo - hi).abs() < 1e-15);
        assert!((lo - (0.35 * 0.35 / 4.0 + 0.175)).abs() < 1e-15);
        let (lo, hi) = f2_nce_bounds(40, 100_000, 0.35).unwrap();
        assert!((hi - 1.35).abs() < 1e-12);
        assert!(lo <= hi);
        // At k = 1 the lower envelope is exact.
        let (lo, _) = f2_nce_bounds(40, 1, 0.35).unwrap();
        assert!((lo - f2_oracle(40, 1, 0.35)).abs() < 1e-12);
    }

    #[test]
    fn scan_grid_shape() {
        let ks = scan_ks(40, 600);
        assert_eq!(&ks[..80], &(1..=80).collect::<Vec<_>>()[..]);
        assert_eq!(*ks.last().unwrap(), 600);
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(ks[80], 88);
        assert_eq!(scan_ks(40, 10), (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn small_monte_carlo_matches_oracle() {
        let w = ExampleWorld::new(8, 0.3).unwrap();
        for k in [1, 5, 20] {
            let e = estimate_pair(&w, k, LossKind::Hinge, 200_000, 11).unwrap();
            assert!((e.f1 - f1_nce_closed_form(8, k)).abs() < 4.0 * e.f1_stderr + 1e-12);
            assert!((e.f2 - f2_oracle(8, k, 0.3)).abs() < 4.0 * e.f2_stderr + 1e-12);
        }
    }

    #[test]
    fn crossing_detection_on_synthetic_rows() {
        let mk = |k, f1: f64, f2: f64| Figure2Row {
            k,
            f1_closed: Some(f1),
            f2_lower: None,
            f2_upper: None,
            f1_mc: f1,
            f1_mc_stderr: 0.0,
            f2_mc: f2,
            f2_mc_stderr: 0.01,
        };
        let rows = vec![mk(1, 0.1, 0.5), mk(2, 0.49, 0.5), mk(3, 0.9, 0.5), mk(4, 0.4, 0.5)];
        let scan = crossings_from_rows(&rows);
        assert_eq!(scan.crossings, vec![(1, 3), (3, 4)]);
        assert_eq!(scan.unresolved(), vec![2]);
    }

    #[test]
    fn oracle_predicts_two_crossings_at_figure_parameters() {
        let signs: Vec<bool> = scan_ks(40, 600)
            .iter()
            .map(|&k| f1_nce_closed_form(40, k) > f2_oracle(40, k, 0.35))
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 2);
    }

    proptest! {
        #[test]
        fn envelope_is_ordered_and_contains_oracle(half in 1usize..60, k in 0usize..700, eps in 0.01f64..0.366) {
            let n = 2 * half;
            let (lo, hi) = f2_nce_bounds(n, k, eps).unwrap();
            prop_assert!(lo <= hi + 1e-15);
            let exact = f2_oracle(n, k, eps);
            prop_assert!(lo <= exact + 1e-12 && exact <= hi + 1e-12);
        }

        #[test]
        fn normalized_excess_identity(half in 2usize..200, k in 1usize..200) {
            let n = 2 * half;
            let rhs = -(k as f64 * (-1.0 / (n - 1) as f64).ln_1p()).exp_m1();
            prop_assert!((f1_normalized_excess(n, k) - rhs).abs() < 1e-12);
        }
    }
}
