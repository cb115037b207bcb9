//! Multi-class hinge and logistic losses and the loss functionals built on
//! them: NCE loss `L_unsup`, collision-free NCE loss `L≠`, supervised loss,
//! mean-classifier loss and the intra-class deviation `s(f)`.
//!
//! Expectations over a [`LatentModel`] are available two ways: by exact
//! enumeration of every weighted tuple (the oracle for small models) and by
//! Monte Carlo over sampled tuples.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mc;
use crate::model::{self, LatentModel, Representation};
use crate::sampler::TupleSampler;
use crate::stats::Moments;

/// Default cap on the number of weighted terms an exact evaluator may visit.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Hinge,
    Logistic,
}

impl LossKind {
    pub const ALL: [LossKind; 2] = [LossKind::Hinge, LossKind::Logistic];

    /// `ℓ(v)`. An empty `v` gives 0.
    #[inline]
    pub fn eval(self, v: &[f64]) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        match self {
            LossKind::Hinge => {
                let worst = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(-x));
                (1.0 + worst).max(0.0)
            }
            LossKind::Logistic => {
                // ln(1 + Σ e^{-v}) = m + ln(e^{-m} + Σ e^{-v-m}), m = max(0, max -v).
                let m = v.iter().fold(0.0f64, |m, &x| m.max(-x));
                let s: f64 = (-m).exp() + v.iter().map(|&x| (-x - m).exp()).sum::<f64>();
                m + s.ln()
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// `ℓ(v)` with input checks. Empty `v` is only accepted with `allow_empty`.
pub fn base_loss(kind: LossKind, v: &[f64], allow_empty: bool) -> Result<f64> {
    if v.is_empty() && !allow_empty {
        return Err(Error::DegenerateInput("loss of an empty coordinate set".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue("non-finite loss argument".into()));
    }
    Ok(kind.eval(v))
}

/// `ℓ_t(0)`: the loss at the `t`-dimensional zero vector.
pub fn loss_at_zero(kind: LossKind, t: usize) -> f64 {
    match (kind, t) {
        (_, 0) => 0.0,
        (LossKind::Hinge, _) => 1.0,
        (LossKind::Logistic, t) => (t as f64).ln_1p(),
    }
}

/// Loss functionals of one representation. Fields not computed by a given
/// evaluator are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub kind: LossKind,
    pub k: usize,
    /// `L^{(k)}_unsup(f)` or its sample mean.
    pub nce_loss: f64,
    /// `L≠^{(k)}(f)`, colliding coordinates removed.
    pub collision_free_loss: f64,
    pub supervised_loss: Option<f64>,
    pub mean_classifier_loss: Option<f64>,
    pub intra_class_dev: Option<f64>,
    /// Standard error of `nce_loss`; present iff it was sampled.
    pub stderr: Option<f64>,
    /// Standard error of `collision_free_loss` when sampled.
    pub collision_free_stderr: Option<f64>,
    /// Number of sampled tuples behind the estimate.
    pub samples: Option<u64>,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "loss_kind,k,nce,nce_stderr,lne,sup,sup_mu,sf";

    /// Fills the downstream fields from exact evaluation on `model`.
    pub fn with_downstream(mut self, model: &LatentModel, rep: &Representation) -> Result<Self> {
        self.mean_classifier_loss = Some(mean_classifier_loss(model, rep, self.kind)?);
        self.intra_class_dev = Some(intra_class_dev(model, rep)?);
        Ok(self)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
        format!(
            "{},{},{:.12},{},{:.12},{},{},{}",
            self.kind,
            self.k,
            self.nce_loss,
            opt(self.stderr),
            self.collision_free_loss,
            opt(self.supervised_loss),
            opt(self.mean_classifier_loss),
            opt(self.intra_class_dev),
        )
    }
}

/// Pairwise inner products of all model points under a representation.
pub(crate) struct GramTable {
    n: usize,
    gram: Vec<f64>,
}

impl GramTable {
    pub(crate) fn new(model: &LatentModel, rep: &Representation) -> Result<Self> {
        let vectors = rep.embed_all(model)?;
        let n = vectors.len();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let g = linalg::dot(&vectors[i], &vectors[j]);
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        Ok(GramTable { n, gram })
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }
}

/// Exact `L^{(k)}_unsup` and `L≠^{(k)}` by enumerating every tuple.
pub fn nce_loss_exact(
    model: &LatentModel,
    rep: &Representation,
    k: usize,
    kind: LossKind,
    budget: u64,
) -> Result<LossReport> {
    let width = (model.num_classes() * model.max_support()) as f64;
    let needed = width.powi(k as i32 + 2);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let gram = GramTable::new(model, rep)?;
    let marginals = model.marginals();
    let points = model.points();
    let np = points.len();

    let mut total = 0.0;
    let mut total_ne = 0.0;
    let mut coords = vec![0.0; np];
    let mut colliding = vec![false; np];
    let mut buf_all = Vec::with_capacity(k);
    let mut buf_ne = Vec::with_capacity(k);
    let mut choice = vec![0usize; k];

    for c in 0..model.num_classes() {
        let rho = model.prior()[c];
        if rho == 0.0 {
            continue;
        }
        for &x in model.conditional(c) {
            for &xp in model.conditional(c) {
                let w0 = rho * points[x].prob * points[xp].prob;
                if w0 == 0.0 {
                    continue;
                }
                let pos = gram.get(x, xp);
                for j in 0..np {
                    coords[j] = pos - gram.get(x, j);
                    colliding[j] = points[j].class == c;
                }
                // Odometer over all k-tuples of negative positions.
                choice.iter_mut().for_each(|d| *d = 0);
                loop {
                    let mut w = w0;
                    buf_all.clear();
                    buf_ne.clear();
                    for &j in &choice {
                        w *= marginals[j];
                        buf_all.push(coords[j]);
                        if !colliding[j] {
                            buf_ne.push(coords[j]);
                        }
                    }
                    if w != 0.0 {
                        total += w * kind.eval(&buf_all);
                        total_ne += w * kind.eval(&buf_ne);
                    }
                    if !advance(&mut choice, np) {
                        break;
                    }
                }
            }
        }
    }

    Ok(LossReport {
        kind,
        k,
        nce_loss: total,
        collision_free_loss: total_ne,
        supervised_loss: None,
        mean_classifier_loss: None,
        intra_class_dev: None,
        stderr: None,
        collision_free_stderr: None,
        samples: None,
    })
}

fn advance(choice: &mut [usize], base: usize) -> bool {
    for d in choice.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Monte-Carlo `L̂^{(k)}_unsup` over `num_samples` independent tuples.
///
/// Deterministic for a given seed; see [`crate::mc`] for the stream layout.
pub fn nce_loss_mc(
    model: &LatentModel,
    rep: &Representation,
    k: usize,
    kind: LossKind,
    num_samples: u64,
    seed: u64,
) -> Result<LossReport> {
    if num_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let gram = GramTable::new(model, rep)?;
    Ok(nce_loss_mc_with(model, &gram, k, kind, num_samples, seed))
}

pub(crate) fn nce_loss_mc_with(
    model: &LatentModel,
    gram: &GramTable,
    k: usize,
    kind: LossKind,
    num_samples: u64,
    seed: u64,
) -> LossReport {
    let sampler = TupleSampler::new(model);
    let points = model.points();
    let parts = mc::run_chunks(num_samples, seed, |rng, n| {
        let mut all = Moments::default();
        let mut ne = Moments::default();
        let mut negatives = Vec::with_capacity(k);
        let mut buf_all = Vec::with_capacity(k);
        let mut buf_ne = Vec::with_capacity(k);
        for _ in 0..n {
            let d = sampler.draw_into(k, rng, &mut negatives);
            let pos = gram.get(d.anchor, d.positive);
            buf_all.clear();
            buf_ne.clear();
            for &j in &negatives {
                let v = pos - gram.get(d.anchor, j);
                buf_all.push(v);
                if points[j].class != d.class {
                    buf_ne.push(v);
                }
            }
            all.push(kind.eval(&buf_all));
            ne.push(kind.eval(&buf_ne));
        }
        (all, ne)
    });
    let mut all = Moments::default();
    let mut ne = Moments::default();
    for (a, b) in &parts {
        all.merge(a);
        ne.merge(b);
    }
    LossReport {
        kind,
        k,
        nce_loss: all.mean,
        collision_free_loss: ne.mean,
        supervised_loss: None,
        mean_classifier_loss: None,
        intra_class_dev: None,
        stderr: Some(all.stderr()),
        collision_free_stderr: Some(ne.stderr()),
        samples: Some(num_samples),
    }
}

/// Exact `L_sup(g) = E_{(x,c)} ℓ({g(x)_c − g(x)_{c'}}_{c' ≠ c})`.
///
/// `scores(position)` returns the `N` class scores of the point at that
/// position in `model.points()`.
pub fn supervised_loss_exact<F>(model: &LatentModel, scores: F, kind: LossKind) -> Result<f64>
where
    F: Fn(usize) -> Vec<f64>,
{
    let n = model.num_classes();
    if n < 2 {
        return Err(Error::DegenerateInput("supervised loss needs at least 2 classes".into()));
    }
    let mut total = 0.0;
    let mut gaps = Vec::with_capacity(n - 1);
    for c in 0..n {
        for &x in model.conditional(c) {
            let w = model.prior()[c] * model.points()[x].prob;
            if w == 0.0 {
                continue;
            }
            let s = scores(x);
            if s.len() != n {
                return Err(Error::InvalidValue(format!(
                    "score vector has length {}, expected {n}",
                    s.len()
                )));
            }
            gaps.clear();
            gaps.extend((0..n).filter(|&j| j != c).map(|j| s[c] - s[j]));
            total += w * kind.eval(&gaps);
        }
    }
    Ok(total)
}

/// `L^μ_sup(f) = L_sup(W^μ f)`.
pub fn mean_classifier_loss(model: &LatentModel, rep: &Representation, kind: LossKind) -> Result<f64> {
    let vectors = rep.embed_all(model)?;
    let stats = model::class_stats_from_vectors(model, &vectors, rep.dim());
    let w = model::make_mean_classifier(&stats);
    supervised_loss_exact(
        model,
        |x| w.iter().map(|row| linalg::dot(row, &vectors[x])).collect(),
        kind,
    )
}

/// `s(f) = E_{c∼ρ}[ E_{x∼D_c}‖f(x)‖ · √‖Σ(f,c)‖₂ ]`.
pub fn intra_class_dev(model: &LatentModel, rep: &Representation) -> Result<f64> {
    let stats = model::class_stats(model, rep)?;
    Ok(stats
        .spectral_norms()
        .iter()
        .zip(&stats.mean_norms)
        .zip(model.prior())
        .map(|((s, m), rho)| rho * m * s.sqrt())
        .sum())
}
