//! Closed-form quantities of the collision/coverage analysis and executable
//! checks of the transfer bounds.
//!
//! For a class prior `ρ` and `k` negatives:
//!
//! * `τ_k(c) = 1 − (1 − ρ(c))^k` is the chance that class `c` shows up among
//!   the negatives, and `τ_k = Σ_c ρ(c) τ_k(c)` the chance of a collision
//!   with the anchor class.
//! * The transfer coefficient is
//!   `2 · C / (1 − ρ_max)^k` with `C = max(1, 2(1−ρ_min)H_{N−1}/(kρ_min))`
//!   ([`Coefficient::Max`]) or `C = ⌈2(1−ρ_min)H_{N−1}/(kρ_min)⌉`
//!   ([`Coefficient::Ceiled`]). With a uniform prior the ceiled form is
//!   `α(k,N) = 2/(1−τ_k) · ⌈2(N−1)H_{N−1}/k⌉`.
//! * The transfer bound reads
//!   `L^μ_sup ≤ coeff · (L_unsup − τ_k E[ℓ_{|I|}(0) | I ≠ ∅])` and the refined
//!   bound `L^μ_sup ≤ coeff_ceiled · (L≠ + √(kρ_max) · s(f))`.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::{self, LossKind};
use crate::mc;
use crate::model::{LatentModel, Payload, Point, Representation};
use crate::rng;
use crate::stats::Moments;

/// `Σ_c ρ(c)(1−ρ(c))^k = 1 − τ_k`, evaluated without cancellation.
pub fn tau_complement(prior: &[f64], k: usize) -> f64 {
    prior.iter().map(|&r| r * miss_probability(r, k)).sum()
}

/// `(1 − p)^k` via `exp(k · log1p(−p))`.
fn miss_probability(p: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else if p >= 1.0 {
        0.0
    } else {
        (k as f64 * (-p).ln_1p()).exp()
    }
}

/// `τ_k(c)` for every class.
pub fn tau_per_class(prior: &[f64], k: usize) -> Vec<f64> {
    prior
        .iter()
        .map(|&r| {
            if k == 0 {
                0.0
            } else if r >= 1.0 {
                1.0
            } else {
                -(k as f64 * (-r).ln_1p()).exp_m1()
            }
        })
        .collect()
}

/// `τ_k`, the probability that at least one negative shares the anchor class.
pub fn tau(prior: &[f64], k: usize) -> f64 {
    tau_per_class(prior, k)
        .iter()
        .zip(prior)
        .map(|(t, r)| r * t)
        .sum()
}

/// `H_t = Σ_{j=1}^t 1/j`.
pub fn harmonic(t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidArgument("harmonic number needs t ≥ 1".into()));
    }
    // Smallest terms first.
    Ok((1..=t).rev().map(|j| 1.0 / j as f64).sum())
}

/// `α(k,N) = 2/(1−τ_k) · ⌈2(N−1)H_{N−1}/k⌉` for a uniform prior.
pub fn alpha_uniform(n: usize, k: usize) -> Result<f64> {
    if n < 2 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "alpha needs N ≥ 2 and k ≥ 1 (got N = {n}, k = {k})"
        )));
    }
    let h = harmonic(n - 1)?;
    let ratio = 2.0 * (n - 1) as f64 * h / k as f64;
    let miss = miss_probability(1.0 / n as f64, k);
    Ok(2.0 * ceil_snapped(ratio) / miss)
}

/// Ceiling that treats values within relative `1e-12` of an integer as that
/// integer, so rounding noise in `ratio` does not jump a whole step.
fn ceil_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    /// `max(1, 2(1−ρ_min)H_{N−1}/(kρ_min))`.
    Max,
    /// `⌈2(1−ρ_min)H_{N−1}/(kρ_min)⌉`.
    Ceiled,
}

/// Transfer coefficient for an arbitrary prior.
pub fn alpha_general(prior: &[f64], k: usize, variant: Coefficient) -> Result<f64> {
    let n = prior.len();
    if n < 2 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "alpha needs N ≥ 2 and k ≥ 1 (got N = {n}, k = {k})"
        )));
    }
    let rho_min = prior.iter().copied().fold(f64::INFINITY, f64::min);
    let rho_max = prior.iter().copied().fold(0.0, f64::max);
    if rho_min <= 0.0 {
        return Err(Error::InvalidValue("transfer coefficient needs ρ_min > 0".into()));
    }
    let ratio = 2.0 * (1.0 - rho_min) * harmonic(n - 1)? / (k as f64 * rho_min);
    let c = match variant {
        Coefficient::Max => ratio.max(1.0),
        Coefficient::Ceiled => ceil_snapped(ratio).max(1.0),
    };
    Ok(2.0 * c / miss_probability(rho_max, k))
}

/// `k ≈ 1/(ln N − ln(N−1))`, where `α(k,N)` bottoms out.
pub fn optimal_k_transfer(n: usize) -> f64 {
    -1.0 / (-1.0 / n as f64).ln_1p()
}

/// `k ≈ 0.5/(ln N − ln(N−1))`, where `α(k,N)√(k/N)` bottoms out.
pub fn optimal_k_refined(n: usize) -> f64 {
    optimal_k_transfer(n) / 2.0
}

/// `E[ℓ_{|I|}(0) | I ≠ ∅]` under the joint law of the anchor class and the
/// negative classes.
pub fn collision_zero_loss(prior: &[f64], k: usize, kind: LossKind) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("collision term needs k ≥ 1".into()));
    }
    if kind == LossKind::Hinge {
        return Ok(1.0);
    }
    let mut num = 0.0;
    for &r in prior {
        if r == 0.0 {
            continue;
        }
        num += r
            * binomial_pmf(k, r)
                .iter()
                .enumerate()
                .skip(1)
                .map(|(t, p)| p * losses::loss_at_zero(kind, t))
                .sum::<f64>();
    }
    Ok(num / tau(prior, k))
}

/// `Bin(k, p)` probabilities for `t = 0..=k`.
fn binomial_pmf(k: usize, p: f64) -> Vec<f64> {
    if p >= 1.0 {
        let mut v = vec![0.0; k + 1];
        v[k] = 1.0;
        return v;
    }
    let lp = p.ln();
    let lq = (-p).ln_1p();
    let mut log_choose = 0.0;
    (0..=k)
        .map(|t| {
            if t > 0 {
                log_choose += ((k - t + 1) as f64).ln() - (t as f64).ln();
            }
            (log_choose + t as f64 * lp + (k - t) as f64 * lq).exp()
        })
        .collect()
}

/// All closed-form quantities for one `(prior, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub k: usize,
    pub tau_k: f64,
    pub tau_k_per_class: Vec<f64>,
    /// Ceiled transfer coefficient.
    pub alpha: f64,
    pub alpha_max: f64,
    pub harmonic: f64,
    pub collision_zero_loss: f64,
    /// `alpha · (L_unsup − τ_k · collision_zero_loss)` when a loss was supplied.
    pub transfer_rhs: Option<f64>,
    pub refined_rhs: Option<f64>,
    pub optimal_k_transfer: f64,
    pub optimal_k_refined: f64,
}

pub fn theory_report(prior: &[f64], k: usize, kind: LossKind) -> Result<TheoryReport> {
    let n = prior.len();
    Ok(TheoryReport {
        k,
        tau_k: tau(prior, k),
        tau_k_per_class: tau_per_class(prior, k),
        alpha: alpha_general(prior, k, Coefficient::Ceiled)?,
        alpha_max: alpha_general(prior, k, Coefficient::Max)?,
        harmonic: harmonic(n - 1)?,
        collision_zero_loss: collision_zero_loss(prior, k, kind)?,
        transfer_rhs: None,
        refined_rhs: None,
        optimal_k_transfer: optimal_k_transfer(n),
        optimal_k_refined: optimal_k_refined(n),
    })
}

/// Outcome of checking one inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            holds: lhs <= rhs + 1e-9,
        }
    }
}

/// `L^μ_sup(f) ≤ α · (L_unsup − τ_k · E[ℓ_{|I|}(0) | I ≠ ∅])`, both sides exact.
pub fn verify_transfer(
    model: &LatentModel,
    rep: &Representation,
    k: usize,
    kind: LossKind,
    budget: u64,
) -> Result<BoundCheck> {
    let prior = model.prior();
    let lhs = losses::mean_classifier_loss(model, rep, kind)?;
    let nce = losses::nce_loss_exact(model, rep, k, kind, budget)?;
    let alpha = alpha_general(prior, k, Coefficient::Ceiled)?;
    let czl = collision_zero_loss(prior, k, kind)?;
    let rhs = alpha * (nce.nce_loss - tau(prior, k) * czl);
    Ok(BoundCheck::new(lhs, rhs))
}

/// `L^μ_sup(f) ≤ coeff · (L≠ + √(kρ_max) · s(f))`, both sides exact.
pub fn verify_refined(
    model: &LatentModel,
    rep: &Representation,
    k: usize,
    kind: LossKind,
    budget: u64,
) -> Result<BoundCheck> {
    let prior = model.prior();
    let lhs = losses::mean_classifier_loss(model, rep, kind)?;
    let nce = losses::nce_loss_exact(model, rep, k, kind, budget)?;
    let s = losses::intra_class_dev(model, rep)?;
    let coeff = alpha_general(prior, k, Coefficient::Ceiled)?;
    let rhs = coeff * (nce.collision_free_loss + (k as f64 * model.rho_max()).sqrt() * s);
    Ok(BoundCheck::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouponCheck {
    pub empirical_mean: f64,
    pub stderr: f64,
    /// `H_n / min_i p_i`.
    pub bound: f64,
    pub holds: bool,
}

/// Simulates the coupon-collector time under `probs` and compares the mean
/// to `H_n / min p_i`.
pub fn coupon_collector_check(probs: &[f64], trials: u64, seed: u64) -> Result<CouponCheck> {
    if trials < 100 {
        return Err(Error::InvalidArgument("coupon check needs at least 100 trials".into()));
    }
    let n = probs.len();
    let p_min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    if n == 0 || p_min <= 0.0 {
        return Err(Error::InvalidValue("coupon probabilities must be positive".into()));
    }
    let dist = WeightedAliasIndex::new(probs.to_vec())
        .map_err(|e| Error::InvalidValue(format!("coupon probabilities: {e}")))?;
    let mut total = Moments::default();
    for part in mc::run_chunks(trials, seed, |rng, m| {
        let mut acc = Moments::default();
        let mut seen = vec![false; n];
        for _ in 0..m {
            seen.iter_mut().for_each(|s| *s = false);
            let mut missing = n;
            let mut draws = 0u64;
            while missing > 0 {
                let c = dist.sample(rng);
                draws += 1;
                if !seen[c] {
                    seen[c] = true;
                    missing -= 1;
                }
            }
            acc.push(draws as f64);
        }
        acc
    }) {
        total.merge(&part);
    }
    let bound = harmonic(n)? / p_min;
    Ok(CouponCheck {
        empirical_mean: total.mean,
        stderr: total.stderr(),
        bound,
        holds: total.mean <= bound + 3.0 * total.stderr(),
    })
}

/// One randomly generated small instance of the verification corpus.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub index: usize,
    pub model: LatentModel,
    pub rep: Representation,
    pub k: usize,
}

/// Random model with `2 ≤ N ≤ 4` classes, supports of size `1..=3`, table
/// representations with entries in `[−1, 1]` and `1 ≤ k ≤ 3`.
pub fn random_small_instance(master_seed: u64, index: usize) -> SmallInstance {
    let mut r = rng::stream(master_seed, index as u64);
    let n = r.random_range(2..=4);
    let d = r.random_range(1..=3);
    let k = r.random_range(1..=3);
    let prior = random_simplex(&mut r, n, 0.05);
    let mut points = Vec::new();
    let mut table = Vec::new();
    for (c, _) in prior.iter().enumerate() {
        let support = r.random_range(1..=3);
        for q in random_simplex(&mut r, support, 0.0) {
            let id = points.len() as u64;
            points.push(Point {
                id,
                class: c,
                prob: q,
                payload: Payload::Opaque(format!("c{c}p{id}")),
            });
            table.push((id, (0..d).map(|_| r.random_range(-1.0..=1.0)).collect()));
        }
    }
    SmallInstance {
        index,
        model: LatentModel::new(prior, points).expect("generated model is valid"),
        rep: Representation::table(d, table).expect("generated table is valid"),
        k,
    }
}

/// Random probability vector with every entry at least `floor`.
fn random_simplex(r: &mut rng::StreamRng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut v: Vec<f64> = raw
        .iter()
        .map(|x| floor + (1.0 - floor * n as f64) * x / total)
        .collect();
    // Exact unit sum.
    let rest: f64 = v[1..].iter().sum();
    v[0] = 1.0 - rest;
    v
}

#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub index: usize,
    pub num_classes: usize,
    pub k: usize,
    pub kind: LossKind,
    pub transfer: BoundCheck,
    pub refined: BoundCheck,
}

pub const SUITE_INSTANCES: usize = 200;
pub const SUITE_SEED: u64 = 0x5eed_c011_1510;

/// Runs both bound checks under both loss kinds on `instances` random models.
pub fn run_verification_suite(instances: usize, master_seed: u64) -> Result<Vec<SuiteRow>> {
    let rows: Result<Vec<Vec<SuiteRow>>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = random_small_instance(master_seed, i);
            LossKind::ALL
                .iter()
                .map(|&kind| {
                    Ok(SuiteRow {
                        index: i,
                        num_classes: inst.model.num_classes(),
                        k: inst.k,
                        kind,
                        transfer: verify_transfer(&inst.model, &inst.rep, inst.k, kind, losses::DEFAULT_BUDGET)?,
                        refined: verify_refined(&inst.model, &inst.rep, inst.k, kind, losses::DEFAULT_BUDGET)?,
                    })
                })
                .collect()
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Prior families accepted by the theory table.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Uniform,
    /// `ρ(c) ∝ (c+1)^{−s}`.
    Zipf(f64),
    Explicit(Vec<f64>),
}

impl PriorSpec {
    pub fn build(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            PriorSpec::Uniform => Ok(vec![1.0 / n as f64; n]),
            PriorSpec::Zipf(s) => {
                let w: Vec<f64> = (1..=n).map(|c| (c as f64).powf(-s)).collect();
                let z: f64 = w.iter().sum();
                Ok(w.iter().map(|x| x / z).collect())
            }
            PriorSpec::Explicit(p) => {
                if p.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "explicit prior has {} entries but N = {n}",
                        p.len()
                    )));
                }
                let sum: f64 = p.iter().sum();
                if p.iter().any(|x| *x <= 0.0) || (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument("explicit prior must be positive and sum to 1".into()));
                }
                Ok(p.clone())
            }
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Uniform => f.write_str("uniform"),
            PriorSpec::Zipf(s) => write!(f, "zipf:{s}"),
            PriorSpec::Explicit(p) => {
                let parts: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                write!(f, "explicit:{}", parts.join("/"))
            }
        }
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad prior `{s}` (uniform | zipf:<s> | p1,p2,...)"));
        if s == "uniform" {
            return Ok(PriorSpec::Uniform);
        }
        if let Some(rest) = s.strip_prefix("zipf:") {
            return rest.parse().map(PriorSpec::Zipf).map_err(|_| bad());
        }
        let body = s.strip_prefix("explicit:").unwrap_or(s);
        body.split([',', '/'])
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(PriorSpec::Explicit)
            .map_err(|_| bad())
    }
}

/// One row of `theory.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub n: usize,
    pub k: usize,
    pub prior_kind: String,
    pub tau: f64,
    pub alpha_ceiled: f64,
    pub alpha_max: f64,
    pub opt_k_transfer: f64,
    pub opt_k_refined: f64,
    /// This row holds the smallest `alpha_ceiled` of its `N` (first on ties).
    pub argmin: bool,
    pub collision_zero_loss: f64,
}

pub const THEORY_HEADER: &str =
    "N,k,prior_kind,tau,alpha_ceiled,alpha_max,opt_k_transfer,opt_k_refined,argmin,collision_zero_loss";

pub fn theory_rows(ns: &[usize], ks: &[usize], prior: &PriorSpec, kind: LossKind) -> Result<Vec<TheoryRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        let p = prior.build(n)?;
        let start = rows.len();
        for &k in ks {
            rows.push(TheoryRow {
                n,
                k,
                prior_kind: prior.to_string(),
                tau: tau(&p, k),
                alpha_ceiled: alpha_general(&p, k, Coefficient::Ceiled)?,
                alpha_max: alpha_general(&p, k, Coefficient::Max)?,
                opt_k_transfer: optimal_k_transfer(n),
                opt_k_refined: optimal_k_refined(n),
                argmin: false,
                collision_zero_loss: collision_zero_loss(&p, k, kind)?,
            });
        }
        let block = &mut rows[start..];
        if let Some(best) = (0..block.len()).min_by(|&a, &b| block[a].alpha_ceiled.total_cmp(&block[b].alpha_ceiled)) {
            block[best].argmin = true;
        }
    }
    Ok(rows)
}

pub fn write_theory_csv(path: &Path, rows: &[TheoryRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str(crate::csvio::SCHEMA_LINE);
    out.push('\n');
    out.push_str(THEORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.15e},{:.15e},{:.15e},{:.12},{:.12},{},{:.15e}\n",
            r.n,
            r.k,
            r.prior_kind,
            r.tau,
            r.alpha_ceiled,
            r.alpha_max,
            r.opt_k_transfer,
            r.opt_k_refined,
            r.argmin as u8,
            r.collision_zero_loss
        ));
    }
    crate::csvio::write_atomic(path, out.as_bytes())
}

/// Growth-rate families multiplying `α(k,N)` in the coefficient sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Constant,
    Sqrt,
    /// `k / ln(k+1)`, a sub-linear rate.
    SubLinear,
}

impl Growth {
    pub const ALL: [Growth; 3] = [Growth::Constant, Growth::Sqrt, Growth::SubLinear];

    pub fn label(self) -> &'static str {
        match self {
            Growth::Constant => "const",
            Growth::Sqrt => "sqrt_k",
            Growth::SubLinear => "k_over_log_k",
        }
    }

    pub fn eval(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Growth::Constant => 1.0,
            Growth::Sqrt => k.sqrt(),
            Growth::SubLinear => k / k.ln_1p(),
        }
    }
}

/// `α(k,N) · g(k)` for every growth family, uniform prior.
pub fn write_growth_csv(path: &Path, n: usize, ks: &[usize]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{}\nN,k,growth,value", crate::csvio::SCHEMA_LINE).unwrap();
    for g in Growth::ALL {
        for &k in ks {
            writeln!(out, "{n},{k},{},{:.15e}", g.label(), alpha_uniform(n, k)? * g.eval(k)).unwrap();
        }
    }
    crate::csvio::write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn tau_values() {
        assert_eq!(tau(&[0.3, 0.7], 0), 0.0);
        assert!((tau(&uniform(2), 1) - 0.5).abs() < 1e-15);
        assert!((tau(&uniform(100), 100) - 0.633_967_658_726_770_1).abs() < 1e-12);
        for k in [0, 1, 7, 300] {
            let p = [0.2, 0.5, 0.3];
            assert!((tau(&p, k) + tau_complement(&p, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_is_monotone_and_saturates() {
        let p = [0.1, 0.2, 0.7];
        let mut prev = 0.0;
        for k in 0..200 {
            let t = tau(&p, k);
            assert!(t >= prev - 1e-15);
            prev = t;
        }
        assert!((tau(&p, 5000) - 1.0).abs() < 1e-12);
        // More mass on one class means more collisions.
        assert!(tau(&[0.9, 0.1], 3) > tau(&[0.6, 0.4], 3));
        assert!(tau(&[0.6, 0.4], 3) > tau(&[0.5, 0.5], 3));
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic(1).unwrap(), 1.0);
        assert!((harmonic(4).unwrap() - 25.0 / 12.0).abs() < 1e-15);
        assert!((harmonic(99).unwrap() - 5.177_377_517_639_621).abs() < 1e-12);
        assert!(matches!(harmonic(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn alpha_hand_values() {
        assert!((alpha_uniform(2, 1).unwrap() - 8.0).abs() < 1e-12);
        assert!((alpha_general(&uniform(2), 1, Coefficient::Max).unwrap() - 8.0).abs() < 1e-12);
        assert!((alpha_general(&[0.9, 0.1], 1, Coefficient::Max).unwrap() - 360.0).abs() < 1e-9);
        // Saturated branch: 2/(1−ρ_max)^k.
        let p = [0.5, 0.3, 0.2];
        let k = 1000;
        let expect = 2.0 / 0.5f64.powi(k as i32);
        let got = alpha_general(&p, k, Coefficient::Max).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-12);
        assert!(alpha_uniform(1, 1).is_err());
        assert!(alpha_uniform(5, 0).is_err());
    }

    #[test]
    fn alpha_uniform_equals_general_ceiled() {
        for n in [2, 3, 10, 100] {
            for k in [1, 2, 5, 50, 99, 300] {
                let a = alpha_uniform(n, k).unwrap();
                let b = alpha_general(&uniform(n), k, Coefficient::Ceiled).unwrap();
                assert!((a / b - 1.0).abs() < 1e-12, "N={n} k={k}: {a} vs {b}");
                assert!(a >= 2.0);
            }
        }
    }

    #[test]
    fn ceiled_dominates_max() {
        for p in [vec![0.5, 0.5], vec![0.7, 0.2, 0.1], uniform(7)] {
            for k in 1..60 {
                let c = alpha_general(&p, k, Coefficient::Ceiled).unwrap();
                let m = alpha_general(&p, k, Coefficient::Max).unwrap();
                assert!(c >= m * (1.0 - 1e-12));
            }
        }
        // Integral ratio ≥ 1: 2(N−1)H_{N−1}/k with N = 2, k = 1 is 2.
        let c = alpha_general(&uniform(2), 1, Coefficient::Ceiled).unwrap();
        let m = alpha_general(&uniform(2), 1, Coefficient::Max).unwrap();
        assert_eq!(c, m);
    }

    #[test]
    fn alpha_is_quasi_convex_with_minimum_near_prediction() {
        // The ceiled form is a sawtooth on its plateaus; the shape claim is
        // checked on the continuous (max) form, the argmin on both.
        for n in [10usize, 100, 1000] {
            let ks: Vec<usize> = (1..=10 * n).collect();
            let smooth: Vec<f64> = ks
                .iter()
                .map(|&k| alpha_general(&uniform(n), k, Coefficient::Max).unwrap())
                .collect();
            let imin = argmin(&smooth);
            let tol = 1e-12;
            assert!(smooth[..=imin].windows(2).all(|w| w[1] <= w[0] * (1.0 + tol)), "N={n}");
            assert!(smooth[imin..].windows(2).all(|w| w[1] >= w[0] * (1.0 - tol)), "N={n}");
            let ceiled: Vec<f64> = ks.iter().map(|&k| alpha_uniform(n, k).unwrap()).collect();
            let predicted = optimal_k_transfer(n);
            for k_star in [ks[imin], ks[argmin(&ceiled)]] {
                assert!((k_star as f64 / predicted - 1.0).abs() < 0.1, "N={n}: argmin {k_star} vs {predicted}");
            }
        }
    }

    fn argmin(v: &[f64]) -> usize {
        (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
    }

    #[test]
    fn alpha_grows_without_bound() {
        let a = alpha_uniform(10, 100).unwrap();
        let b = alpha_uniform(10, 1000).unwrap();
        assert!(b > 1e30 * a);
    }

    #[test]
    fn optimal_k_relationship() {
        for n in [2, 10, 100, 3029] {
            assert_eq!(optimal_k_refined(n), optimal_k_transfer(n) / 2.0);
        }
        assert!((optimal_k_transfer(100) - 99.499_162_5).abs() < 1e-6);
    }

    #[test]
    fn collision_zero_loss_values() {
        assert_eq!(collision_zero_loss(&[0.2, 0.8], 4, LossKind::Hinge).unwrap(), 1.0);
        assert!((collision_zero_loss(&[1.0], 2, LossKind::Logistic).unwrap() - 3f64.ln()).abs() < 1e-14);
        assert!((collision_zero_loss(&uniform(2), 1, LossKind::Logistic).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(collision_zero_loss(&uniform(2), 0, LossKind::Hinge).is_err());
    }

    #[test]
    fn collision_zero_loss_matches_enumeration() {
        // Brute-force over all class assignments (c, c⁻_1..c⁻_k).
        let prior = [0.5, 0.3, 0.2];
        for k in 1..=4usize {
            let n = prior.len();
            let mut num = 0.0;
            let mut den = 0.0;
            for code in 0..n.pow(k as u32 + 1) {
                let mut rest = code;
                let mut labels = Vec::new();
                for _ in 0..=k {
                    labels.push(rest % n);
                    rest /= n;
                }
                let w: f64 = labels.iter().map(|&c| prior[c]).product();
                let t = labels[1..].iter().filter(|&&c| c == labels[0]).count();
                if t > 0 {
                    num += w * (t as f64).ln_1p();
                    den += w;
                }
            }
            let got = collision_zero_loss(&prior, k, LossKind::Logistic).unwrap();
            assert!((got - num / den).abs() < 1e-13, "k={k}");
            assert!((den - tau(&prior, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn coupon_collector_small_cases() {
        let one = coupon_collector_check(&[1.0], 100, 1).unwrap();
        assert_eq!(one.empirical_mean, 1.0);
        assert_eq!(one.bound, 1.0);
        assert!(one.holds);
        let ten = coupon_collector_check(&uniform(10), 20_000, 2).unwrap();
        let expected = 10.0 * harmonic(10).unwrap();
        assert!((ten.empirical_mean - expected).abs() < 4.0 * ten.stderr);
        assert!(ten.holds);
        assert!(coupon_collector_check(&[1.0], 10, 1).is_err());
    }

    #[test]
    fn random_instances_are_small_and_valid() {
        for i in 0..50 {
            let inst = random_small_instance(3, i);
            let n = inst.model.num_classes();
            assert!((2..=4).contains(&n));
            assert!(inst.model.max_support() <= 3);
            assert!((1..=3).contains(&inst.k));
        }
        let a = random_small_instance(3, 7);
        let b = random_small_instance(3, 7);
        assert_eq!(a.rep, b.rep);
    }

    #[test]
    fn prior_spec_parsing() {
        assert_eq!("uniform".parse::<PriorSpec>().unwrap(), PriorSpec::Uniform);
        assert_eq!("zipf:1.5".parse::<PriorSpec>().unwrap(), PriorSpec::Zipf(1.5));
        assert_eq!(
            "0.5,0.25,0.25".parse::<PriorSpec>().unwrap(),
            PriorSpec::Explicit(vec![0.5, 0.25, 0.25])
        );
        assert!("zipf:x".parse::<PriorSpec>().is_err());
        assert!(PriorSpec::Explicit(vec![0.5, 0.5]).build(3).is_err());
        let z = PriorSpec::Zipf(1.0).build(4).unwrap();
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12 && z[0] > z[3]);
    }

    #[test]
    fn theory_rows_flag_argmin() {
        let ks: Vec<usize> = (1..=500).collect();
        let rows = theory_rows(&[100], &ks, &PriorSpec::Uniform, LossKind::Hinge).unwrap();
        let flagged: Vec<&TheoryRow> = rows.iter().filter(|r| r.argmin).collect();
        assert_eq!(flagged.len(), 1);
        assert!((80..=120).contains(&flagged[0].k));
        let two = theory_rows(&[2], &[1], &PriorSpec::Uniform, LossKind::Hinge).unwrap();
        assert!((two[0].alpha_ceiled - 8.0).abs() < 1e-12 && two[0].argmin);
    }
}
