//! Exact Hoeffding projections over finite discrete distributions.
//!
//! For a symmetric order-`r` kernel `h` and a finitely supported `P`, the
//! marginal `P^{r-k}h` integrates out the last `r-k` arguments by full
//! summation over the support, and the projection
//!
//! ```text
//! (pi_k h)(x_1..x_k) = (delta_{x_1} - P) ... (delta_{x_k} - P) P^{r-k} h
//!                    = sum_{A subset of {1..k}} (-1)^{k-|A|} (P^{r-|A|} h)(x_A)
//! ```
//!
//! is completely degenerate: integrating any single argument against `P`
//! gives zero. These exact objects back the decomposition identity
//!
//! ```text
//! U_n(h) - P^r h = sum_{k=1}^r C(r,k) U_n^{(k)}(pi_k h),
//! ```
//!
//! which the randomized suite checks against the `ustat` engine, and the
//! degeneracy classifier that finds the largest `k` with `P^{r-k}h = 0` on
//! the support. Everything here is enumeration with compensated sums, with
//! an explicit budget so runaway arities fail loudly instead of hanging.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kernels::SymmetricKernel;
use crate::rng::{self, domain};
use crate::sample::{Observation, Sample};
use crate::ustat::{self, Neumaier, UstatError};

/// Cap on `support_size^(r-k)` enumeration terms per marginal evaluation.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum HoeffdingError {
    #[error("enumeration budget exceeded: {terms} terms > {budget}")]
    BudgetExceeded { terms: u128, budget: u128 },
    #[error("kernel is not centered: |P^r h| = {value:e} > tol {tol:e}")]
    NotCentered { value: f64, tol: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Ustat(#[from] UstatError),
}

/// Finite-support probability measure over observations.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    support: Vec<Observation>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<Observation>, probs: Vec<f64>) -> Result<Self, HoeffdingError> {
        if support.is_empty() {
            return Err(HoeffdingError::InvalidParameter(
                "support must be nonempty".into(),
            ));
        }
        if support.len() != probs.len() {
            return Err(HoeffdingError::InvalidParameter(format!(
                "support has {} atoms but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(HoeffdingError::InvalidParameter(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(HoeffdingError::InvalidParameter(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let (m, p) = (support[0].x().len(), support[0].v().len());
        if support.iter().any(|o| o.x().len() != m || o.v().len() != p) {
            return Err(HoeffdingError::InvalidParameter(
                "support observations must share dimensions".into(),
            ));
        }
        Ok(Self { support, probs })
    }

    pub fn uniform(support: Vec<Observation>) -> Result<Self, HoeffdingError> {
        let k = support.len();
        if k == 0 {
            return Err(HoeffdingError::InvalidParameter(
                "support must be nonempty".into(),
            ));
        }
        let probs = vec![1.0 / k as f64; k];
        Self::new(support, probs)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atom(&self, i: usize) -> &Observation {
        &self.support[i]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }
}

/// Visit all tuples in `{0..s}^j` (with repetition), lexicographically.
fn for_each_support_tuple<F: FnMut(&[usize])>(s: usize, j: usize, mut f: F) {
    let mut idx = vec![0usize; j];
    loop {
        f(&idx);
        let mut d = j;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < s {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn check_budget(s: usize, exponent: usize) -> Result<(), HoeffdingError> {
    let terms = (s as u128)
        .checked_pow(exponent as u32)
        .unwrap_or(u128::MAX);
    if terms > ENUMERATION_BUDGET {
        return Err(HoeffdingError::BudgetExceeded {
            terms,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

/// The marginal `P^{r-k}h` as an order-`k` kernel: the expectation of `h`
/// with its last `r-k` arguments drawn from `P`, computed by exact
/// summation. `k = r` returns `h` itself; `k = 0` gives the constant
/// `P^r h`.
pub fn marginalize(
    h: &SymmetricKernel,
    p: &DiscreteDistribution,
    k: usize,
) -> Result<SymmetricKernel, HoeffdingError> {
    let r = h.order();
    if k > r {
        return Err(HoeffdingError::InvalidParameter(format!(
            "cannot marginalize an order-{r} kernel down to {k} arguments"
        )));
    }
    if k == r {
        return Ok(h.clone());
    }
    check_budget(p.len(), r - k)?;
    let inner = h.clone();
    let dist = p.clone();
    let label = format!("P^{}({})", r - k, h.label());
    Ok(SymmetricKernel::new(
        k,
        label,
        move |args: &[&Observation]| {
            let free = inner.order() - args.len();
            let mut acc = Neumaier::default();
            let mut full: Vec<&Observation> = Vec::with_capacity(inner.order());
            for_each_support_tuple(dist.len(), free, |tail| {
                full.clear();
                full.extend_from_slice(args);
                let mut weight = 1.0;
                for &t in tail {
                    full.push(dist.atom(t));
                    weight *= dist.prob(t);
                }
                acc.add(weight * inner.eval(&full));
            });
            acc.total()
        },
    ))
}

/// The expectation `P^r h`.
pub fn expectation(h: &SymmetricKernel, p: &DiscreteDistribution) -> Result<f64, HoeffdingError> {
    Ok(marginalize(h, p, 0)?.eval(&[]))
}

/// The Hoeffding projection `pi_k h`, expanded by inclusion-exclusion over
/// argument subsets. Completely degenerate by construction.
pub fn hoeffding_projection(
    h: &SymmetricKernel,
    p: &DiscreteDistribution,
    k: usize,
) -> Result<SymmetricKernel, HoeffdingError> {
    let r = h.order();
    if k == 0 || k > r {
        return Err(HoeffdingError::InvalidParameter(format!(
            "projection level must be in 1..={r}, got {k}"
        )));
    }
    let marginals: Vec<SymmetricKernel> = (0..=k)
        .map(|a| marginalize(h, p, a))
        .collect::<Result<_, _>>()?;
    let marginals = Arc::new(marginals);
    let label = format!("pi{}({})", k, h.label());
    Ok(SymmetricKernel::new(
        k,
        label,
        move |args: &[&Observation]| {
            let k = args.len();
            let mut acc = Neumaier::default();
            let mut sub: Vec<&Observation> = Vec::with_capacity(k);
            for mask in 0u32..(1u32 << k) {
                sub.clear();
                for (pos, arg) in args.iter().enumerate() {
                    if mask & (1 << pos) != 0 {
                        sub.push(arg);
                    }
                }
                let sign = if (k - sub.len()).is_multiple_of(2) { 1.0 } else { -1.0 };
                acc.add(sign * marginals[sub.len()].eval(&sub));
            }
            acc.total()
        },
    ))
}

/// Degeneracy classification per the largest vanishing marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Degeneracy {
    /// No positive-order marginal vanishes.
    NonDegenerate,
    /// `P^{r-k}h = 0` identically for this `k` (and all below), `k < r-1`.
    DegenerateOfOrder(usize),
    /// Degenerate of order `r-1`.
    CompletelyDegenerate,
}

/// Largest `k` in `1..=r-1` with `P^{r-k}h` vanishing on all of
/// `support^k` within `tol`. Requires `|P^r h| <= tol` (center first).
pub fn degeneracy_order(
    h: &SymmetricKernel,
    p: &DiscreteDistribution,
    tol: f64,
) -> Result<Degeneracy, HoeffdingError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(HoeffdingError::InvalidParameter(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let r = h.order();
    if r < 2 {
        return Err(HoeffdingError::InvalidParameter(
            "degeneracy classification needs order >= 2".into(),
        ));
    }
    check_budget(p.len(), r)?;
    let centered = expectation(h, p)?;
    if centered.abs() > tol {
        return Err(HoeffdingError::NotCentered {
            value: centered.abs(),
            tol,
        });
    }
    for k in (1..r).rev() {
        let marg = marginalize(h, p, k)?;
        let mut vanishes = true;
        let mut args: Vec<&Observation> = Vec::with_capacity(k);
        for_each_support_tuple(p.len(), k, |tuple| {
            if !vanishes {
                return;
            }
            args.clear();
            args.extend(tuple.iter().map(|&t| p.atom(t)));
            if marg.eval(&args).abs() > tol {
                vanishes = false;
            }
        });
        if vanishes {
            return Ok(if k == r - 1 {
                Degeneracy::CompletelyDegenerate
            } else {
                Degeneracy::DegenerateOfOrder(k)
            });
        }
    }
    Ok(Degeneracy::NonDegenerate)
}

/// Both sides of the decomposition identity, computed along independent
/// routes: the left side with the plain U-statistic engine, the right side
/// through the projections.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecompositionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn verify_hoeffding_decomposition(
    sample: &Sample,
    h: &SymmetricKernel,
    p: &DiscreteDistribution,
) -> Result<DecompositionReport, HoeffdingError> {
    let r = h.order();
    let lhs = ustat::u_statistic_exact(sample, h)? - expectation(h, p)?;
    let mut rhs = Neumaier::default();
    for k in 1..=r {
        let projection = hoeffding_projection(h, p, k)?;
        let u_k = ustat::u_statistic_exact(sample, &projection)?;
        rhs.add(ustat::binomial(r, k) as f64 * u_k);
    }
    let rhs = rhs.total();
    Ok(DecompositionReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

// ---------------------------------------------------------------------------
// Randomized suites (shared by the CLI `oracle` subcommand and the
// acceptance tests).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SuiteCase {
    pub label: String,
    pub n: usize,
    pub r: usize,
    pub atoms: usize,
    pub residual: f64,
    pub max_marginal_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<SuiteCase>,
    pub max_abs_residual: f64,
    pub max_marginal_violation: f64,
}

fn random_symmetric_polynomial(rng: &mut impl rand::Rng, order: usize) -> SymmetricKernel {
    let coef: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    SymmetricKernel::new(order, "poly", move |args: &[&Observation]| {
        let vs: Vec<f64> = args.iter().map(|o| o.v()[0]).collect();
        let e1: f64 = vs.iter().sum();
        let mut e2 = 0.0;
        for i in 0..vs.len() {
            for j in (i + 1)..vs.len() {
                e2 += vs[i] * vs[j];
            }
        }
        let prod: f64 = vs.iter().product();
        let sq: f64 = vs.iter().map(|v| v * v).sum();
        coef[0] + coef[1] * e1 + coef[2] * e2 + coef[3] * prod + coef[4] * sq
    })
}

fn scalar_obs(tag: usize, value: f64) -> Observation {
    Observation::new(vec![tag as f64], vec![value]).expect("finite")
}

/// Worst one-argument marginal of `pi_k h` over all support fixings, for
/// all `k`: each value would be exactly zero in real arithmetic.
pub fn max_projection_marginal(
    h: &SymmetricKernel,
    p: &DiscreteDistribution,
) -> Result<f64, HoeffdingError> {
    let r = h.order();
    let mut worst = 0.0f64;
    for k in 1..=r {
        let projection = hoeffding_projection(h, p, k)?;
        let mut args: Vec<&Observation> = Vec::with_capacity(k);
        for_each_support_tuple(p.len(), k - 1, |fixing| {
            let mut acc = Neumaier::default();
            for last in 0..p.len() {
                args.clear();
                args.extend(fixing.iter().map(|&t| p.atom(t)));
                args.push(p.atom(last));
                acc.add(p.prob(last) * projection.eval(&args));
            }
            worst = worst.max(acc.total().abs());
        });
    }
    Ok(worst)
}

/// Randomized decomposition suite: random symmetric polynomial kernels,
/// random discrete distributions, and small random samples.
pub fn decomposition_suite(seed: u64, instances: usize) -> Result<SuiteReport, HoeffdingError> {
    let mut cases = Vec::with_capacity(instances);
    for case in 0..instances {
        let mut rng = rng::stream_rng(rng::derive_seed(seed, domain::ORACLE, case as u64), 0);
        let r = rng.gen_range(2..=3usize);
        let n = rng.gen_range(r + 1..=8usize);
        let atoms = rng.gen_range(2..=4usize);
        let support: Vec<Observation> = (0..atoms)
            .map(|t| scalar_obs(t, rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let raw: Vec<f64> = (0..atoms).map(|_| rng.gen::<f64>() + 0.1).collect();
        let total: f64 = raw.iter().sum();
        let p = DiscreteDistribution::new(support, raw.iter().map(|w| w / total).collect())?;
        let sample = Sample::new(
            (0..n)
                .map(|i| scalar_obs(100 + i, rng.gen::<f64>() * 2.0 - 1.0))
                .collect(),
        )
        .expect("n >= 3");
        let h = random_symmetric_polynomial(&mut rng, r);
        let report = verify_hoeffding_decomposition(&sample, &h, &p)?;
        let marginal = max_projection_marginal(&h, &p)?;
        cases.push(SuiteCase {
            label: format!("case{case}"),
            n,
            r,
            atoms,
            residual: report.residual,
            max_marginal_violation: marginal,
        });
    }
    let max_abs_residual = cases.iter().map(|c| c.residual).fold(0.0, f64::max);
    let max_marginal_violation = cases
        .iter()
        .map(|c| c.max_marginal_violation)
        .fold(0.0, f64::max);
    Ok(SuiteReport {
        cases,
        max_abs_residual,
        max_marginal_violation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyCase {
    pub label: String,
    pub expected: Degeneracy,
    pub got: Degeneracy,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyReport {
    pub cases: Vec<DegeneracyCase>,
    pub all_ok: bool,
}

/// Fixed-form kernels with known degeneracy orders under random discrete
/// distributions.
pub fn degeneracy_suite(seed: u64) -> Result<DegeneracyReport, HoeffdingError> {
    let mut rng = rng::stream_rng(rng::derive_seed(seed, domain::ORACLE, u64::MAX), 0);
    let atoms = 4usize;
    let support: Vec<Observation> = (0..atoms)
        .map(|t| scalar_obs(t, rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    let raw: Vec<f64> = (0..atoms).map(|_| rng.gen::<f64>() + 0.1).collect();
    let total: f64 = raw.iter().sum();
    let p = DiscreteDistribution::new(support, raw.iter().map(|w| w / total).collect())?;
    let mu: f64 = (0..atoms).map(|t| p.prob(t) * p.atom(t).v()[0]).sum();

    let centered_product = SymmetricKernel::new(2, "centered-product", move |args| {
        (args[0].v()[0] - mu) * (args[1].v()[0] - mu)
    });
    let centered_sum = SymmetricKernel::new(2, "centered-sum", move |args| {
        args[0].v()[0] + args[1].v()[0] - 2.0 * mu
    });
    let zero = SymmetricKernel::new(2, "zero", |_| 0.0);
    let pairwise_order3 = SymmetricKernel::new(3, "pairwise-products", move |args| {
        let c: Vec<f64> = args.iter().map(|o| o.v()[0] - mu).collect();
        c[0] * c[1] + c[1] * c[2] + c[0] * c[2]
    });

    let expectations = vec![
        (
            "centered-product",
            centered_product,
            Degeneracy::CompletelyDegenerate,
        ),
        ("centered-sum", centered_sum, Degeneracy::NonDegenerate),
        ("zero", zero, Degeneracy::CompletelyDegenerate),
        (
            "pairwise-products",
            pairwise_order3,
            Degeneracy::DegenerateOfOrder(1),
        ),
    ];
    let mut cases = Vec::new();
    for (label, kernel, expected) in expectations {
        let got = degeneracy_order(&kernel, &p, 1e-10)?;
        cases.push(DegeneracyCase {
            label: label.to_string(),
            expected,
            got,
            ok: got == expected,
        });
    }
    let all_ok = cases.iter().all(|c| c.ok);
    Ok(DegeneracyReport { cases, all_ok })
}
