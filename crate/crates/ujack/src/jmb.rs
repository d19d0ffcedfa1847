//! Jackknife multiplier bootstrap draws.
//!
//! Given a jackknife table, the multiplier process evaluates as
//!
//! ```text
//! U#(theta) = n^{-1/2} * sum_i xi_i * (g[i][theta] - u[theta]),
//! ```
//!
//! with `xi_1..xi_n` i.i.d. standard normal, independent of the data.
//! Conditionally on the data this is a centered Gaussian vector whose
//! covariance is exactly `C(theta, theta') = n^{-1} sum_i (g[i][theta] -
//! u[theta]) (g[i][theta'] - u[theta'])` — see [`conditional_covariance`].
//!
//! A bootstrap draw is the maximum over theta of `scale[theta] *
//! U#(theta)`; [`bootstrap_sup_draws`] produces `B` of them, each from its
//! own multiplier stream keyed by `(seed, draw index)`, so generation is
//! embarrassingly parallel yet bit-reproducible at any thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{self, domain};
use crate::ustat::JackknifeTable;

#[derive(Debug, Error)]
pub enum JmbError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scale[{index}] = {value} is not positive")]
    NonPositiveScale { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// How many conditional-Gaussian draws to generate and from which seed.
/// The multiplier law is standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplierDrawPlan {
    pub draws: usize,
    pub seed: u64,
}

impl MultiplierDrawPlan {
    pub fn new(draws: usize, seed: u64) -> Result<Self, JmbError> {
        if draws == 0 {
            return Err(JmbError::InvalidParameter(
                "draw count must be at least 1".into(),
            ));
        }
        Ok(Self { draws, seed })
    }
}

/// Sorted draws of the scaled bootstrap supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    values: Vec<f64>,
    seed: u64,
}

impl BootstrapDraws {
    /// Wrap raw draw values (sorts them).
    pub fn from_values(mut values: Vec<f64>, seed: u64) -> Self {
        values.sort_unstable_by(f64::total_cmp);
        Self { values, seed }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Ascending draw values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The conditional alpha-quantile: the ceil(alpha * B)-th order
    /// statistic, i.e. `inf { t : P(draw <= t) >= alpha }` under the
    /// empirical bootstrap law.
    pub fn quantile(&self, alpha: f64) -> f64 {
        assert!(
            alpha > 0.0 && alpha < 1.0,
            "alpha must be in (0,1), got {alpha}"
        );
        let b = self.values.len();
        let rank = ((alpha * b as f64).ceil() as usize).clamp(1, b);
        self.values[rank - 1]
    }

    /// Finite-sample corrected p-value `(1 + #{draws >= observed}) / (B + 1)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let below = self.values.partition_point(|v| *v < observed);
        let ge = self.values.len() - below;
        (1 + ge) as f64 / (self.values.len() + 1) as f64
    }
}

/// The multiplier process at every theta for one multiplier vector `xi`.
pub fn multiplier_draw(table: &JackknifeTable, xi: &[f64]) -> Result<Vec<f64>, JmbError> {
    let n = table.n();
    if xi.len() != n {
        return Err(JmbError::DimensionMismatch {
            expected: n,
            got: xi.len(),
        });
    }
    let centered = table.centered_rows();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    Ok(centered
        .rows()
        .into_iter()
        .map(|row| {
            let dot: f64 = row.iter().zip(xi).map(|(c, x)| c * x).sum();
            inv_sqrt_n * dot
        })
        .collect())
}

/// Conditional covariance of the multiplier process between two thetas:
/// `n^{-1} sum_i (g[i][a] - u[a]) (g[i][b] - u[b])`.
pub fn conditional_covariance(table: &JackknifeTable, a: usize, b: usize) -> f64 {
    let n = table.n();
    let (ua, ub) = (table.u()[a], table.u()[b]);
    let mut acc = 0.0;
    for i in 0..n {
        acc += (table.g_at(i, a) - ua) * (table.g_at(i, b) - ub);
    }
    acc / n as f64
}

/// Generate `plan.draws` bootstrap suprema: draw `t` uses multipliers from
/// stream `(plan.seed, t)` and takes the max over theta of
/// `scale[theta] * U#(theta)`.
pub fn bootstrap_sup_draws(
    table: &JackknifeTable,
    scale: &[f64],
    plan: MultiplierDrawPlan,
) -> Result<BootstrapDraws, JmbError> {
    let t = table.num_thetas();
    if scale.len() != t {
        return Err(JmbError::DimensionMismatch {
            expected: t,
            got: scale.len(),
        });
    }
    if let Some((index, &value)) =
        scale.iter().enumerate().find(|(_, s)| s.is_nan() || **s <= 0.0)
    {
        return Err(JmbError::NonPositiveScale { index, value });
    }
    if t == 0 {
        return Err(JmbError::InvalidParameter(
            "table has no theta columns".into(),
        ));
    }
    let n = table.n();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let centered = table.centered_rows();
    let key = rng::derive_seed(plan.seed, domain::MULTIPLIER, 0);
    let values: Vec<f64> = (0..plan.draws)
        .into_par_iter()
        .map(|draw| {
            let mut stream = rng::stream_rng(key, draw as u64);
            let xi: Vec<f64> = (0..n)
                .map(|_| stream.sample::<f64, _>(StandardNormal))
                .collect();
            let mut best = f64::NEG_INFINITY;
            for (theta, row) in centered.rows().into_iter().enumerate() {
                let dot: f64 = row.iter().zip(&xi).map(|(c, x)| c * x).sum();
                best = best.max(scale[theta] * inv_sqrt_n * dot);
            }
            best
        })
        .collect();
    Ok(BootstrapDraws::from_values(values, plan.seed))
}
