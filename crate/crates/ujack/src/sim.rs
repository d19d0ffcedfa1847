//! Monte Carlo harness for the regression-monotonicity size study.
//!
//! Each replication synthesizes a null sample (uniform covariates, zero
//! regression function, Gaussian or Rademacher errors), runs the
//! bootstrap-calibrated monotonicity test, and records the p-value plus
//! rejection decisions at every requested nominal size. Replications run
//! in parallel; each derives its own seed from `(master seed, index)`, so
//! the aggregate is reproducible at any thread count.
//!
//! Desk-scale defaults (500 replications x 500 draws) trade the full-scale
//! 5000 x 2000 design for minutes of runtime; the acceptance bands widen
//! accordingly to a few binomial standard deviations.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::jmb::MultiplierDrawPlan;
use crate::kernels::SmoothingFamily;
use crate::rng::{self, domain};
use crate::sample::{synthesize_null_regression, ErrorDistribution, SampleError};
use crate::stattests::{run_test, Method, TestError, ThetaGrid};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Test(#[from] TestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Serialize for ErrorDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Study configuration; see [`SimConfig::parse`] for the file format.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub n: usize,
    pub error: ErrorDistribution,
    pub replications: usize,
    pub bootstrap: usize,
    pub alphas: Vec<f64>,
    pub bandwidth_exponent: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Desk-scale defaults around a sample size and seed: 500 x 500,
    /// `b = n^{-1/5}`, 19 grid points in [0.05, 0.95], alphas 0.05 / 0.10.
    pub fn desk_scale(n: usize, error: ErrorDistribution, seed: u64) -> Self {
        Self {
            n,
            error,
            replications: 500,
            bootstrap: 500,
            alphas: vec![0.05, 0.10],
            bandwidth_exponent: -0.2,
            grid_min: 0.05,
            grid_max: 0.95,
            grid_points: 19,
            seed,
        }
    }

    /// Parse a flat `key=value` config. Keys: `n`, `error`, `reps`,
    /// `boot`, `alpha_list`, `grid_min`, `grid_max`, `grid_points`,
    /// `bandwidth_exponent`, `seed`. Blank lines and `#` comments are
    /// skipped; `n`, `error`, `reps`, `boot`, `seed` are required.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut n = None;
        let mut error = None;
        let mut reps = None;
        let mut boot = None;
        let mut seed = None;
        let mut alphas = vec![0.05, 0.10];
        let mut bandwidth_exponent = -0.2;
        let (mut grid_min, mut grid_max, mut grid_points) = (0.05, 0.95, 19usize);
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| SimError::Config {
                line: line_no + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_f64 = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("bad number '{v}'")))
            };
            match key {
                "n" => {
                    n = Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad count '{value}'")))?,
                    )
                }
                "error" => error = Some(ErrorDistribution::parse(value)?),
                "reps" => {
                    reps = Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad count '{value}'")))?,
                    )
                }
                "boot" => {
                    boot = Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad count '{value}'")))?,
                    )
                }
                "alpha_list" => {
                    alphas = value
                        .split(',')
                        .map(|a| parse_f64(a.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "grid_min" => grid_min = parse_f64(value)?,
                "grid_max" => grid_max = parse_f64(value)?,
                "grid_points" => {
                    grid_points = value
                        .parse()
                        .map_err(|_| bad(format!("bad count '{value}'")))?
                }
                "bandwidth_exponent" => bandwidth_exponent = parse_f64(value)?,
                "seed" => {
                    seed = Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad seed '{value}'")))?,
                    )
                }
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        let require = |name: &str| {
            SimError::InvalidParameter(format!("config is missing required key '{name}'"))
        };
        let config = Self {
            n: n.ok_or_else(|| require("n"))?,
            error: error.ok_or_else(|| require("error"))?,
            replications: reps.ok_or_else(|| require("reps"))?,
            bootstrap: boot.ok_or_else(|| require("boot"))?,
            alphas,
            bandwidth_exponent,
            grid_min,
            grid_max,
            grid_points,
            seed: seed.ok_or_else(|| require("seed"))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.replications == 0 || self.bootstrap == 0 {
            return Err(SimError::InvalidParameter(
                "reps and boot must be at least 1".into(),
            ));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0 < *a && *a < 1.0)) {
            return Err(SimError::InvalidParameter(
                "alpha_list entries must lie strictly inside (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        (self.n as f64).powf(self.bandwidth_exponent)
    }

    fn grid(&self) -> Result<ThetaGrid, SimError> {
        Ok(ThetaGrid::new(
            Method::Gsv,
            ThetaGrid::equidistant(self.grid_min, self.grid_max, self.grid_points)?,
            vec![self.bandwidth()],
            vec![],
            false,
            SmoothingFamily::Epanechnikov,
        )?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaRate {
    pub alpha: f64,
    pub rate: f64,
}

/// Study output. Wall-clock runtime is kept out of the serialized form so
/// identical inputs produce byte-identical result files.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub rates: Vec<AlphaRate>,
    pub p_values: Vec<f64>,
    pub n_errors: usize,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

/// Run the size study described by `config`.
///
/// Per-replication failures (e.g. a degenerate grid for an unlucky draw)
/// are counted in `n_errors` rather than aborting the study.
pub fn run_size_study(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let started = Instant::now();
    let grid = config.grid()?;
    let outcomes: Vec<Result<(f64, Vec<bool>), ()>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = rng::derive_seed(config.seed, domain::SIM_REPLICATION, rep as u64);
            let sample =
                synthesize_null_regression(config.n, config.error, rep_seed).map_err(|_| ())?;
            let plan = MultiplierDrawPlan::new(config.bootstrap, rep_seed).map_err(|_| ())?;
            let run = run_test(&sample, &grid, plan, config.alphas[0]).map_err(|_| ())?;
            let rejects = config.alphas.iter().map(|&a| run.reject_at(a)).collect();
            Ok((run.report.p_value, rejects))
        })
        .collect();
    let mut p_values = Vec::with_capacity(config.replications);
    let mut reject_counts = vec![0usize; config.alphas.len()];
    let mut n_errors = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok((p, rejects)) => {
                p_values.push(p);
                for (k, rejected) in rejects.into_iter().enumerate() {
                    if rejected {
                        reject_counts[k] += 1;
                    }
                }
            }
            Err(()) => n_errors += 1,
        }
    }
    let successes = p_values.len().max(1);
    let rates = config
        .alphas
        .iter()
        .zip(&reject_counts)
        .map(|(&alpha, &count)| AlphaRate {
            alpha,
            rate: count as f64 / successes as f64,
        })
        .collect();
    Ok(SimResult {
        config: config.clone(),
        rates,
        p_values,
        n_errors,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Empirical rejection curve on the nominal-size grid 0.01..0.99:
/// `rate(alpha) = #{p <= alpha} / #p`.
pub fn emit_rejection_curve(result: &SimResult) -> Vec<(f64, f64)> {
    let total = result.p_values.len().max(1) as f64;
    (1..100)
        .map(|k| {
            let alpha = k as f64 / 100.0;
            let hits = result.p_values.iter().filter(|p| **p <= alpha).count();
            (alpha, hits as f64 / total)
        })
        .collect()
}

/// The curve as CSV text with an `alpha,rate` header.
pub fn curve_csv(result: &SimResult) -> String {
    let mut out = String::from("alpha,rate\n");
    for (alpha, rate) in emit_rejection_curve(result) {
        writeln!(out, "{alpha},{rate}").expect("write to string");
    }
    out
}

/// Kolmogorov-Smirnov distance between the sample and Uniform[0,1].
pub fn ks_distance_uniform(p_values: &[f64]) -> f64 {
    if p_values.is_empty() {
        return 0.0;
    }
    let mut sorted = p_values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let hi = (i + 1) as f64 / n - p;
            let lo = p - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at the given level:
/// `sqrt(-ln(level / 2) / 2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, level: f64) -> f64 {
    assert!(n > 0 && level > 0.0 && level < 1.0);
    ((-(level / 2.0).ln()) / 2.0).sqrt() / (n as f64).sqrt()
}

/// Dvoretzky-Kiefer-Wolfowitz half-width: a band of this radius around the
/// diagonal holds the whole empirical CDF with probability 1 - delta.
pub fn dkw_epsilon(n: usize, delta: f64) -> f64 {
    assert!(n > 0 && delta > 0.0 && delta < 1.0);
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}
