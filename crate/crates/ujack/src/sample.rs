//! Observations, samples, CSV ingestion, and synthetic null data.
//!
//! An [`Observation`] carries a covariate vector `x` of length `m` and a
//! payload vector `v` of length `p`. For the regression tests shipped here
//! the payload convention is `v = (x_1, .., x_m, y)` with the response
//! last, so base kernels can read both the covariate and the response.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{self, domain};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}, column '{col}': cannot parse '{value}' as a real number")]
    Parse {
        row: usize,
        col: String,
        value: String,
    },
    #[error("row {row}, column '{col}': non-finite value")]
    NonFiniteValue { row: usize, col: String },
    #[error("no data rows in '{0}'")]
    EmptyFile(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One data point `D = (x, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl Observation {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self, SampleError> {
        if x.is_empty() || v.is_empty() {
            return Err(SampleError::InvalidParameter(
                "observation needs at least one covariate and one payload coordinate".into(),
            ));
        }
        if x.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(SampleError::InvalidParameter(
                "observation coordinates must be finite".into(),
            ));
        }
        Ok(Self { x, v })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// Immutable ordered collection of observations with common dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    observations: Vec<Observation>,
    m: usize,
    p: usize,
}

impl Sample {
    pub fn new(observations: Vec<Observation>) -> Result<Self, SampleError> {
        if observations.len() < 2 {
            return Err(SampleError::InvalidParameter(format!(
                "a sample needs at least 2 observations, got {}",
                observations.len()
            )));
        }
        let m = observations[0].x.len();
        let p = observations[0].v.len();
        for (i, o) in observations.iter().enumerate() {
            if o.x.len() != m || o.v.len() != p {
                return Err(SampleError::InvalidParameter(format!(
                    "observation {i} has dimensions ({}, {}), expected ({m}, {p})",
                    o.x.len(),
                    o.v.len()
                )));
            }
        }
        Ok(Self { observations, m, p })
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn obs(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Largest sup-norm distance between any two covariate vectors.
    pub fn covariate_diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                let dij = self.observations[i]
                    .x
                    .iter()
                    .zip(&self.observations[j].x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                d = d.max(dij);
            }
        }
        d
    }

    /// Write as CSV with generated header `x1..xm,v1..vp`.
    ///
    /// Floats are printed with the shortest representation that parses back
    /// to the same bits, so `load_csv` on the result reproduces the sample
    /// exactly.
    pub fn save_csv(&self, path: &Path) -> Result<(), SampleError> {
        let mut out = String::new();
        let mut header: Vec<String> = (1..=self.m).map(|j| format!("x{j}")).collect();
        header.extend((1..=self.p).map(|j| format!("v{j}")));
        out.push_str(&header.join(","));
        out.push('\n');
        for o in &self.observations {
            let mut first = true;
            for c in o.x.iter().chain(o.v.iter()) {
                if !first {
                    out.push(',');
                }
                write!(out, "{c}").expect("write to string");
                first = false;
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Load a sample from a headed CSV file, selecting covariate and payload
/// columns by name. Columns may be selected more than once (e.g. the
/// covariate also appearing inside the payload).
pub fn load_csv(
    path: &Path,
    covariate_columns: &[String],
    payload_columns: &[String],
) -> Result<Sample, SampleError> {
    if covariate_columns.is_empty() || payload_columns.is_empty() {
        return Err(SampleError::InvalidParameter(
            "need at least one covariate column and one payload column".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &String| -> Result<usize, SampleError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SampleError::MissingColumn(name.clone()))
    };
    let x_idx: Vec<usize> = covariate_columns
        .iter()
        .map(index_of)
        .collect::<Result<_, _>>()?;
    let v_idx: Vec<usize> = payload_columns
        .iter()
        .map(index_of)
        .collect::<Result<_, _>>()?;

    let mut observations = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |idx: usize, name: &str| -> Result<f64, SampleError> {
            let raw = record.get(idx).unwrap_or("");
            let value: f64 = raw.trim().parse().map_err(|_| SampleError::Parse {
                row: row_no,
                col: name.to_string(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(SampleError::NonFiniteValue {
                    row: row_no,
                    col: name.to_string(),
                });
            }
            Ok(value)
        };
        let x: Vec<f64> = x_idx
            .iter()
            .zip(covariate_columns)
            .map(|(&i, name)| cell(i, name))
            .collect::<Result<_, _>>()?;
        let v: Vec<f64> = v_idx
            .iter()
            .zip(payload_columns)
            .map(|(&i, name)| cell(i, name))
            .collect::<Result<_, _>>()?;
        observations.push(Observation::new(x, v)?);
    }
    if observations.is_empty() {
        return Err(SampleError::EmptyFile(path.display().to_string()));
    }
    Sample::new(observations)
}

/// Regression error law for synthetic null data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDistribution {
    Gaussian { sd: f64 },
    Rademacher { scale: f64 },
}

impl ErrorDistribution {
    pub fn parse(text: &str) -> Result<Self, SampleError> {
        let t = text.trim();
        let inner = |prefix: &str| -> Option<&str> {
            t.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')
        };
        if let Some(arg) = inner("gaussian") {
            let sd: f64 = arg
                .trim()
                .parse()
                .map_err(|_| SampleError::InvalidParameter(format!("bad gaussian sd '{arg}'")))?;
            return Ok(Self::Gaussian { sd });
        }
        if let Some(arg) = inner("rademacher") {
            let scale: f64 = arg.trim().parse().map_err(|_| {
                SampleError::InvalidParameter(format!("bad rademacher scale '{arg}'"))
            })?;
            return Ok(Self::Rademacher { scale });
        }
        Err(SampleError::InvalidParameter(format!(
            "unknown error distribution '{t}'; expected gaussian(SD) or rademacher(SCALE)"
        )))
    }
}

impl std::fmt::Display for ErrorDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Gaussian { sd } => write!(f, "gaussian({sd})"),
            Self::Rademacher { scale } => write!(f, "rademacher({scale})"),
        }
    }
}

/// Draw `n` observations with `X ~ Uniform[0,1]`, zero regression function,
/// and `Y = eps` from the requested error law. Payload is `(x, y)`.
///
/// Pure function of `(n, error, seed)`.
pub fn synthesize_null_regression(
    n: usize,
    error: ErrorDistribution,
    seed: u64,
) -> Result<Sample, SampleError> {
    if n < 2 {
        return Err(SampleError::InvalidParameter(format!(
            "n must be at least 2, got {n}"
        )));
    }
    match error {
        ErrorDistribution::Gaussian { sd } if sd <= 0.0 || !sd.is_finite() => {
            return Err(SampleError::InvalidParameter(format!(
                "sd must be positive, got {sd}"
            )));
        }
        ErrorDistribution::Rademacher { scale } if scale <= 0.0 || !scale.is_finite() => {
            return Err(SampleError::InvalidParameter(format!(
                "scale must be positive, got {scale}"
            )));
        }
        _ => {}
    }
    let mut rng = rng::stream_rng(rng::derive_seed(seed, domain::SYNTHESIZE, 0), 0);
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen();
        let y = match error {
            ErrorDistribution::Gaussian { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            ErrorDistribution::Rademacher { scale } => {
                if rng.gen::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
        };
        observations.push(Observation::new(vec![x], vec![x, y]).expect("finite draws"));
    }
    Sample::new(observations)
}
