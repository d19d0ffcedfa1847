//! Localized sup-statistic tests calibrated by the multiplier bootstrap.
//!
//! A test is specified by a base kernel (`gsv`, `llw`, `aw-sign`,
//! `aw-raw`), a grid of design points, one or more bandwidths, and a draw
//! plan. For each theta = (design point, base kernel[, threshold],
//! bandwidth) the observed statistic is
//!
//! ```text
//! S = max over theta of sqrt(n b^m) (U_n(h_theta) - center_theta) / (r c_hat(theta)),
//! ```
//!
//! with the jackknife normalizer
//! `c_hat(theta) = sqrt( b^m / n * sum_i (g[i][theta] - u[theta])^2 )`,
//! and the critical value is the (1 - alpha)-quantile of the bootstrap
//! suprema `max over theta of b^{m/2} U#(theta) / c_hat(theta)`.
//!
//! Centering defaults to zero, the least-favorable null for all shipped
//! kernels; a per-theta centering vector can be supplied for power
//! studies. Thetas whose normalizer sits below a relative floor carry no
//! local information (typically an empty bandwidth window); they are
//! removed from the observed and bootstrap suprema symmetrically and
//! listed in the report.
//!
//! Passing several bandwidths makes the same machinery the
//! uniform-in-bandwidth test: theta ranges over (design point, b) pairs
//! and the `b^{m/2}` scalings are applied per pair on both sides. A
//! singleton bandwidth set is bit-identical to the single-bandwidth test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jmb::{self, BootstrapDraws, JmbError, MultiplierDrawPlan};
use crate::kernels::{
    aw_base_kernel, gsv_base_kernel, llw_base_kernel, KernelError, LocalKernelSpec, SimplexMode,
    SmoothingFamily, SymmetricKernel, DEFAULT_SIMPLEX_TOL,
};
use crate::sample::Sample;
use crate::ustat::{self, JackknifeTable, UstatError};

/// Largest sample size for which the order-(m+2) simplex kernels run the
/// complete enumeration engine by default.
pub const AW_COMPLETE_LIMIT: usize = 300;

#[derive(Debug, Error)]
pub enum TestError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("normalizer for theta {index} is degenerate")]
    DegenerateNormalizer { index: usize },
    #[error("every theta has a degenerate normalizer; no test statistic exists")]
    AllThetaDegenerate,
    #[error(transparent)]
    Ustat(#[from] UstatError),
    #[error(transparent)]
    Jmb(#[from] JmbError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Base-kernel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gsv,
    Llw,
    AwSign,
    AwRaw,
}

impl Method {
    pub const ALL_NAMES: &'static str = "gsv, llw, aw-sign, aw-raw";

    pub fn parse(text: &str) -> Result<Self, TestError> {
        match text {
            "gsv" => Ok(Self::Gsv),
            "llw" => Ok(Self::Llw),
            "aw-sign" => Ok(Self::AwSign),
            "aw-raw" => Ok(Self::AwRaw),
            other => Err(TestError::InvalidParameter(format!(
                "unknown method '{other}'; valid methods: {}",
                Self::ALL_NAMES
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gsv => "gsv",
            Self::Llw => "llw",
            Self::AwSign => "aw-sign",
            Self::AwRaw => "aw-raw",
        }
    }

    /// Kernel order for covariate dimension `m`.
    pub fn order(&self, m: usize) -> usize {
        match self {
            Self::Gsv | Self::Llw => 2,
            Self::AwSign | Self::AwRaw => m + 2,
        }
    }
}

/// The theta grid: design points crossed with thresholds (LLW only) and
/// bandwidths, optionally doubled with negated kernels for two-sided
/// testing.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    method: Method,
    design_points: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    y_thresholds: Vec<f64>,
    two_sided: bool,
    smoothing: SmoothingFamily,
}

impl ThetaGrid {
    pub fn new(
        method: Method,
        design_points: Vec<Vec<f64>>,
        bandwidths: Vec<f64>,
        y_thresholds: Vec<f64>,
        two_sided: bool,
        smoothing: SmoothingFamily,
    ) -> Result<Self, TestError> {
        if design_points.is_empty() {
            return Err(TestError::InvalidParameter("design grid is empty".into()));
        }
        let m = design_points[0].len();
        if m == 0 || design_points.iter().any(|x| x.len() != m) {
            return Err(TestError::InvalidParameter(
                "design points must be nonempty and share one dimension".into(),
            ));
        }
        if design_points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(TestError::InvalidParameter(
                "design points must be finite".into(),
            ));
        }
        if bandwidths.is_empty() {
            return Err(TestError::InvalidParameter("bandwidth set is empty".into()));
        }
        if bandwidths.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(TestError::InvalidParameter(
                "bandwidths must be positive reals".into(),
            ));
        }
        let mut bandwidths = bandwidths;
        bandwidths.sort_unstable_by(f64::total_cmp);
        match method {
            Method::Llw if y_thresholds.is_empty() => {
                return Err(TestError::InvalidParameter(
                    "llw needs a nonempty --y-grid of response thresholds".into(),
                ));
            }
            Method::Llw => {}
            _ if !y_thresholds.is_empty() => {
                return Err(TestError::InvalidParameter(format!(
                    "--y-grid only applies to llw, not {}",
                    method.as_str()
                )));
            }
            _ => {}
        }
        Ok(Self {
            method,
            design_points,
            bandwidths,
            y_thresholds,
            two_sided,
            smoothing,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn design_points(&self) -> &[Vec<f64>] {
        &self.design_points
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn dim(&self) -> usize {
        self.design_points[0].len()
    }

    /// `count` equidistant scalar points spanning `[min, max]` inclusive.
    pub fn equidistant(min: f64, max: f64, count: usize) -> Result<Vec<Vec<f64>>, TestError> {
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(TestError::InvalidParameter(format!(
                "bad grid interval [{min}, {max}]"
            )));
        }
        if count == 0 {
            return Err(TestError::InvalidParameter(
                "grid needs at least one point".into(),
            ));
        }
        if count == 1 {
            return Ok(vec![vec![0.5 * (min + max)]]);
        }
        let step = (max - min) / (count - 1) as f64;
        Ok((0..count).map(|k| vec![min + k as f64 * step]).collect())
    }

    /// Materialize every theta as a localized kernel plus report metadata,
    /// ordered design point -> threshold -> bandwidth -> sign.
    fn materialize(&self) -> Result<(Vec<LocalKernelSpec>, Vec<ThetaInfo>), TestError> {
        let m = self.dim();
        let smoothing = self.smoothing.kernel(m);
        let bases: Vec<SymmetricKernel> = match self.method {
            Method::Gsv => vec![gsv_base_kernel()],
            Method::Llw => self
                .y_thresholds
                .iter()
                .map(|&t| llw_base_kernel(t))
                .collect(),
            Method::AwSign => vec![aw_base_kernel(m, SimplexMode::Sign, DEFAULT_SIMPLEX_TOL)],
            Method::AwRaw => vec![aw_base_kernel(m, SimplexMode::Raw, DEFAULT_SIMPLEX_TOL)],
        };
        let mut specs = Vec::new();
        let mut infos = Vec::new();
        for x in &self.design_points {
            for base in &bases {
                for &b in &self.bandwidths {
                    let signs: &[bool] = if self.two_sided {
                        &[false, true]
                    } else {
                        &[false]
                    };
                    for &negate in signs {
                        let kernel = if negate { base.negated() } else { base.clone() };
                        let spec = LocalKernelSpec::new(kernel, smoothing, x.clone(), b)?;
                        infos.push(ThetaInfo { x: x.clone(), b });
                        specs.push(spec);
                    }
                }
            }
        }
        Ok((specs, infos))
    }
}

#[derive(Debug, Clone)]
struct ThetaInfo {
    x: Vec<f64>,
    b: f64,
}

/// Jackknife normalizing constants `c_hat(theta) = sqrt(b^m *
/// Cov#(theta, theta))`, sharing the conditional-covariance code path so
/// `c_hat^2 = b^m * Cov#` holds exactly.
pub fn normalizing_constant_jackknife(
    table: &JackknifeTable,
    bandwidths: &[f64],
    m: usize,
) -> Vec<f64> {
    assert_eq!(bandwidths.len(), table.num_thetas());
    (0..table.num_thetas())
        .map(|theta| {
            (bandwidths[theta].powi(m as i32) * jmb::conditional_covariance(table, theta, theta))
                .sqrt()
        })
        .collect()
}

/// Relative floor under which a normalizer counts as degenerate:
/// `1e-12 * (1 + max_theta |u|) * sqrt(b^m)`.
pub fn normalizer_floor(u: &[f64], bandwidths: &[f64], m: usize) -> Vec<f64> {
    let u_max = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    bandwidths
        .iter()
        .map(|b| 1e-12 * (1.0 + u_max) * b.powi(m as i32).sqrt())
        .collect()
}

/// The studentized supremum
/// `max_theta sqrt(n b^m) (u[theta] - center[theta]) / (r c_hat[theta])`.
pub fn sup_statistic(
    table: &JackknifeTable,
    c_hat: &[f64],
    bandwidths: &[f64],
    m: usize,
    r: usize,
    centering: Option<&[f64]>,
) -> Result<f64, TestError> {
    let t = table.num_thetas();
    if c_hat.len() != t || bandwidths.len() != t {
        return Err(TestError::InvalidParameter(
            "c_hat and bandwidths must have one entry per theta".into(),
        ));
    }
    if let Some(c) = centering {
        if c.len() != t {
            return Err(TestError::InvalidParameter(
                "centering must have one entry per theta".into(),
            ));
        }
    }
    let floor = normalizer_floor(table.u(), bandwidths, m);
    let n = table.n() as f64;
    let mut best = f64::NEG_INFINITY;
    for theta in 0..t {
        if c_hat[theta] <= floor[theta] {
            return Err(TestError::DegenerateNormalizer { index: theta });
        }
        let center = centering.map_or(0.0, |c| c[theta]);
        let scaled = (n * bandwidths[theta].powi(m as i32)).sqrt() * (table.u()[theta] - center)
            / (r as f64 * c_hat[theta]);
        best = best.max(scaled);
    }
    Ok(best)
}

/// Which U-statistic engine backs the jackknife table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Complete,
    /// Monte Carlo cells with this many sampled tuples each; opt-in.
    Incomplete { terms_per_cell: usize },
}

#[derive(Debug, Clone, Default)]
pub struct TestOptions {
    pub engine: Engine,
    /// Per-theta centering `P^r h_theta` (defaults to zero everywhere).
    pub centering: Option<Vec<f64>>,
}

/// Per-theta report row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerTheta {
    pub x: Vec<f64>,
    pub b: f64,
    pub u: f64,
    pub c_hat: f64,
}

/// JSON-facing result of one test run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TestReport {
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub grid: Vec<Vec<f64>>,
    pub bandwidths: Vec<f64>,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub boot: usize,
    pub seed: u64,
    pub dropped_thetas: Vec<usize>,
    pub per_theta: Vec<PerTheta>,
}

/// Full result of one run: the serializable report plus the draw vector
/// and bookkeeping that simulation studies reuse.
#[derive(Debug, Clone)]
pub struct TestRun {
    pub report: TestReport,
    pub draws: BootstrapDraws,
    pub statistic: f64,
    /// Theta indices that entered both suprema.
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

impl TestRun {
    /// Decision at a nominal size other than the one in the report.
    pub fn reject_at(&self, alpha: f64) -> bool {
        self.statistic > self.draws.quantile(1.0 - alpha)
    }
}

/// Run the bootstrap-calibrated sup test with default options.
pub fn run_test(
    sample: &Sample,
    grid: &ThetaGrid,
    plan: MultiplierDrawPlan,
    alpha: f64,
) -> Result<TestRun, TestError> {
    run_test_with(sample, grid, plan, alpha, &TestOptions::default())
}

pub fn run_test_with(
    sample: &Sample,
    grid: &ThetaGrid,
    plan: MultiplierDrawPlan,
    alpha: f64,
    options: &TestOptions,
) -> Result<TestRun, TestError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TestError::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let m = sample.m();
    let method = grid.method();
    if matches!(method, Method::Gsv | Method::Llw) && m != 1 {
        return Err(TestError::InvalidParameter(format!(
            "{} requires a scalar covariate, got m = {m}",
            method.as_str()
        )));
    }
    if sample.p() != m + 1 {
        return Err(TestError::InvalidParameter(format!(
            "payload must be (x_1..x_m, y): expected p = {}, got {}",
            m + 1,
            sample.p()
        )));
    }
    if grid.dim() != m {
        return Err(TestError::InvalidParameter(format!(
            "design points have dimension {}, sample covariates {}",
            grid.dim(),
            m
        )));
    }
    let r = method.order(m);
    let n = sample.n();
    if n < r + 1 {
        return Err(TestError::Ustat(UstatError::SampleTooSmall {
            n,
            required: r + 1,
        }));
    }
    if matches!(method, Method::AwSign | Method::AwRaw)
        && matches!(options.engine, Engine::Complete)
        && n > AW_COMPLETE_LIMIT
    {
        return Err(TestError::InvalidParameter(format!(
            "complete enumeration of order-{r} tuples is refused for n = {n} > \
             {AW_COMPLETE_LIMIT}; pass --incomplete-terms to opt in to the subsampled engine"
        )));
    }

    let mut warnings = Vec::new();
    for &b in grid.bandwidths() {
        if (n as f64) * b.powf(1.5 * m as f64) < 1.0 {
            warnings.push(format!(
                "bandwidth {b} is outside the admissible rate range (n * b^(3m/2) = {:.3e} < 1)",
                (n as f64) * b.powf(1.5 * m as f64)
            ));
        }
    }

    let (specs, infos) = grid.materialize()?;
    if let Some(c) = &options.centering {
        if c.len() != specs.len() {
            return Err(TestError::InvalidParameter(format!(
                "centering has {} entries for {} thetas",
                c.len(),
                specs.len()
            )));
        }
    }
    let table = match options.engine {
        Engine::Complete => ustat::jackknife_table_local(sample, &specs)?,
        Engine::Incomplete { terms_per_cell } => {
            ustat::jackknife_table_incomplete(sample, &specs, terms_per_cell, plan.seed)?
        }
    };
    let per_theta_b: Vec<f64> = infos.iter().map(|i| i.b).collect();
    let c_hat = normalizing_constant_jackknife(&table, &per_theta_b, m);
    let floor = normalizer_floor(table.u(), &per_theta_b, m);
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for theta in 0..table.num_thetas() {
        if c_hat[theta] > floor[theta] {
            kept.push(theta);
        } else {
            dropped.push(theta);
        }
    }
    if kept.is_empty() {
        return Err(TestError::AllThetaDegenerate);
    }

    let sub_table = table.select_columns(&kept);
    let sub_b: Vec<f64> = kept.iter().map(|&t| per_theta_b[t]).collect();
    let sub_c: Vec<f64> = kept.iter().map(|&t| c_hat[t]).collect();
    let sub_centering: Option<Vec<f64>> = options
        .centering
        .as_ref()
        .map(|c| kept.iter().map(|&t| c[t]).collect());
    let statistic = sup_statistic(&sub_table, &sub_c, &sub_b, m, r, sub_centering.as_deref())?;
    let scale: Vec<f64> = sub_b
        .iter()
        .zip(&sub_c)
        .map(|(b, c)| b.powi(m as i32).sqrt() / c)
        .collect();
    let draws = jmb::bootstrap_sup_draws(&sub_table, &scale, plan)?;
    let critical_value = draws.quantile(1.0 - alpha);
    let p_value = draws.p_value(statistic);
    let report = TestReport {
        method: method.as_str().to_string(),
        n,
        m,
        r,
        grid: grid.design_points().to_vec(),
        bandwidths: grid.bandwidths().to_vec(),
        statistic,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        alpha,
        boot: plan.draws,
        seed: plan.seed,
        dropped_thetas: dropped,
        per_theta: infos
            .iter()
            .enumerate()
            .map(|(t, info)| PerTheta {
                x: info.x.clone(),
                b: info.b,
                u: table.u()[t],
                c_hat: c_hat[t],
            })
            .collect(),
    };
    Ok(TestRun {
        report,
        draws,
        statistic,
        kept,
        warnings,
    })
}
