//! U-statistic kernels: symmetric base kernels, compactly supported
//! smoothing kernels, and their bandwidth-localized composition.
//!
//! A localized kernel evaluates as
//!
//! ```text
//! h(d_1, .., d_r) = phi(v_1, .., v_r) * prod_k L_b(x - x_k),   L_b(u) = b^-m L(u/b),
//! ```
//!
//! where `phi` reads only the payloads, `L` is supported in the sup-norm
//! box `[-1,1]^m`, and `x` is the design point. The composed kernel is
//! exactly zero whenever any observation falls outside the bandwidth box,
//! which is what makes spatial pruning in `ustat` lossless.
//!
//! Shipped base kernels:
//! - `gsv`: sign(y_j - y_i) * sign(x_i - x_j), regression monotonicity;
//! - `llw`: {1(y_i <= t) - 1(y_j <= t)} * sign(x_i - x_j), stochastic
//!   monotonicity at a response threshold t (local Kendall's tau);
//! - `aw-sign` / `aw-raw`: the order-(m+2) simplex kernels for curvature,
//!   built on barycentric interpolation error.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sample::Observation;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Interior/independence tolerance for [`simplex_membership`].
pub const DEFAULT_SIMPLEX_TOL: f64 = 1e-10;

/// Exact three-valued sign: `1(t > 0) - 1(t < 0)`.
#[inline]
pub fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

type KernelFn = dyn Fn(&[&Observation]) -> f64 + Send + Sync;

/// An order-`r` kernel, symmetric under any permutation of its arguments.
#[derive(Clone)]
pub struct SymmetricKernel {
    order: usize,
    label: String,
    eval: Arc<KernelFn>,
}

impl SymmetricKernel {
    /// Order 0 is allowed and denotes a constant (a fully marginalized
    /// kernel), evaluated with an empty argument list.
    pub fn new(
        order: usize,
        label: impl Into<String>,
        eval: impl Fn(&[&Observation]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            order,
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, args: &[&Observation]) -> f64 {
        debug_assert_eq!(args.len(), self.order);
        (self.eval)(args)
    }

    /// The kernel `-h`, used to fold two-sided tests into one-sided sups.
    pub fn negated(&self) -> Self {
        let inner = Arc::clone(&self.eval);
        Self {
            order: self.order,
            label: format!("-{}", self.label),
            eval: Arc::new(move |args| -(inner)(args)),
        }
    }
}

impl std::fmt::Debug for SymmetricKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricKernel")
            .field("order", &self.order)
            .field("label", &self.label)
            .finish()
    }
}

/// Smoothing kernel family selectable from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingFamily {
    Epanechnikov,
    Uniform,
}

impl SmoothingFamily {
    pub fn parse(text: &str) -> Result<Self, KernelError> {
        match text {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "uniform" => Ok(Self::Uniform),
            other => Err(KernelError::InvalidParameter(format!(
                "unknown smoothing kernel '{other}'; expected epanechnikov or uniform"
            ))),
        }
    }

    pub fn kernel(self, dim: usize) -> SmoothingKernel {
        match self {
            Self::Epanechnikov => SmoothingKernel::Epanechnikov { dim },
            Self::Uniform => SmoothingKernel::Uniform { dim },
        }
    }
}

/// Smoothing kernel `L` supported in the sup-norm box `[-1,1]^dim` with
/// unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingKernel {
    /// Product Epanechnikov: `prod_j 0.75 (1 - u_j^2)` on the box.
    Epanechnikov { dim: usize },
    /// Constant `2^-dim` on the box.
    Uniform { dim: usize },
}

impl SmoothingKernel {
    pub fn dim(&self) -> usize {
        match *self {
            Self::Epanechnikov { dim } | Self::Uniform { dim } => dim,
        }
    }

    /// `L(u)`; zero whenever any `|u_j| > 1`.
    pub fn eval(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        if u.iter().any(|c| c.abs() > 1.0) {
            return 0.0;
        }
        match self {
            Self::Epanechnikov { .. } => u.iter().map(|c| 0.75 * (1.0 - c * c)).product(),
            Self::Uniform { dim } => 0.5f64.powi(*dim as i32),
        }
    }

    /// `L_b(x - xk) = b^-dim L((x - xk)/b)` without intermediate allocation.
    #[inline]
    pub fn eval_scaled_at(&self, x: &[f64], xk: &[f64], b: f64) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(xk.len(), self.dim());
        let inv_b = 1.0 / b;
        let mut f = inv_b.powi(self.dim() as i32);
        match self {
            Self::Epanechnikov { .. } => {
                for (a, c) in x.iter().zip(xk) {
                    let u = (a - c) * inv_b;
                    if u.abs() > 1.0 {
                        return 0.0;
                    }
                    f *= 0.75 * (1.0 - u * u);
                }
            }
            Self::Uniform { dim } => {
                for (a, c) in x.iter().zip(xk) {
                    if ((a - c) * inv_b).abs() > 1.0 {
                        return 0.0;
                    }
                }
                f *= 0.5f64.powi(*dim as i32);
            }
        }
        f
    }
}

/// The univariate Epanechnikov kernel `L(u) = 0.75 (1 - u^2)` on `[-1,1]`.
pub fn epanechnikov() -> SmoothingKernel {
    SmoothingKernel::Epanechnikov { dim: 1 }
}

/// Monotonicity base kernel: `phi(v_i, v_j) = sign(y_j - y_i) sign(x_i - x_j)`
/// for scalar-covariate payloads `v = (x, y)`.
pub fn gsv_base_kernel() -> SymmetricKernel {
    SymmetricKernel::new(2, "gsv", |args: &[&Observation]| {
        let (vi, vj) = (args[0].v(), args[1].v());
        sign(vj[1] - vi[1]) * sign(vi[0] - vj[0])
    })
}

/// Local Kendall's tau base kernel at response threshold `t`:
/// `phi(v_i, v_j) = {1(y_i <= t) - 1(y_j <= t)} sign(x_i - x_j)`.
pub fn llw_base_kernel(y_threshold: f64) -> SymmetricKernel {
    let t = y_threshold;
    SymmetricKernel::new(2, format!("llw[y={t}]"), move |args: &[&Observation]| {
        let (vi, vj) = (args[0].v(), args[1].v());
        let ind = |y: f64| if y <= t { 1.0 } else { 0.0 };
        (ind(vi[1]) - ind(vj[1])) * sign(vi[0] - vj[0])
    })
}

/// Which value the simplex kernel reports from the interpolation error `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexMode {
    /// `1{in D} * sign(w)`.
    Sign,
    /// `1{in D} * w`, the modified statistic that drops the symmetric-error
    /// assumption.
    Raw,
}

/// Decide whether one of `m+2` covariate points lies in the open simplex
/// spanned by the other `m+1`, which must themselves be affinely
/// independent (smallest singular value of their difference matrix above
/// `tol`).
///
/// Returns the interpolated point's index together with its barycentric
/// weights over the remaining points (in input order, skipping the index),
/// or `None` when no point qualifies. Weights are required to lie in
/// `(tol, 1 - tol)`, so configurations on or near the simplex boundary are
/// excluded.
pub fn simplex_membership(points: &[&[f64]], tol: f64) -> Option<(usize, Vec<f64>)> {
    let total = points.len();
    debug_assert!(total >= 2);
    let m = points[0].len();
    debug_assert_eq!(total, m + 2);
    debug_assert!(tol > 0.0);

    'candidate: for j in 0..total {
        let rest: Vec<&[f64]> = (0..total).filter(|&i| i != j).map(|i| points[i]).collect();
        // Affine independence of the m+1 remaining points.
        if m > 0 {
            let diff = DMatrix::from_fn(m, m, |row, col| rest[col + 1][row] - rest[0][row]);
            let sv = diff.singular_values();
            if sv.iter().any(|&s| s <= tol) {
                continue;
            }
        }
        // Barycentric system: sum_i a_i rest_i = x_j, sum_i a_i = 1.
        let a_mat = DMatrix::from_fn(
            m + 1,
            m + 1,
            |row, col| {
                if row < m {
                    rest[col][row]
                } else {
                    1.0
                }
            },
        );
        let mut rhs = DVector::zeros(m + 1);
        for row in 0..m {
            rhs[row] = points[j][row];
        }
        rhs[m] = 1.0;
        let Some(weights) = a_mat.lu().solve(&rhs) else {
            continue;
        };
        for &a in weights.iter() {
            if !(a > tol && a < 1.0 - tol) {
                continue 'candidate;
            }
        }
        return Some((j, weights.iter().copied().collect()));
    }
    None
}

/// Localized simplex base kernel of order `m + 2` on payloads `v = (x, y)`.
///
/// With `(j, a)` from [`simplex_membership`] on the covariate points, the
/// interpolation error is `w = sum_{i != j} a_i y_i - y_j`; the kernel is
/// `sign(w)` or `w` per `mode`, and zero outside the membership set.
/// Arguments are canonicalized by sorting before the membership scan so
/// evaluation is bitwise permutation-invariant.
pub fn aw_base_kernel(m: usize, mode: SimplexMode, tol: f64) -> SymmetricKernel {
    let label = match mode {
        SimplexMode::Sign => "aw-sign",
        SimplexMode::Raw => "aw-raw",
    };
    SymmetricKernel::new(m + 2, label, move |args: &[&Observation]| {
        let mut order: Vec<usize> = (0..args.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            args[a]
                .v()
                .iter()
                .zip(args[b].v())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let points: Vec<&[f64]> = order.iter().map(|&i| &args[i].v()[..m]).collect();
        let Some((j, a)) = simplex_membership(&points, tol) else {
            return 0.0;
        };
        let y = |k: usize| args[order[k]].v()[m];
        let mut w = -y(j);
        let mut ai = a.iter();
        for k in 0..points.len() {
            if k != j {
                w += ai.next().expect("one weight per remaining point") * y(k);
            }
        }
        match mode {
            SimplexMode::Sign => sign(w),
            SimplexMode::Raw => w,
        }
    })
}

/// A base kernel localized at a design point with a bandwidth.
#[derive(Clone)]
pub struct LocalKernelSpec {
    base: SymmetricKernel,
    smoothing: SmoothingKernel,
    design_point: Vec<f64>,
    bandwidth: f64,
}

impl LocalKernelSpec {
    pub fn new(
        base: SymmetricKernel,
        smoothing: SmoothingKernel,
        design_point: Vec<f64>,
        bandwidth: f64,
    ) -> Result<Self, KernelError> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(KernelError::InvalidParameter(format!(
                "bandwidth must be a positive real, got {bandwidth}"
            )));
        }
        if smoothing.dim() != design_point.len() {
            return Err(KernelError::InvalidParameter(format!(
                "smoothing kernel dimension {} != design point dimension {}",
                smoothing.dim(),
                design_point.len()
            )));
        }
        if design_point.iter().any(|c| !c.is_finite()) {
            return Err(KernelError::InvalidParameter(
                "design point must be finite".into(),
            ));
        }
        Ok(Self {
            base,
            smoothing,
            design_point,
            bandwidth,
        })
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn dim(&self) -> usize {
        self.design_point.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn design_point(&self) -> &[f64] {
        &self.design_point
    }

    pub fn base(&self) -> &SymmetricKernel {
        &self.base
    }

    pub fn label(&self) -> String {
        format!(
            "{}@x={:?},b={}",
            self.base.label(),
            self.design_point,
            self.bandwidth
        )
    }

    /// Is `obs` inside the bandwidth box around the design point?
    #[inline]
    pub fn in_support(&self, obs: &Observation) -> bool {
        self.design_point
            .iter()
            .zip(obs.x())
            .all(|(c, xc)| (c - xc).abs() <= self.bandwidth)
    }

    /// `phi(v_1..v_r) * prod_k L_b(x - x_k)`.
    pub fn eval(&self, args: &[&Observation]) -> f64 {
        debug_assert_eq!(args.len(), self.order());
        let mut weight = 1.0;
        for obs in args {
            let f = self
                .smoothing
                .eval_scaled_at(&self.design_point, obs.x(), self.bandwidth);
            if f == 0.0 {
                return 0.0;
            }
            weight *= f;
        }
        self.base.eval(args) * weight
    }

    /// The composed kernel as a plain [`SymmetricKernel`], for running the
    /// unpruned engine against the pruned one.
    pub fn to_symmetric(&self) -> SymmetricKernel {
        let spec = self.clone();
        SymmetricKernel::new(self.order(), self.label(), move |args| spec.eval(args))
    }
}

impl std::fmt::Debug for LocalKernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalKernelSpec")
            .field("base", &self.base.label())
            .field("smoothing", &self.smoothing)
            .field("design_point", &self.design_point)
            .field("bandwidth", &self.bandwidth)
            .finish()
    }
}
