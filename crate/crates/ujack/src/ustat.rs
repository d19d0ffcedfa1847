//! Exact, pruned, and subsampled U-statistic evaluation, plus the
//! leave-one-out jackknife table consumed by the multiplier bootstrap.
//!
//! For a symmetric order-`r` kernel `h` on a sample of size `n`, the
//! U-statistic is the average of `h` over all ordered `r`-tuples of
//! distinct indices. Symmetry lets us enumerate each unordered subset once
//! in lexicographic order; this both cuts the work by `r!` and fixes the
//! accumulation order, so results never depend on the thread count.
//!
//! The jackknife table stores, per kernel, the leave-one-out values
//!
//! ```text
//! g[i] = |I_{n-1,r-1}|^-1 * sum over (r-1)-subsets S of {1..n}\{i} of h(D_i, D_S)
//! ```
//!
//! together with `u = U_n(h)`. The average of `g[1..n]` equals `u`
//! identically; all sums are Neumaier-compensated so the identity holds to
//! ~1e-15 relative in floating point.
//!
//! Localized kernels vanish outside the bandwidth box around their design
//! point, so their tuple sums only visit observations inside the box.
//! Candidates come from a spatial hash of the covariates with cell side
//! `b` (the 3^m neighborhood of the design point's cell covers the box
//! exactly), then an exact support filter. Pruned results are identical to
//! unpruned ones; excluded tuples contribute exact zeros.

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{LocalKernelSpec, SymmetricKernel};
use crate::rng::{self, domain};
use crate::sample::{Observation, Sample};

#[derive(Debug, Error)]
pub enum UstatError {
    #[error("sample too small: n = {n}, need n >= {required}")]
    SampleTooSmall { n: usize, required: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Visit all `k`-element subsets of `0..n` in lexicographic order.
pub(crate) fn for_each_combination<F: FnMut(&[usize])>(n: usize, k: usize, mut f: F) {
    if k == 0 {
        f(&[]);
        return;
    }
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return;
        }
        idx[pos - 1] += 1;
        for j in pos..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `C(n, k)` as an exact integer; all uses here stay far below 2^53 so the
/// f64 conversion is exact.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for j in 0..k {
        // exact at each step: num * (n - j) is divisible by j + 1
        num = num * (n - j) as u128 / (j + 1) as u128;
    }
    num
}

/// Spatial hash of covariates into cells of side `cell`; candidate lookup
/// returns every observation in the 3^m neighborhood of a query point's
/// cell, which is a superset of the sup-norm ball of radius `cell`.
pub(crate) struct SpatialBuckets {
    cell: f64,
    dim: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialBuckets {
    pub(crate) fn build(sample: &Sample, cell: f64) -> Self {
        debug_assert!(cell > 0.0);
        let dim = sample.m();
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, obs) in sample.iter().enumerate() {
            let key: Vec<i64> = obs.x().iter().map(|c| (c / cell).floor() as i64).collect();
            buckets.entry(key).or_default().push(i);
        }
        Self { cell, dim, buckets }
    }

    /// Sorted candidate indices around `x`.
    pub(crate) fn candidates(&self, x: &[f64]) -> Vec<usize> {
        debug_assert_eq!(x.len(), self.dim);
        let base: Vec<i64> = x.iter().map(|c| (c / self.cell).floor() as i64).collect();
        let mut out = Vec::new();
        let combos = 3usize.pow(self.dim as u32);
        let mut key = vec![0i64; self.dim];
        for code in 0..combos {
            let mut c = code;
            for (d, k) in key.iter_mut().enumerate() {
                *k = base[d] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(v) = self.buckets.get(&key) {
                out.extend_from_slice(v);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Compensated sum of `eval` over the `r`-subsets of `members`, divided by
/// `C(n_total, r)`.
fn u_over_members(
    sample: &Sample,
    members: &[usize],
    r: usize,
    n_total: usize,
    eval: &(dyn Fn(&[&Observation]) -> f64 + Sync),
) -> f64 {
    let mut acc = Neumaier::default();
    let mut args: Vec<&Observation> = Vec::with_capacity(r);
    for_each_combination(members.len(), r, |subset| {
        args.clear();
        args.extend(subset.iter().map(|&s| sample.obs(members[s])));
        acc.add(eval(&args));
    });
    acc.total() / binomial(n_total, r) as f64
}

/// Exact `U_n(h)` by complete enumeration of unordered `r`-subsets.
pub fn u_statistic_exact(sample: &Sample, h: &SymmetricKernel) -> Result<f64, UstatError> {
    let (n, r) = (sample.n(), h.order());
    if n < r {
        return Err(UstatError::SampleTooSmall { n, required: r });
    }
    let members: Vec<usize> = (0..n).collect();
    Ok(u_over_members(sample, &members, r, n, &|args| h.eval(args)))
}

/// `U_n` of the composed local kernel, enumerating only observations inside
/// the bandwidth box around the design point. Exactly equal to
/// [`u_statistic_exact`] on `spec.to_symmetric()`.
pub fn u_statistic_pruned(sample: &Sample, spec: &LocalKernelSpec) -> Result<f64, UstatError> {
    let (n, r) = (sample.n(), spec.order());
    if n < r {
        return Err(UstatError::SampleTooSmall { n, required: r });
    }
    if spec.dim() != sample.m() {
        return Err(UstatError::InvalidParameter(format!(
            "design point dimension {} != sample covariate dimension {}",
            spec.dim(),
            sample.m()
        )));
    }
    let buckets = SpatialBuckets::build(sample, spec.bandwidth());
    let survivors: Vec<usize> = buckets
        .candidates(spec.design_point())
        .into_iter()
        .filter(|&i| spec.in_support(sample.obs(i)))
        .collect();
    if survivors.len() < r {
        return Ok(0.0);
    }
    Ok(u_over_members(sample, &survivors, r, n, &|args| {
        spec.eval(args)
    }))
}

/// Unbiased Monte Carlo estimate of `U_n(h)`: the average of `h` over
/// `n_terms` uniformly drawn distinct-index `r`-subsets. Deterministic
/// given `seed`; never silently substituted for the complete engine.
pub fn u_statistic_incomplete(
    sample: &Sample,
    h: &SymmetricKernel,
    n_terms: usize,
    seed: u64,
) -> Result<f64, UstatError> {
    let (n, r) = (sample.n(), h.order());
    if n < r {
        return Err(UstatError::SampleTooSmall { n, required: r });
    }
    if n_terms == 0 {
        return Err(UstatError::InvalidParameter(
            "n_terms must be at least 1".into(),
        ));
    }
    let mut rng = rng::stream_rng(rng::derive_seed(seed, domain::INCOMPLETE, 0), 0);
    let mut acc = Neumaier::default();
    let mut args: Vec<&Observation> = Vec::with_capacity(r);
    for _ in 0..n_terms {
        let pick = rand::seq::index::sample(&mut rng, n, r);
        args.clear();
        args.extend(pick.iter().map(|i| sample.obs(i)));
        acc.add(h.eval(&args));
    }
    Ok(acc.total() / n_terms as f64)
}

/// Leave-one-out values `g[i][theta]` and totals `u[theta]` for a family of
/// kernels sharing one order.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeTable {
    g: Array2<f64>,
    u: Vec<f64>,
    r: usize,
    labels: Vec<String>,
}

impl JackknifeTable {
    fn from_columns(
        n: usize,
        r: usize,
        labels: Vec<String>,
        columns: Vec<(f64, Vec<f64>)>,
    ) -> Self {
        let t = columns.len();
        let mut g = Array2::zeros((n, t));
        let mut u = Vec::with_capacity(t);
        for (theta, (u_theta, col)) in columns.into_iter().enumerate() {
            u.push(u_theta);
            for (i, v) in col.into_iter().enumerate() {
                g[(i, theta)] = v;
            }
        }
        let table = Self { g, u, r, labels };
        debug_assert!(table.max_averaging_residual() <= 1e-12);
        table
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn num_thetas(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn g_at(&self, i: usize, theta: usize) -> f64 {
        self.g[(i, theta)]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Centered rows, one per theta: `c[theta][i] = g[i][theta] - u[theta]`.
    pub fn centered_rows(&self) -> Array2<f64> {
        let (n, t) = (self.n(), self.num_thetas());
        Array2::from_shape_fn((t, n), |(theta, i)| self.g[(i, theta)] - self.u[theta])
    }

    /// Worst relative gap between `mean_i g[i][theta]` and `u[theta]`.
    pub fn max_averaging_residual(&self) -> f64 {
        let n = self.n() as f64;
        self.u
            .iter()
            .enumerate()
            .map(|(theta, &u)| {
                let mut acc = Neumaier::default();
                for i in 0..self.n() {
                    acc.add(self.g[(i, theta)]);
                }
                (acc.total() / n - u).abs() / (1.0 + u.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Sub-table keeping only the listed theta columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let n = self.n();
        let mut g = Array2::zeros((n, keep.len()));
        for (new_t, &old_t) in keep.iter().enumerate() {
            for i in 0..n {
                g[(i, new_t)] = self.g[(i, old_t)];
            }
        }
        Self {
            g,
            u: keep.iter().map(|&t| self.u[t]).collect(),
            r: self.r,
            labels: keep.iter().map(|&t| self.labels[t].clone()).collect(),
        }
    }
}

fn common_order<T>(items: &[T], order_of: impl Fn(&T) -> usize) -> Result<usize, UstatError> {
    let Some(first) = items.first() else {
        return Err(UstatError::InvalidParameter("kernel list is empty".into()));
    };
    let r = order_of(first);
    if r == 0 {
        return Err(UstatError::InvalidParameter(
            "jackknife tables need kernels of order at least 1".into(),
        ));
    }
    if items.iter().any(|k| order_of(k) != r) {
        return Err(UstatError::InvalidParameter(
            "all kernels in one table must share the same order".into(),
        ));
    }
    Ok(r)
}

/// One table column: complete enumeration over `members`.
fn table_column(
    sample: &Sample,
    members: &[usize],
    r: usize,
    eval: &(dyn Fn(&[&Observation]) -> f64 + Sync),
) -> (f64, Vec<f64>) {
    let n = sample.n();
    let mut u_acc = Neumaier::default();
    let mut g_acc = vec![Neumaier::default(); n];
    let mut args: Vec<&Observation> = Vec::with_capacity(r);
    for_each_combination(members.len(), r, |subset| {
        args.clear();
        args.extend(subset.iter().map(|&s| sample.obs(members[s])));
        let val = eval(&args);
        u_acc.add(val);
        for &s in subset {
            g_acc[members[s]].add(val);
        }
    });
    let u = u_acc.total() / binomial(n, r) as f64;
    let per_row = binomial(n - 1, r - 1) as f64;
    let g = g_acc.into_iter().map(|acc| acc.total() / per_row).collect();
    (u, g)
}

/// Jackknife table for plain symmetric kernels (no pruning).
pub fn jackknife_table(
    sample: &Sample,
    kernels: &[SymmetricKernel],
) -> Result<JackknifeTable, UstatError> {
    let r = common_order(kernels, |k| k.order())?;
    let n = sample.n();
    if n < r + 1 {
        return Err(UstatError::SampleTooSmall { n, required: r + 1 });
    }
    let members: Vec<usize> = (0..n).collect();
    let columns: Vec<(f64, Vec<f64>)> = kernels
        .par_iter()
        .map(|k| table_column(sample, &members, r, &|args| k.eval(args)))
        .collect();
    let labels = kernels.iter().map(|k| k.label().to_string()).collect();
    Ok(JackknifeTable::from_columns(n, r, labels, columns))
}

/// Jackknife table for localized kernels, pruned to each design point's
/// bandwidth box. Observations outside the box get exact zero rows.
pub fn jackknife_table_local(
    sample: &Sample,
    specs: &[LocalKernelSpec],
) -> Result<JackknifeTable, UstatError> {
    let r = common_order(specs, |s| s.order())?;
    let n = sample.n();
    if n < r + 1 {
        return Err(UstatError::SampleTooSmall { n, required: r + 1 });
    }
    if specs.iter().any(|s| s.dim() != sample.m()) {
        return Err(UstatError::InvalidParameter(
            "design point dimension must match the sample covariate dimension".into(),
        ));
    }
    // One spatial hash per distinct bandwidth, shared across columns.
    let mut buckets: HashMap<u64, SpatialBuckets> = HashMap::new();
    for spec in specs {
        buckets
            .entry(spec.bandwidth().to_bits())
            .or_insert_with(|| SpatialBuckets::build(sample, spec.bandwidth()));
    }
    let columns: Vec<(f64, Vec<f64>)> = specs
        .par_iter()
        .map(|spec| {
            let survivors: Vec<usize> = buckets[&spec.bandwidth().to_bits()]
                .candidates(spec.design_point())
                .into_iter()
                .filter(|&i| spec.in_support(sample.obs(i)))
                .collect();
            if survivors.len() < r {
                return (0.0, vec![0.0; n]);
            }
            table_column(sample, &survivors, r, &|args| spec.eval(args))
        })
        .collect();
    let labels = specs.iter().map(|s| s.label()).collect();
    Ok(JackknifeTable::from_columns(n, r, labels, columns))
}

/// Subsampled jackknife table for kernels whose order makes complete
/// enumeration infeasible. Each cell averages `terms_per_cell` random
/// (r-1)-subsets drawn inside the support box (rescaled so the cell stays
/// unbiased for the complete `g[i]`), and `u` is defined as the row mean of
/// `g`, preserving the averaging identity by construction.
pub fn jackknife_table_incomplete(
    sample: &Sample,
    specs: &[LocalKernelSpec],
    terms_per_cell: usize,
    seed: u64,
) -> Result<JackknifeTable, UstatError> {
    let r = common_order(specs, |s| s.order())?;
    let n = sample.n();
    if n < r + 1 {
        return Err(UstatError::SampleTooSmall { n, required: r + 1 });
    }
    if terms_per_cell == 0 {
        return Err(UstatError::InvalidParameter(
            "terms_per_cell must be at least 1".into(),
        ));
    }
    if specs.iter().any(|s| s.dim() != sample.m()) {
        return Err(UstatError::InvalidParameter(
            "design point dimension must match the sample covariate dimension".into(),
        ));
    }
    let mut buckets: HashMap<u64, SpatialBuckets> = HashMap::new();
    for spec in specs {
        buckets
            .entry(spec.bandwidth().to_bits())
            .or_insert_with(|| SpatialBuckets::build(sample, spec.bandwidth()));
    }
    let complete_per_row = binomial(n - 1, r - 1) as f64;
    let columns: Vec<(f64, Vec<f64>)> = specs
        .par_iter()
        .enumerate()
        .map(|(theta, spec)| {
            let survivors: Vec<usize> = buckets[&spec.bandwidth().to_bits()]
                .candidates(spec.design_point())
                .into_iter()
                .filter(|&i| spec.in_support(sample.obs(i)))
                .collect();
            let key = rng::derive_seed(seed, domain::INCOMPLETE, theta as u64);
            let mut g = vec![0.0; n];
            let mut args: Vec<&Observation> = Vec::with_capacity(r);
            for &i in &survivors {
                let rest: Vec<usize> = survivors.iter().copied().filter(|&j| j != i).collect();
                if rest.len() < r - 1 {
                    continue;
                }
                let ratio = binomial(rest.len(), r - 1) as f64 / complete_per_row;
                let mut cell_rng = rng::stream_rng(key, i as u64);
                let mut acc = Neumaier::default();
                for _ in 0..terms_per_cell {
                    let pick = rand::seq::index::sample(&mut cell_rng, rest.len(), r - 1);
                    args.clear();
                    args.push(sample.obs(i));
                    args.extend(pick.iter().map(|s| sample.obs(rest[s])));
                    acc.add(spec.eval(&args));
                }
                g[i] = ratio * acc.total() / terms_per_cell as f64;
            }
            let mut u_acc = Neumaier::default();
            for &v in &g {
                u_acc.add(v);
            }
            (u_acc.total() / n as f64, g)
        })
        .collect();
    let labels = specs.iter().map(|s| s.label()).collect();
    Ok(JackknifeTable::from_columns(n, r, labels, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{epanechnikov, gsv_base_kernel};
    use crate::rng::stream_rng;
    use crate::sample::{synthesize_null_regression, ErrorDistribution};
    use rand::Rng;

    fn scalar_sample(values: &[f64]) -> Sample {
        let obs = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Observation::new(vec![i as f64], vec![v]).unwrap())
            .collect();
        Sample::new(obs).unwrap()
    }

    fn payload_product(order: usize) -> SymmetricKernel {
        SymmetricKernel::new(order, "prod", |args: &[&Observation]| {
            args.iter().map(|o| o.v()[0]).product()
        })
    }

    /// Independent oracle: plain sum over ordered tuples of distinct indices.
    fn brute_force_u(sample: &Sample, r: usize, eval: &dyn Fn(&[&Observation]) -> f64) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut idx = vec![0usize; r];
        fn rec(
            sample: &Sample,
            idx: &mut Vec<usize>,
            depth: usize,
            eval: &dyn Fn(&[&Observation]) -> f64,
            total: &mut f64,
            count: &mut usize,
        ) {
            let (n, r) = (sample.n(), idx.len());
            if depth == r {
                let args: Vec<&Observation> = idx.iter().map(|&i| sample.obs(i)).collect();
                *total += eval(&args);
                *count += 1;
                return;
            }
            for i in 0..n {
                if idx[..depth].contains(&i) {
                    continue;
                }
                idx[depth] = i;
                rec(sample, idx, depth + 1, eval, total, count);
            }
        }
        rec(sample, &mut idx, 0, eval, &mut total, &mut count);
        total / count as f64
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(60, 3), 34220);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn constant_kernel_gives_one() {
        let s = scalar_sample(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        let one = SymmetricKernel::new(2, "one", |_: &[&Observation]| 1.0);
        assert_eq!(u_statistic_exact(&s, &one).unwrap(), 1.0);
    }

    #[test]
    fn product_kernel_matches_hand_value() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0]);
        let u = u_statistic_exact(&s, &payload_product(2)).unwrap();
        assert!((u - 35.0 / 6.0).abs() <= 1e-14);
        let oracle = brute_force_u(&s, 2, &|args| args.iter().map(|o| o.v()[0]).product());
        assert!((u - oracle).abs() <= 1e-13);
    }

    #[test]
    fn order_three_matches_brute_force() {
        let s = scalar_sample(&[1.0, 1.0, 2.0, 3.0, 5.0]);
        let u = u_statistic_exact(&s, &payload_product(3)).unwrap();
        let oracle = brute_force_u(&s, 3, &|args| args.iter().map(|o| o.v()[0]).product());
        assert!((u - oracle).abs() <= 1e-13, "{u} vs {oracle}");
    }

    #[test]
    fn sample_too_small_is_reported() {
        let s = scalar_sample(&[1.0, 2.0]);
        let err = u_statistic_exact(&s, &payload_product(3)).unwrap_err();
        assert!(matches!(
            err,
            UstatError::SampleTooSmall { n: 2, required: 3 }
        ));
    }

    #[test]
    fn jackknife_hand_values() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0]);
        let table = jackknife_table(&s, &[payload_product(2)]).unwrap();
        let expected = [3.0, 16.0 / 3.0, 7.0, 8.0];
        for (i, want) in expected.iter().enumerate() {
            assert!((table.g_at(i, 0) - want).abs() <= 1e-14);
        }
        assert!((table.u()[0] - 35.0 / 6.0).abs() <= 1e-14);
        assert!(table.max_averaging_residual() <= 1e-14);
    }

    #[test]
    fn jackknife_constant_kernel() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let c = SymmetricKernel::new(2, "c", |_: &[&Observation]| 2.5);
        let table = jackknife_table(&s, &[c]).unwrap();
        assert!(table.u()[0] == 2.5);
        for i in 0..5 {
            assert_eq!(table.g_at(i, 0), 2.5);
        }
    }

    #[test]
    fn jackknife_rows_match_direct_formula_for_pairs() {
        let sample =
            synthesize_null_regression(30, ErrorDistribution::Gaussian { sd: 1.0 }, 3).unwrap();
        let spec =
            LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), vec![0.5], 0.35).unwrap();
        let table = jackknife_table_local(&sample, std::slice::from_ref(&spec)).unwrap();
        for i in 0..sample.n() {
            // g[i] = (n-1)^-1 sum_{j != i} h(D_i, D_j), straight double loop.
            let mut direct = 0.0;
            for j in 0..sample.n() {
                if j != i {
                    direct += spec.eval(&[sample.obs(i), sample.obs(j)]);
                }
            }
            direct /= (sample.n() - 1) as f64;
            assert!((table.g_at(i, 0) - direct).abs() <= 1e-13);
        }
        let direct_u = brute_force_u(&sample, 2, &|args| spec.eval(args));
        assert!((table.u()[0] - direct_u).abs() <= 1e-13);
    }

    #[test]
    fn pruned_empty_support_is_zero() {
        let sample =
            synthesize_null_regression(40, ErrorDistribution::Gaussian { sd: 1.0 }, 4).unwrap();
        let spec =
            LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), vec![50.0], 0.2).unwrap();
        assert_eq!(u_statistic_pruned(&sample, &spec).unwrap(), 0.0);
    }

    #[test]
    fn pruned_matches_exact_engine() {
        let sample =
            synthesize_null_regression(200, ErrorDistribution::Gaussian { sd: 0.3 }, 9).unwrap();
        let spec =
            LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), vec![0.4], 0.25).unwrap();
        let pruned = u_statistic_pruned(&sample, &spec).unwrap();
        let exact = u_statistic_exact(&sample, &spec.to_symmetric()).unwrap();
        assert!((pruned - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn oversized_bandwidth_prunes_nothing() {
        let sample =
            synthesize_null_regression(60, ErrorDistribution::Gaussian { sd: 0.3 }, 10).unwrap();
        let b = 2.0 * sample.covariate_diameter();
        let spec = LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), vec![0.5], b).unwrap();
        let pruned = u_statistic_pruned(&sample, &spec).unwrap();
        let exact = u_statistic_exact(&sample, &spec.to_symmetric()).unwrap();
        assert_eq!(pruned, exact);
    }

    #[test]
    fn sample_order_does_not_change_u() {
        let sample =
            synthesize_null_regression(25, ErrorDistribution::Gaussian { sd: 0.5 }, 12).unwrap();
        let spec = LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), vec![0.5], 0.4).unwrap();
        let u = u_statistic_exact(&sample, &spec.to_symmetric()).unwrap();
        let mut obs: Vec<Observation> = sample.iter().cloned().collect();
        let mut rng = stream_rng(1, 0);
        for i in (1..obs.len()).rev() {
            let j = rng.gen_range(0..=i);
            obs.swap(i, j);
        }
        let shuffled = Sample::new(obs).unwrap();
        let u2 = u_statistic_exact(&shuffled, &spec.to_symmetric()).unwrap();
        assert!((u - u2).abs() <= 1e-12 * (1.0 + u.abs()));
    }

    #[test]
    fn incomplete_constant_kernel_is_exact() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let one = SymmetricKernel::new(2, "one", |_: &[&Observation]| 1.0);
        assert_eq!(u_statistic_incomplete(&s, &one, 1000, 0).unwrap(), 1.0);
    }

    #[test]
    fn incomplete_is_deterministic() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = payload_product(2);
        let a = u_statistic_incomplete(&s, &k, 5000, 42).unwrap();
        let b = u_statistic_incomplete(&s, &k, 5000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn incomplete_estimates_the_exact_value() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = payload_product(2);
        let exact = u_statistic_exact(&s, &k).unwrap();
        // Sample standard deviation of the kernel over all unordered pairs.
        let mut vals = Vec::new();
        for_each_combination(6, 2, |c| {
            vals.push(s.obs(c[0]).v()[0] * s.obs(c[1]).v()[0]);
        });
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd =
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
        let n_terms = 100_000;
        let est = u_statistic_incomplete(&s, &k, n_terms, 7).unwrap();
        let margin = 3.0 * sd / (n_terms as f64).sqrt();
        assert!(
            (est - exact).abs() <= margin,
            "est {est}, exact {exact}, margin {margin}"
        );
    }

    #[test]
    fn incomplete_table_preserves_averaging_identity() {
        let sample =
            synthesize_null_regression(30, ErrorDistribution::Gaussian { sd: 0.5 }, 77).unwrap();
        let spec =
            LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), vec![0.5], 0.45).unwrap();
        let table =
            jackknife_table_incomplete(&sample, std::slice::from_ref(&spec), 50, 5).unwrap();
        assert!(table.max_averaging_residual() <= 1e-13);
        let rerun =
            jackknife_table_incomplete(&sample, std::slice::from_ref(&spec), 50, 5).unwrap();
        assert_eq!(table, rerun);
    }

    #[test]
    fn select_columns_projects_the_table() {
        let s = scalar_sample(&[1.0, 2.0, 3.0, 4.0]);
        let k1 = payload_product(2);
        let k2 = SymmetricKernel::new(2, "sum", |args: &[&Observation]| {
            args.iter().map(|o| o.v()[0]).sum()
        });
        let table = jackknife_table(&s, &[k1, k2]).unwrap();
        let sub = table.select_columns(&[1]);
        assert_eq!(sub.num_thetas(), 1);
        assert_eq!(sub.u()[0], table.u()[1]);
        assert_eq!(sub.labels()[0], "sum");
        for i in 0..4 {
            assert_eq!(sub.g_at(i, 0), table.g_at(i, 1));
        }
    }
}
