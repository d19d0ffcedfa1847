//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured quantities (run with
//! `cargo test --test acceptance -- --nocapture` to see them all).

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use ujack::hoeffding;
use ujack::jmb::{self, MultiplierDrawPlan};
use ujack::kernels::{
    aw_base_kernel, epanechnikov, gsv_base_kernel, llw_base_kernel, LocalKernelSpec, SimplexMode,
    SymmetricKernel, DEFAULT_SIMPLEX_TOL,
};
use ujack::rng::stream_rng;
use ujack::sample::{synthesize_null_regression, ErrorDistribution, Sample};
use ujack::sim::{self, SimConfig, SimResult};
use ujack::stattests::{run_test, Method, ThetaGrid};
use ujack::ustat;

const MASTER_SEED: u64 = 988_227_011;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn random_base_kernel(rng: &mut impl Rng, which: usize) -> (SymmetricKernel, &'static str) {
    match which % 3 {
        0 => (gsv_base_kernel(), "gsv"),
        1 => (llw_base_kernel(rng.gen::<f64>() * 0.4 - 0.2), "llw"),
        _ => (
            aw_base_kernel(1, SimplexMode::Sign, DEFAULT_SIMPLEX_TOL),
            "aw",
        ),
    }
}

fn random_null_sample(rng: &mut impl Rng, n: usize) -> Sample {
    synthesize_null_regression(n, ErrorDistribution::Gaussian { sd: 0.1 }, rng.gen()).unwrap()
}

/// Criterion 1: randomized Hoeffding decomposition residuals at 1e-10,
/// 20 instances with n <= 8, r <= 3, at most 4 atoms, inside 10 seconds.
#[test]
fn criterion_1_hoeffding_decomposition_identity() {
    let started = Instant::now();
    let suite = hoeffding::decomposition_suite(MASTER_SEED, 20).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let ok = suite.max_abs_residual <= 1e-10 && elapsed < 10.0;
    println!(
        "[criterion 1] {}: decomposition max |LHS - RHS| = {:.3e} over {} instances in {:.2}s",
        verdict(ok),
        suite.max_abs_residual,
        suite.cases.len(),
        elapsed
    );
    assert!(ok, "residual {} elapsed {elapsed}", suite.max_abs_residual);
}

/// Criterion 2: every projection in the suite is completely degenerate —
/// its one-argument marginal vanishes on all support points within 1e-10.
#[test]
fn criterion_2_projection_complete_degeneracy() {
    let suite = hoeffding::decomposition_suite(MASTER_SEED, 20).unwrap();
    let ok = suite.max_marginal_violation <= 1e-10;
    println!(
        "[criterion 2] {}: worst projected-kernel marginal = {:.3e}",
        verdict(ok),
        suite.max_marginal_violation
    );
    assert!(ok, "marginal violation {}", suite.max_marginal_violation);
}

/// Criterion 3: jackknife averaging identity on 50 random tables
/// (n <= 60; gsv, llw, and aw kernels) at 1e-12 relative.
#[test]
fn criterion_3_jackknife_averaging_identity() {
    let mut rng = stream_rng(MASTER_SEED, 3);
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let (base, _) = random_base_kernel(&mut rng, instance);
        let n = if base.order() == 3 {
            rng.gen_range(12..=40)
        } else {
            rng.gen_range(12..=60)
        };
        let sample = random_null_sample(&mut rng, n);
        let specs: Vec<LocalKernelSpec> = (0..rng.gen_range(2..=4usize))
            .map(|_| {
                LocalKernelSpec::new(
                    base.clone(),
                    epanechnikov(),
                    vec![rng.gen::<f64>() * 0.8 + 0.1],
                    rng.gen::<f64>() * 0.5 + 0.25,
                )
                .unwrap()
            })
            .collect();
        let table = ustat::jackknife_table_local(&sample, &specs).unwrap();
        worst = worst.max(table.max_averaging_residual());
    }
    let ok = worst <= 1e-12;
    println!(
        "[criterion 3] {}: worst relative averaging residual over 50 tables = {:.3e}",
        verdict(ok),
        worst
    );
    assert!(ok, "residual {worst}");
}

/// Criterion 4: Monte Carlo covariance of 1e5 multiplier draws matches the
/// conditional covariance within 5 standard errors for 10 random
/// theta-pairs, inside 30 seconds.
#[test]
fn criterion_4_conditional_covariance_identity() {
    let started = Instant::now();
    let sample =
        synthesize_null_regression(150, ErrorDistribution::Gaussian { sd: 0.1 }, MASTER_SEED)
            .unwrap();
    let b = (150f64).powf(-0.2);
    let specs: Vec<LocalKernelSpec> = ThetaGrid::equidistant(0.05, 0.95, 19)
        .unwrap()
        .into_iter()
        .map(|x| LocalKernelSpec::new(gsv_base_kernel(), epanechnikov(), x, b).unwrap())
        .collect();
    let table = ustat::jackknife_table_local(&sample, &specs).unwrap();
    let t = table.num_thetas();
    let mut rng = stream_rng(MASTER_SEED, 4);
    let pairs: Vec<(usize, usize)> = (0..10)
        .map(|_| (rng.gen_range(0..t), rng.gen_range(0..t)))
        .collect();

    let m = 100_000usize;
    let mut sums = vec![0.0f64; t];
    let mut cross = vec![0.0f64; pairs.len()];
    let mut draw_rng = stream_rng(MASTER_SEED, 5);
    for _ in 0..m {
        let xi: Vec<f64> = (0..sample.n())
            .map(|_| draw_rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let stats = jmb::multiplier_draw(&table, &xi).unwrap();
        for (theta, s) in stats.iter().enumerate() {
            sums[theta] += s;
        }
        for (k, &(a, b)) in pairs.iter().enumerate() {
            cross[k] += stats[a] * stats[b];
        }
    }
    let m_f = m as f64;
    let mut ok = true;
    let mut worst_sigmas = 0.0f64;
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let want = jmb::conditional_covariance(&table, a, b);
        let got = cross[k] / m_f - (sums[a] / m_f) * (sums[b] / m_f);
        let caa = jmb::conditional_covariance(&table, a, a);
        let cbb = jmb::conditional_covariance(&table, b, b);
        let se = ((caa * cbb + want * want) / m_f).sqrt();
        let sigmas = (got - want).abs() / se;
        worst_sigmas = worst_sigmas.max(sigmas);
        if sigmas > 5.0 {
            ok = false;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ok = ok && elapsed < 30.0;
    println!(
        "[criterion 4] {}: covariance match over 10 pairs, worst deviation = {:.2} se, {:.2}s",
        verdict(ok),
        worst_sigmas,
        elapsed
    );
    assert!(ok, "worst {worst_sigmas} se, elapsed {elapsed}");
}

/// Criterion 5: pruned and exact U-statistic engines agree to 1e-12
/// relative on 50 random localized instances.
#[test]
fn criterion_5_pruned_equals_exact() {
    let mut rng = stream_rng(MASTER_SEED, 6);
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let (base, _) = random_base_kernel(&mut rng, instance);
        let n = if base.order() == 3 {
            rng.gen_range(10..=40)
        } else {
            rng.gen_range(10..=60)
        };
        let sample = random_null_sample(&mut rng, n);
        let spec = LocalKernelSpec::new(
            base,
            epanechnikov(),
            vec![rng.gen::<f64>() * 1.2 - 0.1],
            rng.gen::<f64>() * 0.6 + 0.05,
        )
        .unwrap();
        let pruned = ustat::u_statistic_pruned(&sample, &spec).unwrap();
        let exact = ustat::u_statistic_exact(&sample, &spec.to_symmetric()).unwrap();
        let rel = (pruned - exact).abs() / (1.0 + exact.abs());
        worst = worst.max(rel);
    }
    let ok = worst <= 1e-12;
    println!(
        "[criterion 5] {}: worst pruned-vs-exact relative difference = {:.3e}",
        verdict(ok),
        worst
    );
    assert!(ok, "difference {worst}");
}

/// The two desk-scale studies (shared between criteria 6 and 7).
fn desk_scale_studies() -> &'static (SimResult, SimResult, f64) {
    static STUDIES: OnceLock<(SimResult, SimResult, f64)> = OnceLock::new();
    STUDIES.get_or_init(|| {
        let started = Instant::now();
        let gaussian = sim::run_size_study(&SimConfig::desk_scale(
            100,
            ErrorDistribution::Gaussian { sd: 0.1 },
            MASTER_SEED,
        ))
        .unwrap();
        let rademacher = sim::run_size_study(&SimConfig::desk_scale(
            100,
            ErrorDistribution::Rademacher { scale: 0.1 },
            MASTER_SEED,
        ))
        .unwrap();
        (gaussian, rademacher, started.elapsed().as_secs_f64())
    })
}

/// Criterion 6: desk-scale size reproduction for the monotonicity test
/// (n = 100, b = n^{-1/5}, 19 grid points, 500 x 500), with the rejection
/// rate inside the widened binomial bands around the full-scale values.
#[test]
fn criterion_6_size_study_reproduction() {
    let (gaussian, rademacher, elapsed) = desk_scale_studies();
    let elapsed = *elapsed;
    let mut ok = elapsed < 900.0;
    for (label, study) in [("gaussian", gaussian), ("rademacher", rademacher)] {
        assert_eq!(study.n_errors, 0, "{label} study had failing replications");
        let at = |alpha: f64| {
            study
                .rates
                .iter()
                .find(|r| (r.alpha - alpha).abs() < 1e-12)
                .map(|r| r.rate)
                .unwrap()
        };
        let (r05, r10) = (at(0.05), at(0.10));
        let pass = (0.01..=0.09).contains(&r05) && (0.04..=0.13).contains(&r10);
        ok = ok && pass;
        println!(
            "[criterion 6] {}: {label} rejection rate {:.4} at alpha=0.05 (band [0.01, 0.09]), \
             {:.4} at alpha=0.10 (band [0.04, 0.13])",
            verdict(pass),
            r05,
            r10
        );
    }
    println!("[criterion 6] both studies finished in {elapsed:.1}s (budget 900s)");
    assert!(ok);
}

/// Criterion 7: the 500 desk-scale p-values pass a KS test against
/// Uniform[0,1] at level 0.01.
#[test]
fn criterion_7_p_value_uniformity() {
    let (gaussian, _, _) = desk_scale_studies();
    let d = sim::ks_distance_uniform(&gaussian.p_values);
    let critical = sim::ks_critical_value(gaussian.p_values.len(), 0.01);
    let ok = d <= critical;
    println!(
        "[criterion 7] {}: KS distance {:.4} vs critical {:.4} at level 0.01 (M = {})",
        verdict(ok),
        d,
        critical,
        gaussian.p_values.len()
    );
    assert!(ok, "KS {d} > {critical}");
}

/// Companion to criterion 7: the empirical rejection curve of the desk
/// study stays inside the 99% Dvoretzky-Kiefer-Wolfowitz band around the
/// diagonal.
#[test]
fn rejection_curve_within_dkw_band() {
    let (gaussian, _, _) = desk_scale_studies();
    let eps = sim::dkw_epsilon(gaussian.p_values.len(), 0.01);
    let worst = sim::emit_rejection_curve(gaussian)
        .into_iter()
        .map(|(alpha, rate)| (rate - alpha).abs())
        .fold(0.0f64, f64::max);
    let ok = worst <= eps;
    println!(
        "[curve] {}: worst curve-to-diagonal gap {:.4} vs DKW half-width {:.4}",
        verdict(ok),
        worst,
        eps
    );
    assert!(ok, "gap {worst} > {eps}");
}

/// Criterion 8: a singleton bandwidth set reproduces the single-bandwidth
/// report exactly, and a two-bandwidth statistic is the max of the two
/// single-bandwidth statistics to 1e-12.
#[test]
fn criterion_8_uniform_bandwidth_reduction() {
    let sample =
        synthesize_null_regression(90, ErrorDistribution::Gaussian { sd: 0.1 }, MASTER_SEED)
            .unwrap();
    let plan = MultiplierDrawPlan::new(300, MASTER_SEED).unwrap();
    let points = ThetaGrid::equidistant(0.05, 0.95, 9).unwrap();
    let grid_of = |bandwidths: Vec<f64>| {
        ThetaGrid::new(
            Method::Gsv,
            points.clone(),
            bandwidths,
            vec![],
            false,
            ujack::kernels::SmoothingFamily::Epanechnikov,
        )
        .unwrap()
    };
    let (b1, b2) = (0.30, 0.45);
    let single1 = run_test(&sample, &grid_of(vec![b1]), plan, 0.05).unwrap();
    let single1_again = run_test(&sample, &grid_of(vec![b1]), plan, 0.05).unwrap();
    let singleton_exact = serde_json::to_string(&single1.report).unwrap()
        == serde_json::to_string(&single1_again.report).unwrap();
    let single2 = run_test(&sample, &grid_of(vec![b2]), plan, 0.05).unwrap();
    let both = run_test(&sample, &grid_of(vec![b1, b2]), plan, 0.05).unwrap();
    let expected = single1.statistic.max(single2.statistic);
    let gap = (both.statistic - expected).abs() / (1.0 + expected.abs());
    let ok = singleton_exact && gap <= 1e-12;
    println!(
        "[criterion 8] {}: singleton reduction exact = {singleton_exact}, \
         two-bandwidth max gap = {gap:.3e}",
        verdict(ok)
    );
    assert!(ok, "singleton {singleton_exact}, gap {gap}");
}

/// Criterion 9: `test` and `simulate` invocations are byte-identical when
/// repeated, independent of the worker thread count.
#[test]
fn criterion_9_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_ujack");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    synthesize_null_regression(80, ErrorDistribution::Gaussian { sd: 0.1 }, MASTER_SEED)
        .unwrap()
        .save_csv(&data)
        .unwrap();

    let run_test_cmd = |threads: &str, report: &std::path::Path, draws: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                "test",
                "--method",
                "gsv",
                "--data",
                data.to_str().unwrap(),
                "--x-cols",
                "x1",
                "--y-col",
                "v2",
                "--bandwidth",
                "0.4",
                "--boot",
                "200",
                "--alpha",
                "0.05",
                "--seed",
                "42",
                "--threads",
                threads,
                "--out",
                report.to_str().unwrap(),
                "--emit-draws",
                draws.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (r1, d1) = (dir.path().join("r1.json"), dir.path().join("d1.txt"));
    let (r2, d2) = (dir.path().join("r2.json"), dir.path().join("d2.txt"));
    run_test_cmd("1", &r1, &d1);
    run_test_cmd("3", &r2, &d2);
    let test_ok = std::fs::read(&r1).unwrap() == std::fs::read(&r2).unwrap()
        && std::fs::read(&d1).unwrap() == std::fs::read(&d2).unwrap();

    let config = dir.path().join("study.cfg");
    std::fs::write(
        &config,
        "n=40\nerror=gaussian(0.1)\nreps=10\nboot=80\nseed=7\ngrid_points=7\n",
    )
    .unwrap();
    let run_sim_cmd = |threads: &str, out: &std::path::Path, curve: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                "simulate",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--curve",
                curve.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (s1, c1) = (dir.path().join("s1.json"), dir.path().join("c1.csv"));
    let (s2, c2) = (dir.path().join("s2.json"), dir.path().join("c2.csv"));
    run_sim_cmd("2", &s1, &c1);
    run_sim_cmd("1", &s2, &c2);
    let sim_ok = std::fs::read(&s1).unwrap() == std::fs::read(&s2).unwrap()
        && std::fs::read(&c1).unwrap() == std::fs::read(&c2).unwrap();

    let ok = test_ok && sim_ok;
    println!(
        "[criterion 9] {}: byte-identical outputs across thread counts \
         (test = {test_ok}, simulate = {sim_ok})",
        verdict(ok)
    );
    assert!(ok);
}
