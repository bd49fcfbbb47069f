mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simband::covariance::{fit_asymptotic_covariance, CovModeConfig};
use simband::estimation::{estimate_joint, EstimandSpec, SampleMatrix};
use simband::mvn::{mvn_rectangle_probability, MvnProblem};
use simband::plotio::{analyze, write_output, AnalysisConfig, Report};
use simband::region::{build_regions, RegionMethod, RegionOptions};
use simband::samplers::{sample_mixture_iid, MixtureSpec};
use simband::{MatrixF64, SampleMatrixF32};

#[test]
fn mvn_matches_quadrature_on_correlated_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..10 {
        let rho: f64 = rng.random_range(-0.95..0.95);
        let (v1, v2) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let c = rho * f64::sqrt(v1 * v2);
        let lower = [rng.random_range(-2.5..0.0), rng.random_range(-2.5..0.0)];
        let upper = [rng.random_range(0.0..2.5), rng.random_range(0.0..2.5)];
        let cov = MatrixF64::from_rows(&[vec![v1, c], vec![c, v2]]).unwrap();
        let problem = MvnProblem::new(vec![0.0, 0.0], cov, lower.to_vec(), upper.to_vec()).unwrap();
        let got = mvn_rectangle_probability(&problem, 5e-4, seed).unwrap();
        let want = common::bivariate_rectangle([0.0; 2], [[v1, c], [c, v2]], lower, upper);
        assert!((got.probability - want).abs() < 1e-3, "{} vs {want}", got.probability);
    }
}

fn mixture_samples(n: usize, seed: u64, scale: f64) -> SampleMatrix<f64> {
    let s = sample_mixture_iid(&MixtureSpec::default(), n, seed).unwrap();
    s.map_column(0, |x| scale * x).unwrap()
}

fn mixture_spec() -> EstimandSpec {
    EstimandSpec::means(["x"]).quantile("x", 0.1).quantile("x", 0.9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn regions_scale_with_the_data(seed in 0u64..1000, scale in 0.1f64..20.0) {
        let spec = mixture_spec();
        let options = RegionOptions::with_seed(seed);
        let base = mixture_samples(3000, seed, 1.0);
        let scaled = mixture_samples(3000, seed, scale);
        let e0 = estimate_joint(&base, &spec).unwrap();
        let e1 = estimate_joint(&scaled, &spec).unwrap();
        let a0 = fit_asymptotic_covariance(&base, &spec, &e0, &CovModeConfig::IID).unwrap().acov;
        let a1 = fit_asymptotic_covariance(&scaled, &spec, &e1, &CovModeConfig::IID).unwrap().acov;
        let r0 = build_regions(&e0, &a0, 0.1, &options).unwrap();
        let r1 = build_regions(&e1, &a1, 0.1, &options).unwrap();
        prop_assert!((r0.simultaneous.z - r1.simultaneous.z).abs() < 5e-3);
        for m in RegionMethod::ALL {
            for (&(l0, u0), &(l1, u1)) in r0.get(m).intervals.iter().zip(&r1.get(m).intervals) {
                let width_ratio = (u1 - l1) / (u0 - l0);
                prop_assert!((width_ratio - scale).abs() < 5e-3 * scale);
                prop_assert!((0.5 * (l1 + u1) - scale * 0.5 * (l0 + u0)).abs() < 1e-9 * scale.max(1.0) * 20.0);
            }
        }
    }

    #[test]
    fn regions_nest_and_bracket(seed in 0u64..1000, alpha in 0.02f64..0.4) {
        let samples = mixture_samples(2000, seed, 1.0);
        let spec = mixture_spec();
        let e = estimate_joint(&samples, &spec).unwrap();
        let a = fit_asymptotic_covariance(&samples, &spec, &e, &CovModeConfig::MCMC_AUTO).unwrap().acov;
        let r = build_regions(&e, &a, alpha, &RegionOptions::with_seed(seed)).unwrap();
        let z_lo = common::normal_quantile(1.0 - alpha / 2.0);
        let z_hi = common::normal_quantile(1.0 - alpha / 6.0);
        prop_assert!(z_lo - 1e-9 <= r.simultaneous.z && r.simultaneous.z <= z_hi + 1e-9);
        for i in 0..3 {
            let (l0, u0) = r.uncorrected.intervals[i];
            let (l1, u1) = r.simultaneous.intervals[i];
            let (l2, u2) = r.bonferroni.intervals[i];
            prop_assert!(l2 <= l1 && l1 <= l0 && u0 <= u1 && u1 <= u2);
            prop_assert!(r.simultaneous.half_widths[i] > 0.0);
        }
        let cov = r.simultaneous.achieved_coverage.probability;
        prop_assert!((cov - (1.0 - alpha)).abs() <= 1e-3 + r.simultaneous.achieved_coverage.error_estimate);
    }
}

#[test]
fn single_precision_pipeline() {
    let s = sample_mixture_iid(&MixtureSpec::default(), 20_000, 7).unwrap();
    let values: Vec<f32> = s.column(0).iter().map(|&x| x as f32).collect();
    let s32 = SampleMatrixF32::from_columns(vec![values], Some(vec!["x".into()])).unwrap();
    let spec = mixture_spec();
    let e32 = estimate_joint(&s32, &spec).unwrap();
    let a32 = fit_asymptotic_covariance(&s32, &spec, &e32, &CovModeConfig::IID).unwrap().acov;
    let r32 = build_regions(&e32, &a32, 0.1, &RegionOptions::default()).unwrap();
    let e64 = estimate_joint(&s, &spec).unwrap();
    let a64 = fit_asymptotic_covariance(&s, &spec, &e64, &CovModeConfig::IID).unwrap().acov;
    let r64 = build_regions(&e64, &a64, 0.1, &RegionOptions::default()).unwrap();
    for (&(l32, u32_), &(l64, u64_)) in r32.simultaneous.intervals.iter().zip(&r64.simultaneous.intervals) {
        assert!((f64::from(l32) - l64).abs() < 1e-3 * (1.0 + l64.abs()));
        assert!((f64::from(u32_) - u64_).abs() < 1e-3 * (1.0 + u64_.abs()));
    }
}

#[test]
fn analyze_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = sample_mixture_iid(&MixtureSpec::default(), 5000, 3).unwrap();
    let mut text = String::from("x,idx\n");
    for (i, x) in s.column(0).iter().enumerate() {
        text.push_str(&format!("{x},{i}\n"));
    }
    let path = dir.path().join("draws.csv");
    write_output(&path, &text).unwrap();
    let mut config = AnalysisConfig::new(&path, mixture_spec());
    config.burn_in = 100;
    let (samples, report) = analyze(&config).unwrap();
    assert_eq!(samples.n(), 4900);
    assert_eq!(report.input.rows_read, 5000);
    assert_eq!(report.estimate.labels, vec!["mean(x)", "q0.1(x)", "q0.9(x)"]);
    assert_eq!(Report::from_json(&report.to_json().unwrap()).unwrap(), report);
    let direct = estimate_joint(&s.skip_rows(100).unwrap(), &mixture_spec()).unwrap();
    // CSV text round-trips f64 exactly
    assert_eq!(report.estimate.nu_hat, direct.nu_hat);
}
