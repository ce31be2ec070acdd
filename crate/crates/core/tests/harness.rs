use ctbench::denoise::Denoiser;
use ctbench::harness::{
    objective_bench, objective_global, run_bench_suite, simulation_count, BenchReport, BenchSuiteConfig,
    CompositeWeights, GlobalScores,
};
use ctbench::scanner::{ScanGeometry, ScanSetup};
use ctbench::Image;
use std::sync::OnceLock;

fn small_suite() -> BenchSuiteConfig {
    BenchSuiteConfig {
        setup: ScanSetup {
            width: 256,
            height: 256,
            spacing_mm: 0.8,
            supersample: 4,
            geometry: ScanGeometry { n_views: 360, n_detectors: 365, detector_spacing_mm: 0.64, ..ScanGeometry::default() },
        },
        n_mtf: 24,
        n_nps: 12,
        nps_roi: 64,
        seed: 11,
        ..BenchSuiteConfig::default()
    }
}

fn baseline() -> &'static BenchReport {
    static B: OnceLock<BenchReport> = OnceLock::new();
    B.get_or_init(|| run_bench_suite(&Denoiser::Identity, &small_suite()).unwrap())
}

fn passing_global() -> GlobalScores {
    GlobalScores { psnr: 40.0, ssim: 0.9 }
}

#[test]
fn identity_scores_one_against_itself() {
    let r = objective_bench(baseline().clone(), baseline(), passing_global(), 30.0, &CompositeWeights::default())
        .unwrap();
    let s = r.subscores.unwrap();
    assert_eq!(s.resolution, 1.0);
    assert!(s.texture > 0.999999, "{s:?}");
    assert!(s.hu > 0.8, "{s:?}");
    assert!(r.composite_score.unwrap() > 0.93);
}

#[test]
fn identity_report_matches_baseline() {
    let again = run_bench_suite(&Denoiser::Identity, &small_suite()).unwrap();
    for (a, b) in again.mtf.iter().zip(&baseline().mtf) {
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 0.01);
        }
    }
    for (x, y) in again.nps.radial_values.iter().zip(&baseline().nps.radial_values) {
        assert!((x - y).abs() <= 0.01 * y.abs());
    }
}

#[test]
fn cached_suite_is_not_resimulated() {
    let _ = baseline();
    let before = simulation_count();
    run_bench_suite(&Denoiser::Gaussian { sigma_px: 0.7 }, &small_suite()).unwrap();
    assert_eq!(simulation_count(), before);
}

#[test]
fn gaussian_blur_lowers_mtf_and_high_frequency_nps() {
    let g = run_bench_suite(&Denoiser::Gaussian { sigma_px: 1.0 }, &small_suite()).unwrap();
    let b = baseline();
    for (m, mb) in g.mtf.iter().zip(&b.mtf) {
        assert!(m.mtf50 < mb.mtf50, "{} HU: {} vs {}", m.contrast_hu, m.mtf50, mb.mtf50);
    }
    let half_nyq = 0.25 / small_suite().setup.spacing_mm;
    assert!(g.nps.mean_above(half_nyq) < b.nps.mean_above(half_nyq));
}

#[test]
fn strong_blur_halves_resolution_subscore() {
    let g = run_bench_suite(&Denoiser::Gaussian { sigma_px: 3.0 }, &small_suite()).unwrap();
    let r = objective_bench(g, baseline(), passing_global(), 30.0, &CompositeWeights::default()).unwrap();
    let s = r.subscores.unwrap();
    assert!(s.resolution < 0.5, "{s:?}");
    assert!(s.texture < 0.9, "{s:?}");
}

#[test]
fn floor_zeroes_composite() {
    let r = objective_bench(
        baseline().clone(),
        baseline(),
        GlobalScores { psnr: 29.99, ssim: 0.99 },
        30.0,
        &CompositeWeights::default(),
    )
    .unwrap();
    assert_eq!(r.composite_score, Some(0.0));
}

#[test]
fn composite_monotone_in_weights_subscores() {
    let w = CompositeWeights::default();
    let blur = run_bench_suite(&Denoiser::Gaussian { sigma_px: 2.0 }, &small_suite()).unwrap();
    let low = objective_bench(blur, baseline(), passing_global(), 30.0, &w).unwrap();
    let high = objective_bench(baseline().clone(), baseline(), passing_global(), 30.0, &w).unwrap();
    assert!(high.composite_score.unwrap() >= low.composite_score.unwrap());
    assert!((0.0..=1.0).contains(&low.composite_score.unwrap()));
}

#[test]
fn global_objective_monotone_in_error() {
    let target = Image::from_fn(32, 32, 1.0, |x, y| ((x * 7 + y * 3) % 50) as f32 * 10.0).unwrap();
    let noise = Image::from_fn(32, 32, 1.0, |x, y| if (x + y) % 2 == 0 { 40.0 } else { -40.0 }).unwrap();
    let with = |k: f32| {
        let d: Vec<f32> = target.data().iter().zip(noise.data()).map(|(t, n)| t + k * n).collect();
        target.with_data(d).unwrap()
    };
    let far = objective_global(&[(with(1.0), target.clone())]).unwrap();
    let near = objective_global(&[(with(0.5), target.clone())]).unwrap();
    assert!(near.psnr > far.psnr);
    assert!(objective_global(&[]).is_err());
    assert!(objective_global(&[(target.clone(), target)]).unwrap().psnr.is_infinite());
}
