use ctbench::image::{extract_roi, Roi};
use ctbench::metrics::{psnr, rmse};
use ctbench::phantom::{self, PhantomSpec};
use ctbench::scanner::{
    add_poisson_noise, forward_project, hu_to_mu, make_noise_ensemble, AttenuationMap, Kernel,
    ScanGeometry, ScanSetup, Sinogram, DEFAULT_MU_WATER,
};
use ctbench::Image;
use std::time::Instant;

fn uniform_disk(radius_mm: f64, hu: f64) -> PhantomSpec {
    PhantomSpec {
        background_hu: -1000.0,
        body_radius_mm: radius_mm,
        body_hu: hu,
        inserts: vec![],
    }
}

#[test]
fn chord_lengths_match_analytic_disk() {
    let setup = ScanSetup {
        width: 256,
        height: 256,
        spacing_mm: 0.5,
        supersample: 8,
        geometry: ScanGeometry {
            n_views: 8,
            n_detectors: 401,
            detector_spacing_mm: 0.5,
            ..ScanGeometry::default()
        },
    };
    let r = 50.0;
    let mu = DEFAULT_MU_WATER;
    let sino = setup.noiseless_sinogram(&uniform_disk(r, 0.0)).unwrap();
    let center = 200; // detector at t = 0
    for view in 0..8 {
        let central = sino.view(view)[center] as f64;
        let expect = 2.0 * r * mu;
        assert!((central - expect).abs() / expect < 0.005, "view {view}: {central} vs {expect}");
        for offset_det in [50usize, 80, 90] {
            let d = offset_det as f64 * 0.5;
            let expect = 2.0 * mu * (r * r - d * d).sqrt();
            let got = sino.view(view)[center + offset_det] as f64;
            assert!((got - expect).abs() / expect < 0.005, "view {view} d {d}: {got} vs {expect}");
        }
    }
}

#[test]
fn projection_is_linear() {
    let geom = ScanGeometry {
        n_views: 30,
        n_detectors: 181,
        detector_spacing_mm: 1.0,
        ..ScanGeometry::default()
    };
    let a = phantom::rasterize(&phantom::make_random_phantom(1, 40.0, 4), 128, 128, 1.0, 2).unwrap();
    let b = phantom::rasterize(&phantom::make_random_phantom(2, 40.0, 4), 128, 128, 1.0, 2).unwrap();
    let (ma, mb) = (hu_to_mu(&a, 0.019), hu_to_mu(&b, 0.019));
    let combo = AttenuationMap {
        data: ma.data.iter().zip(&mb.data).map(|(x, y)| 2.0 * x + 0.5 * y).collect(),
        ..ma.clone()
    };
    let pa = forward_project(&ma, &geom).unwrap();
    let pb = forward_project(&mb, &geom).unwrap();
    let pc = forward_project(&combo, &geom).unwrap();
    for i in 0..pc.data.len() {
        let expect = 2.0 * pa.data[i] as f64 + 0.5 * pb.data[i] as f64;
        assert!((pc.data[i] as f64 - expect).abs() <= 1e-5 * expect.abs().max(1e-3), "ray {i}");
    }
}

#[test]
fn high_photon_limit_recovers_line_integrals() {
    let geom = ScanGeometry { i0: 1.0e9, ..ScanGeometry::default() };
    let n = 10_000;
    let data: Vec<f32> = (0..n).map(|i| 0.01 + 0.0002 * (i % 50) as f32).collect();
    let sino = Sinogram { n_views: 100, n_detectors: 100, detector_spacing_mm: 0.4, data };
    let noisy = add_poisson_noise(&sino, &geom, 1.0, 3).unwrap();
    let mean_clean: f64 = sino.data.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let mean_noisy: f64 = noisy.data.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    assert!((mean_noisy - mean_clean).abs() / mean_clean < 1e-3);
}

#[test]
fn quarter_dose_budget() {
    // Mean counts at p = 0 equal dose * i0; recover from the noisy integrals.
    let geom = ScanGeometry { i0: 4.0e4, ..ScanGeometry::default() };
    let sino = Sinogram { n_views: 100, n_detectors: 100, detector_spacing_mm: 0.4, data: vec![0.0; 10_000] };
    let noisy = add_poisson_noise(&sino, &geom, 0.25, 9).unwrap();
    let budget = 0.25 * geom.i0;
    let mean_counts: f64 =
        noisy.data.iter().map(|&p| budget * (-(p as f64)).exp()).sum::<f64>() / 10_000.0;
    assert!((mean_counts - 1.0e4).abs() < 5.0, "{mean_counts}");
}

fn roi_mean(img: &Image, cx_mm: f64, cy_mm: f64, half_px: usize) -> f64 {
    let s = img.pixel_spacing_mm();
    let col = (cx_mm / s + img.width() as f64 / 2.0).round() as usize;
    let row = (img.height() as f64 / 2.0 - cy_mm / s).round() as usize;
    extract_roi(img, Roi::new(col - half_px, row - half_px, 2 * half_px, 2 * half_px))
        .unwrap()
        .mean()
}

#[test]
fn noiseless_default_geometry_fidelity() {
    let setup = ScanSetup::default();
    let start = Instant::now();
    let water = setup.reconstruct(&setup.noiseless_sinogram(&phantom::make_water_cylinder()).unwrap()).unwrap();
    let elapsed = start.elapsed();
    let m = roi_mean(&water, 0.0, 0.0, 20);
    assert!(m.abs() <= 15.0, "water interior mean {m}");
    eprintln!("water scan+recon: {elapsed:?}, mean {m:.3} HU");

    let spec = phantom::make_contrast_phantom();
    let recon = setup.reconstruct(&setup.noiseless_sinogram(&spec).unwrap()).unwrap();
    for ins in &spec.inserts {
        let m = roi_mean(&recon, ins.cx_mm, ins.cy_mm, 8);
        assert!((m - ins.hu).abs() <= 20.0, "insert {} HU measured {m}", ins.hu);
        eprintln!("insert {:>5} HU -> {m:.2}", ins.hu);
    }
    let truth = setup.ground_truth(&spec).unwrap();
    let smooth = setup.with_kernel(Kernel::Smooth);
    let recon_smooth = smooth.reconstruct(&smooth.noiseless_sinogram(&spec).unwrap()).unwrap();
    eprintln!(
        "psnr sharp {:.2} dB, smooth {:.2} dB",
        psnr(&recon, &truth, 2000.0).unwrap(),
        psnr(&recon_smooth, &truth, 2000.0).unwrap()
    );
}

#[test]
fn smooth_phantom_recon_psnr() {
    // Gaussian-blurred body edge: band-limited object.
    let setup = ScanSetup::default();
    let spec = phantom::make_contrast_phantom();
    let truth = ctbench::denoise::gaussian_denoise(&setup.ground_truth(&spec).unwrap(), 2.0).unwrap();
    let sino = forward_project(&hu_to_mu(&truth, 0.019), &setup.geometry).unwrap();
    let recon = setup.reconstruct(&sino).unwrap();
    let p = psnr(&recon, &truth, 2000.0).unwrap();
    eprintln!("smooth phantom psnr {p:.2}");
    assert!(p > 35.0, "{p}");
}

#[test]
fn noise_falls_with_dose_and_averages_out() {
    let setup = ScanSetup {
        width: 128,
        height: 128,
        spacing_mm: 1.0,
        supersample: 4,
        geometry: ScanGeometry { n_views: 180, n_detectors: 185, detector_spacing_mm: 0.8, ..ScanGeometry::default() },
    };
    let spec = uniform_disk(50.0, 0.0);
    let clean_sino = setup.noiseless_sinogram(&spec).unwrap();
    let noiseless = setup.reconstruct(&clean_sino).unwrap();
    let roi = Roi::centered(128, 128, 40).unwrap();
    let mut last = f64::INFINITY;
    for dose in [0.25, 0.5, 1.0] {
        let img = setup.noisy_recon(&clean_sino, dose, 17).unwrap();
        let sd = extract_roi(&img, roi).unwrap().variance().sqrt();
        assert!(sd < last, "dose {dose}: sd {sd} not below {last}");
        last = sd;
    }
    let ens = make_noise_ensemble(&spec, &setup, 50, 0.25, 100).unwrap();
    assert_eq!(ens.len(), 50);
    let mean = ens[0]
        .with_data(
            (0..128 * 128)
                .map(|i| ens.iter().map(|e| e.data()[i] as f64).sum::<f64>() as f32 / 50.0)
                .collect(),
        )
        .unwrap();
    let single = rmse(&ens[0], &noiseless).unwrap();
    let averaged = rmse(&mean, &noiseless).unwrap();
    assert!(averaged < single / 5.0, "{averaged} vs {single}");
}
