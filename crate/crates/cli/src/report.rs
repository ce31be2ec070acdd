//! `ctbench report`: PNG plots and a Markdown summary for bench-suite and
//! tuning run directories.

use std::fmt::Write as _;
use std::path::Path;

use ctbench::bench::{abs_diff, nps2d_log_pixels, LineProfile, MtfCurve, NpsResult};
use ctbench::harness::{BenchReport, TuneResult};
use ctbench::image::{read_image, window_to_display};
use ctbench::DisplayWindow;

use crate::args::{Command, ReportArgs};
use crate::commands::Globals;
use crate::plot::{write_plot, LinePlot};
use crate::run::{absolute, io_err, CliError, CliResult, Run};

/// Window used for every difference image.
pub const DIFF_WINDOW_HU: (f64, f64) = (0.0, 122.0);

const BENCH_FILES: [&str; 5] = ["report.json", "baseline.json", "denoised_mean.f32", "fbp_mean.f32", "truth.f32"];

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Core(ctbench::Error::Sidecar { path: path.into(), msg: e.to_string() }))
}

pub fn report_cmd(mut a: ReportArgs, g: &Globals) -> CliResult<()> {
    a.run = absolute(&a.run)?;
    let out = absolute(&a.out.clone().unwrap_or_else(|| a.run.join("report")))?;
    a.out = Some(out.clone());
    if a.run.join("tune_result.json").exists() {
        let mut run = Run::in_dir(&out)?;
        tune_report(&a.run, &mut run)?;
        run.finish(&Command::Report(a), g.deterministic)?;
        return Ok(());
    }
    let missing: Vec<&str> = BENCH_FILES.iter().copied().filter(|f| !a.run.join(f).exists()).collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "incomplete run directory {}: missing {} (bench suite run) or tune_result.json (tune run)",
            a.run.display(),
            missing.join(", ")
        )));
    }
    let mut run = Run::in_dir(&out)?;
    bench_report(&a.run, &mut run)?;
    run.finish(&Command::Report(a), g.deterministic)?;
    Ok(())
}

fn curve_points(c: &MtfCurve) -> Vec<(f64, f64)> {
    c.freqs.iter().copied().zip(c.values.iter().copied()).collect()
}

fn nps_points(n: &NpsResult) -> Vec<(f64, f64)> {
    n.radial_curve().collect()
}

fn profile_points(p: &LineProfile, reference: bool) -> Vec<(f64, f64)> {
    let v = if reference { &p.reference_hu } else { &p.values_hu };
    p.positions_mm.iter().copied().zip(v.iter().copied()).collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

fn bench_report(dir: &Path, run: &mut Run) -> CliResult<()> {
    let report: BenchReport = read_json(&dir.join("report.json"))?;
    let baseline: BenchReport = read_json(&dir.join("baseline.json"))?;
    for f in BENCH_FILES {
        run.input(&dir.join(f));
    }
    let label = report.denoiser.clone();
    for (m, b) in report.mtf.iter().zip(&baseline.mtf) {
        let mut p = LinePlot::new(&format!("MTF {} HU", m.contrast_hu), "LP/MM", "MTF");
        p.y_range = Some((0.0, 1.1));
        p.add(&label, curve_points(m)).add("FBP", curve_points(b));
        let rel = format!("mtf_{}.png", m.contrast_hu);
        write_plot(run.path(&rel), &p)?;
        run.record(rel);
    }
    let mut p = LinePlot::new("RADIAL NPS", "LP/MM", "HU2 MM2");
    p.add(&label, nps_points(&report.nps)).add("FBP", nps_points(&baseline.nps));
    write_plot(run.path("nps.png"), &p)?;
    run.record("nps.png");
    for (prof, (h, b)) in report.profiles.iter().zip(report.hu.iter().zip(&baseline.profiles)) {
        let mut p = LinePlot::new(&format!("PROFILE {} HU", h.contrast_hu), "MM", "HU");
        p.add(&label, profile_points(prof, false)).add("FBP", profile_points(b, false)).add("GT", profile_points(prof, true));
        let rel = format!("profile_{}.png", h.contrast_hu);
        write_plot(run.path(&rel), &p)?;
        run.record(rel);
    }
    for (rel, nps) in [("nps2d.png", &report.nps), ("nps2d_fbp.png", &baseline.nps)] {
        run.gray_png(rel, nps.nx, nps.ny, &nps2d_log_pixels(nps))?;
    }
    let win = DisplayWindow::from_range(DIFF_WINDOW_HU.0, DIFF_WINDOW_HU.1)?;
    let truth = read_image(dir.join("truth"))?;
    for (rel, src) in [("diff.png", "denoised_mean"), ("diff_fbp.png", "fbp_mean")] {
        let d = abs_diff(&read_image(dir.join(src))?, &truth)?;
        run.gray_png(rel, d.width(), d.height(), &window_to_display(&d, win))?;
    }

    let mut md = String::new();
    let _ = writeln!(md, "# Bench report: {label}\n");
    let _ = writeln!(md, "| contrast (HU) | MTF50 {label} (lp/mm) | MTF50 FBP (lp/mm) | plateau bias (HU) | plateau MAD (HU) | edge overshoot (HU) |");
    let _ = writeln!(md, "|---|---|---|---|---|---|");
    for ((m, b), h) in report.mtf.iter().zip(&baseline.mtf).zip(&report.hu) {
        let _ = writeln!(
            md,
            "| {} | {:.3} | {:.3} | {:.2} | {:.2} | {:.2} |",
            m.contrast_hu, m.mtf50, b.mtf50, h.accuracy.plateau_bias, h.accuracy.plateau_mad, h.accuracy.edge_overshoot
        );
    }
    let peak = |n: &NpsResult| n.radial_curve().fold((0.0, f64::NEG_INFINITY), |a, (f, v)| if v > a.1 { (f, v) } else { a });
    let (pf, pv) = peak(&report.nps);
    let (bf, bv) = peak(&baseline.nps);
    let _ = writeln!(md, "\n| NPS | {label} | FBP |\n|---|---|---|");
    let _ = writeln!(md, "| variance (HU²) | {:.2} | {:.2} |", report.nps.integral(), baseline.nps.integral());
    let _ = writeln!(md, "| peak frequency (lp/mm) | {pf:.3} | {bf:.3} |");
    let _ = writeln!(md, "| peak value (HU² mm²) | {pv:.3} | {bv:.3} |");
    if let Some(s) = report.subscores {
        let _ = writeln!(
            md,
            "\nComposite {} (resolution {:.3}, texture {:.3}, HU {:.3}); PSNR {}, SSIM {}.",
            fmt_opt(report.composite_score, 3),
            s.resolution,
            s.texture,
            s.hu,
            fmt_opt(report.psnr, 2),
            fmt_opt(report.ssim, 4)
        );
    }
    let _ = writeln!(md, "\nDifference images use a [{}, {}] HU window.", DIFF_WINDOW_HU.0, DIFF_WINDOW_HU.1);
    run.text("summary.md", &md)
}

fn tune_report(dir: &Path, run: &mut Run) -> CliResult<()> {
    let path = dir.join("tune_result.json");
    run.input(&path);
    let result: TuneResult = read_json(&path)?;
    let mut md = String::from("# Tuning report\n");
    for (i, stage) in result.stages.iter().enumerate() {
        let _ = writeln!(md, "\n## Exp. {}: {}\n", i + 1, stage.name);
        let _ = writeln!(md, "| candidate | PSNR (dB) | SSIM | composite | status |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for (c, row) in stage.rows.iter().enumerate() {
            let e = &row.evaluation;
            let status = match (&row.error, c == stage.winner) {
                (Some(err), _) => format!("failed: {}", err.replace('|', "/")),
                (None, true) => "**winner**".into(),
                (None, false) => String::new(),
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                row.label,
                fmt_opt(e.psnr, 2),
                fmt_opt(e.ssim, 4),
                fmt_opt(e.composite, 3),
                status
            );
        }
    }
    let _ = writeln!(md, "\n{} candidate evaluations.", result.evaluations);
    let w = &result.winner;
    let _ = writeln!(
        md,
        "\nWinner: patch {}, lr {:e}, minibatch {}, loss {}, normalization {}.",
        w.preprocess.patch_size, w.train.learning_rate, w.train.minibatch, w.loss.kind, w.preprocess.normalization.mode
    );
    let summary = dir.join("winner_summary.json");
    if summary.exists() {
        run.input(&summary);
        let v: serde_json::Value = read_json(&summary)?;
        let _ = writeln!(
            md,
            "Full-schedule winner on the tuning set: PSNR {} dB, SSIM {} (LDCT input: PSNR {} dB, SSIM {}).",
            v["psnr"], v["ssim"], v["ldct_psnr"], v["ldct_ssim"]
        );
    }
    run.text("summary.md", &md)
}
