//! Minimal line-plot rasterizer (PNG) with a 3×5 bitmap font for ticks,
//! titles and legends.

use std::path::Path;

use ctbench::{Error, Result};
use image::{Rgb, RgbImage};

pub const PALETTE: [[u8; 3]; 6] =
    [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14], [148, 103, 189], [90, 90, 90]];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Self::default() }
    }

    pub fn add(&mut self, label: impl Into<String>, points: Vec<(f64, f64)>) -> &mut Self {
        let color = PALETTE[self.series.len() % PALETTE.len()];
        self.series.push(Series { label: label.into(), points, color });
        self
    }
}

fn glyph(c: char) -> [&'static str; 5] {
    match c.to_ascii_uppercase() {
        '0' => ["###", "#.#", "#.#", "#.#", "###"],
        '1' => [".#.", "##.", ".#.", ".#.", "###"],
        '2' => ["###", "..#", "###", "#..", "###"],
        '3' => ["###", "..#", ".##", "..#", "###"],
        '4' => ["#.#", "#.#", "###", "..#", "..#"],
        '5' => ["###", "#..", "###", "..#", "###"],
        '6' => ["###", "#..", "###", "#.#", "###"],
        '7' => ["###", "..#", ".#.", ".#.", ".#."],
        '8' => ["###", "#.#", "###", "#.#", "###"],
        '9' => ["###", "#.#", "###", "..#", "###"],
        'A' => [".#.", "#.#", "###", "#.#", "#.#"],
        'B' => ["##.", "#.#", "##.", "#.#", "##."],
        'C' => [".##", "#..", "#..", "#..", ".##"],
        'D' => ["##.", "#.#", "#.#", "#.#", "##."],
        'E' => ["###", "#..", "##.", "#..", "###"],
        'F' => ["###", "#..", "##.", "#..", "#.."],
        'G' => [".##", "#..", "#.#", "#.#", ".##"],
        'H' => ["#.#", "#.#", "###", "#.#", "#.#"],
        'I' => ["###", ".#.", ".#.", ".#.", "###"],
        'J' => ["..#", "..#", "..#", "#.#", ".#."],
        'K' => ["#.#", "#.#", "##.", "#.#", "#.#"],
        'L' => ["#..", "#..", "#..", "#..", "###"],
        'M' => ["#.#", "###", "###", "#.#", "#.#"],
        'N' => ["##.", "#.#", "#.#", "#.#", "#.#"],
        'O' => [".#.", "#.#", "#.#", "#.#", ".#."],
        'P' => ["##.", "#.#", "##.", "#..", "#.."],
        'Q' => [".#.", "#.#", "#.#", "##.", ".##"],
        'R' => ["##.", "#.#", "##.", "#.#", "#.#"],
        'S' => [".##", "#..", ".#.", "..#", "##."],
        'T' => ["###", ".#.", ".#.", ".#.", ".#."],
        'U' => ["#.#", "#.#", "#.#", "#.#", "###"],
        'V' => ["#.#", "#.#", "#.#", "#.#", ".#."],
        'W' => ["#.#", "#.#", "###", "###", "#.#"],
        'X' => ["#.#", "#.#", ".#.", "#.#", "#.#"],
        'Y' => ["#.#", "#.#", ".#.", ".#.", ".#."],
        'Z' => ["###", "..#", ".#.", "#..", "###"],
        '.' => ["...", "...", "...", "...", ".#."],
        ',' => ["...", "...", "...", ".#.", "#.."],
        '-' => ["...", "...", "###", "...", "..."],
        '+' => ["...", ".#.", "###", ".#.", "..."],
        ':' => ["...", ".#.", "...", ".#.", "..."],
        '/' => ["..#", "..#", ".#.", "#..", "#.."],
        '(' => [".#.", "#..", "#..", "#..", ".#."],
        ')' => [".#.", "..#", "..#", "..#", ".#."],
        '%' => ["#.#", "..#", ".#.", "#..", "#.#"],
        '=' => ["...", "###", "...", "###", "..."],
        '_' => ["...", "...", "...", "...", "###"],
        '^' => [".#.", "#.#", "...", "...", "..."],
        _ => ["...", "...", "...", "...", "..."],
    }
}

const SCALE: i64 = 2;
const ADVANCE: i64 = 4 * SCALE;

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

pub fn text_width(text: &str) -> i64 {
    text.chars().count() as i64 * ADVANCE
}

/// Draws `text` with its top-left corner at `(x, y)`.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: [u8; 3]) {
    for (i, c) in text.chars().enumerate() {
        for (row, bits) in glyph(c).iter().enumerate() {
            for (col, b) in bits.bytes().enumerate() {
                if b == b'#' {
                    for dy in 0..SCALE {
                        for dx in 0..SCALE {
                            put(img, x + i as i64 * ADVANCE + col as i64 * SCALE + dx, y + row as i64 * SCALE + dy, color);
                        }
                    }
                }
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3], thick: bool) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if thick {
            put(img, x + 1, y, color);
            put(img, x, y + 1, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Tick positions at 1/2/5 × 10^k steps covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

pub fn format_tick(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.0e}");
    }
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { 0.1 * lo.abs() } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

pub fn render(plot: &LinePlot, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let (left, right, top, bottom) = (70i64, 20i64, 34i64, 46i64);
    let (pw, ph) = (width as i64 - left - right, height as i64 - top - bottom);
    let (x0, x1) = plot.x_range.unwrap_or_else(|| data_range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0))));
    let (y0, y1) = plot.y_range.unwrap_or_else(|| {
        let (lo, hi) = data_range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    });
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = left as f64 + (x - x0) / (x1 - x0) * pw as f64;
        let py = top as f64 + (1.0 - (y - y0) / (y1 - y0)) * ph as f64;
        (px.round().clamp(-1e6, 1e6) as i64, py.round().clamp(-1e6, 1e6) as i64)
    };
    let grid = [225, 225, 225];
    let ink = [0, 0, 0];
    let xt = nice_ticks(x0, x1, 6);
    let yt = nice_ticks(y0, y1, 6);
    let xstep = if xt.len() > 1 { xt[1] - xt[0] } else { 1.0 };
    let ystep = if yt.len() > 1 { yt[1] - yt[0] } else { 1.0 };
    for &t in &xt {
        let (px, _) = to_px(t, y0);
        draw_line(&mut img, (px, top), (px, top + ph), grid, false);
        let label = format_tick(t, xstep);
        draw_text(&mut img, px - text_width(&label) / 2, top + ph + 6, &label, ink);
    }
    for &t in &yt {
        let (_, py) = to_px(x0, t);
        draw_line(&mut img, (left, py), (left + pw, py), grid, false);
        let label = format_tick(t, ystep);
        draw_text(&mut img, left - 6 - text_width(&label), py - 5, &label, ink);
    }
    for (a, b) in [((left, top), (left + pw, top)), ((left, top + ph), (left + pw, top + ph))] {
        draw_line(&mut img, a, b, ink, false);
    }
    for (a, b) in [((left, top), (left, top + ph)), ((left + pw, top), (left + pw, top + ph))] {
        draw_line(&mut img, a, b, ink, false);
    }
    for s in &plot.series {
        let mut prev: Option<(i64, i64)> = None;
        for &(x, y) in &s.points {
            if !(x.is_finite() && y.is_finite()) {
                prev = None;
                continue;
            }
            let p = to_px(x.clamp(x0, x1), y.clamp(y0, y1));
            if let Some(q) = prev {
                draw_line(&mut img, q, p, s.color, true);
            }
            prev = Some(p);
        }
    }
    draw_text(&mut img, left, 10, &plot.title, ink);
    draw_text(&mut img, left + (pw - text_width(&plot.x_label)) / 2, height as i64 - 16, &plot.x_label, ink);
    draw_text(&mut img, 4, 10 + 14, &plot.y_label, ink);
    let legend_w = plot.series.iter().map(|s| text_width(&s.label)).max().unwrap_or(0) + 30;
    for (i, s) in plot.series.iter().enumerate() {
        let y = top + 8 + i as i64 * 14;
        let x = left + pw - legend_w - 6;
        draw_line(&mut img, (x, y + 4), (x + 20, y + 4), s.color, true);
        draw_text(&mut img, x + 26, y, &s.label, ink);
    }
    img
}

pub fn write_plot(path: impl AsRef<Path>, plot: &LinePlot) -> Result<()> {
    let path = path.as_ref();
    render(plot, 720, 460).save(path).map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = nice_ticks(0.0, 1.0, 5);
        assert_eq!(t, vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let t = nice_ticks(-37.0, 912.0, 6);
        assert!(t.iter().all(|v| (-37.0..=912.0).contains(v)));
        assert_eq!(t[1] - t[0], 200.0);
        assert_eq!(format_tick(0.6000000000000001, 0.2), "0.6");
        assert_eq!(format_tick(400.0, 200.0), "400");
    }

    #[test]
    fn series_pixels_use_series_color() {
        let mut p = LinePlot::new("T", "X", "Y");
        p.add("a", vec![(0.0, 0.0), (1.0, 1.0)]);
        let img = render(&p, 300, 200);
        assert!(img.pixels().any(|px| px.0 == PALETTE[0]));
    }
}
