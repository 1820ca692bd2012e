//! Deterministic line-plot rasteriser. The style is fixed: white canvas,
//! black axes, one blue series, min/max tick labels on both axes.

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};

use super::EmitError;

pub const CANVAS: u32 = 336;
pub const MARGIN_LEFT: u32 = 60;
pub const MARGIN_RIGHT: u32 = 12;
pub const MARGIN_TOP: u32 = 12;
pub const MARGIN_BOTTOM: u32 = 30;
/// Fraction of the value range added above and below the data.
pub const Y_PADDING: f64 = 0.05;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const LINE: Rgb<u8> = Rgb([31, 119, 180]);
const GLYPH_SCALE: u32 = 2;

/// 3×5 bitmap glyphs, one row per entry, high bit on the left.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        'e' => [0b000, 0b111, 0b111, 0b100, 0b111],
        _ => [0; 5],
    }
}

fn text_width(text: &str) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        n * 4 * GLYPH_SCALE - GLYPH_SCALE
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64) {
    for (k, c) in text.chars().enumerate() {
        let rows = glyph(c);
        let ox = x + (k as i64) * 4 * GLYPH_SCALE as i64;
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..GLYPH_SCALE as i64 {
                    for dx in 0..GLYPH_SCALE as i64 {
                        put(img, ox + col * GLYPH_SCALE as i64 + dx, y + r as i64 * GLYPH_SCALE as i64 + dy, BLACK);
                    }
                }
            }
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Two-pixel-wide Bresenham segment.
fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        put(img, x, y + 1, color);
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

/// Compact label with about four significant digits.
pub fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        return "0".into();
    }
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}").replace(".0e", "e");
    }
    let decimals = (3 - a.log10().floor() as i32).clamp(0, 4) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Lower and upper plotted value, padded by [`Y_PADDING`] of the range. A
/// constant series gets a symmetric band so its line sits mid-plot.
pub fn y_limits(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let pad = if range > 0.0 {
        Y_PADDING * range
    } else {
        Y_PADDING * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

/// Pixel row of value `v` inside the plot area.
pub fn row_of(v: f64, (lo, hi): (f64, f64)) -> i64 {
    let top = MARGIN_TOP as f64;
    let height = (CANVAS - MARGIN_TOP - MARGIN_BOTTOM - 1) as f64;
    (top + (hi - v) / (hi - lo) * height).round() as i64
}

pub fn render_image(values: &[f64]) -> Result<RgbImage, EmitError> {
    if values.len() < 2 {
        return Err(EmitError::TooShort(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmitError::NonFinite);
    }
    let mut img = RgbImage::from_pixel(CANVAS, CANVAS, WHITE);
    let limits = y_limits(values);
    let left = MARGIN_LEFT as i64;
    let right = (CANVAS - MARGIN_RIGHT) as i64 - 1;
    let top = MARGIN_TOP as i64;
    let bottom = (CANVAS - MARGIN_BOTTOM) as i64 - 1;

    let width = (right - left - 2) as f64;
    let points: Vec<(i64, i64)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = left + 2 + (i as f64 / (values.len() - 1) as f64 * width).round() as i64;
            (x, row_of(*v, limits))
        })
        .collect();
    for pair in points.windows(2) {
        draw_line(&mut img, pair[0], pair[1], LINE);
    }

    draw_line(&mut img, (left, top), (left, bottom), BLACK);
    draw_line(&mut img, (left, bottom), (right, bottom), BLACK);

    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let glyph_h = 5 * GLYPH_SCALE as i64;
    for v in [hi, lo] {
        let row = row_of(v, limits);
        draw_line(&mut img, (left - 4, row), (left - 1, row), BLACK);
        let label = tick_label(v);
        let y = (row - glyph_h / 2).clamp(0, CANVAS as i64 - glyph_h);
        draw_text(&mut img, &label, left - 6 - text_width(&label) as i64, y);
    }
    for (i, x) in [(0, points[0].0), (values.len() - 1, points[points.len() - 1].0)] {
        draw_line(&mut img, (x, bottom + 1), (x, bottom + 4), BLACK);
        let label = i.to_string();
        let w = text_width(&label) as i64;
        let lx = (x - w / 2).clamp(0, CANVAS as i64 - w);
        draw_text(&mut img, &label, lx, bottom + 8);
    }
    Ok(img)
}

/// PNG bytes of the plot of `values`.
pub fn render_plot(values: &[f64]) -> Result<Vec<u8>, EmitError> {
    let img = render_image(values)?;
    let mut bytes = Vec::new();
    PngEncoder::new_with_quality(&mut bytes, CompressionType::Default, FilterType::Adaptive)
        .write_image(img.as_raw(), CANVAS, CANVAS, image::ExtendedColorType::Rgb8)
        .map_err(|e| EmitError::Encode(e.to_string()))?;
    Ok(bytes)
}
