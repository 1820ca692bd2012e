//! Deterministic describer: fits up to four independent line segments to the
//! summary and turns their directions into a templated paragraph.
//!
//! Values are min-max normalised before fitting, so segment boundaries and
//! labels do not depend on the scale or offset of the summary.

use serde::{Deserialize, Serialize};

use super::{DescriptionError, Generator, TrendDescription};
use crate::trend_summary::{round_one_decimal, TrendSummary};

pub const RULES_MODEL_ID: &str = "rules-v1";

const MAX_SEGMENTS: usize = 4;
const MIN_SEGMENT_LEN: usize = 3;
/// An extra segment must remove at least this share of the total sum of squares.
const SPLIT_GAIN: f64 = 0.02;
/// Slopes below this share of `range / n` per step count as flat.
const FLAT_SLOPE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Slight,
    Moderate,
    Steep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    /// Slope per step on the normalised scale (range 1).
    pub slope: f64,
    pub direction: Direction,
    pub magnitude: Magnitude,
}

struct Prefix {
    x: Vec<f64>,
    xx: Vec<f64>,
    y: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
}

impl Prefix {
    fn new(y: &[f64]) -> Self {
        let n = y.len();
        let mut p = Prefix {
            x: vec![0.0; n + 1],
            xx: vec![0.0; n + 1],
            y: vec![0.0; n + 1],
            xy: vec![0.0; n + 1],
            yy: vec![0.0; n + 1],
        };
        for (i, v) in y.iter().enumerate() {
            let x = i as f64;
            p.x[i + 1] = p.x[i] + x;
            p.xx[i + 1] = p.xx[i] + x * x;
            p.y[i + 1] = p.y[i] + v;
            p.xy[i + 1] = p.xy[i] + x * v;
            p.yy[i + 1] = p.yy[i] + v * v;
        }
        p
    }

    /// Least-squares slope and residual sum of squares on `[a, b)`.
    fn fit(&self, a: usize, b: usize) -> (f64, f64) {
        let n = (b - a) as f64;
        let sx = self.x[b] - self.x[a];
        let sy = self.y[b] - self.y[a];
        let sxx = self.xx[b] - self.xx[a] - sx * sx / n;
        let sxy = self.xy[b] - self.xy[a] - sx * sy / n;
        let syy = self.yy[b] - self.yy[a] - sy * sy / n;
        if sxx <= 0.0 {
            return (0.0, syy.max(0.0));
        }
        let slope = sxy / sxx;
        (slope, (syy - slope * sxy).max(0.0))
    }
}

/// Best split points for exactly `k` segments by exhaustive search.
fn best_split(p: &Prefix, n: usize, k: usize) -> Option<(f64, Vec<usize>)> {
    fn go(p: &Prefix, n: usize, k: usize, start: usize, cuts: &mut Vec<usize>, best: &mut Option<(f64, Vec<usize>)>) {
        if k == 1 {
            if n - start < MIN_SEGMENT_LEN.min(n) {
                return;
            }
            let mut bounds = vec![0];
            bounds.extend(cuts.iter().copied());
            bounds.push(n);
            let sse: f64 = bounds.windows(2).map(|w| p.fit(w[0], w[1]).1).sum();
            if best.as_ref().is_none_or(|(b, _)| sse < *b) {
                *best = Some((sse, cuts.clone()));
            }
            return;
        }
        let last = n.saturating_sub(MIN_SEGMENT_LEN * (k - 1));
        for cut in start + MIN_SEGMENT_LEN..=last {
            cuts.push(cut);
            go(p, n, k - 1, cut, cuts, best);
            cuts.pop();
        }
    }
    let mut best = None;
    go(p, n, k, 0, &mut Vec::new(), &mut best);
    best
}

fn normalise(values: &[f64]) -> Option<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return None;
    }
    Some(values.iter().map(|v| (v - lo) / range).collect())
}

/// Piecewise-linear segmentation of `values`. A constant input yields one
/// flat segment.
pub fn segment(values: &[f64]) -> Result<Vec<Segment>, DescriptionError> {
    let n = values.len();
    if n < 2 {
        return Err(DescriptionError::TooFewValues(n));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DescriptionError::NonFinite);
    }
    let Some(y) = normalise(values) else {
        return Ok(vec![Segment {
            start: 0,
            end: n,
            slope: 0.0,
            direction: Direction::Flat,
            magnitude: Magnitude::Slight,
        }]);
    };
    let p = Prefix::new(&y);
    let mean = p.y[n] / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();

    let (mut sse, mut cuts) = (p.fit(0, n).1, Vec::new());
    for k in 2..=MAX_SEGMENTS {
        match best_split(&p, n, k) {
            Some((next_sse, next_cuts)) if sse - next_sse > SPLIT_GAIN * sst => {
                sse = next_sse;
                cuts = next_cuts;
            }
            _ => break,
        }
    }

    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(n);
    let flat = FLAT_SLOPE / n as f64;
    let fits: Vec<(usize, usize, f64)> = bounds.windows(2).map(|w| (w[0], w[1], p.fit(w[0], w[1]).0)).collect();
    let reference = fits.iter().map(|(a, b, m)| (b - a) as f64 * m.abs()).sum::<f64>() / n as f64;
    Ok(fits
        .into_iter()
        .map(|(start, end, slope)| {
            let direction = if slope.abs() <= flat {
                Direction::Flat
            } else if slope > 0.0 {
                Direction::Up
            } else {
                Direction::Down
            };
            let ratio = if reference > 0.0 { slope.abs() / reference } else { 0.0 };
            let magnitude = if ratio < 1.0 {
                Magnitude::Slight
            } else if ratio <= 3.0 {
                Magnitude::Moderate
            } else {
                Magnitude::Steep
            };
            Segment {
                start,
                end,
                slope,
                direction,
                magnitude,
            }
        })
        .collect())
}

fn num(v: f64) -> String {
    format!("{:.1}", round_one_decimal(v))
}

fn movement(seg: &Segment) -> &'static str {
    match (seg.direction, seg.magnitude) {
        (Direction::Up, Magnitude::Slight) => "rises slightly",
        (Direction::Up, Magnitude::Moderate) => "rises moderately",
        (Direction::Up, Magnitude::Steep) => "rises steeply",
        (Direction::Down, Magnitude::Slight) => "declines slightly",
        (Direction::Down, Magnitude::Moderate) => "declines moderately",
        (Direction::Down, Magnitude::Steep) => "declines steeply",
        (Direction::Flat, _) => "holds steady",
    }
}

fn clause(seg: &Segment, values: &[f64]) -> String {
    let end = num(values[seg.end - 1]);
    match seg.direction {
        Direction::Flat => format!("holds steady near {end}"),
        _ => format!("{} to about {end}", movement(seg)),
    }
}

/// Paragraph for a segmentation of `values`.
pub(crate) fn render_text(values: &[f64], segments: &[Segment]) -> String {
    let first = values[0];
    let last = values[values.len() - 1];
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if hi - lo <= 0.0 {
        return format!(
            "The time series stays flat at {} for the whole window. Overall, the trend is stable with no upward or downward movement.",
            num(first)
        );
    }
    if let [seg] = segments {
        return match seg.direction {
            Direction::Up => format!(
                "The time series steadily increases from {} to {}. Overall, the trend is upward.",
                num(first),
                num(last)
            ),
            Direction::Down => format!(
                "The time series steadily decreases from {} to {}. Overall, the trend is downward.",
                num(first),
                num(last)
            ),
            Direction::Flat => format!(
                "The time series remains roughly flat, moving from {} to {} without a clear direction. Overall, the trend is stable.",
                num(first),
                num(last)
            ),
        };
    }

    let net = last - first;
    let overall = if net.abs() <= 0.1 * (hi - lo) {
        "mixed, ending close to where it began"
    } else if net > 0.0 {
        "upward"
    } else {
        "downward"
    };
    let mut text = format!("The time series starts at around {}. It first {}", num(first), clause(&segments[0], values));
    let middle = &segments[1..segments.len() - 1];
    for seg in middle {
        text.push_str(", then ");
        text.push_str(&clause(seg, values));
    }
    let tail = &segments[segments.len() - 1];
    text.push_str(if middle.is_empty() { ", and then " } else { ", and finally " });
    text.push_str(movement(tail));
    text.push_str(&format!(", ending at around {}. Overall, the trend is {overall}.", num(last)));
    text
}

pub fn describe_rules(summary: &TrendSummary) -> Result<TrendDescription, DescriptionError> {
    let segments = segment(&summary.values)?;
    Ok(TrendDescription {
        text: render_text(&summary.values, &segments),
        generator: Generator::Rules,
        model_id: RULES_MODEL_ID.to_string(),
        summary_id: summary.window_id.clone(),
    })
}
