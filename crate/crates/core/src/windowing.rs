//! Reproducible sampling of single-feature windows from corpora.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, CorpusSplit, Granularity, SeriesRecord};
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_TAU_MIN: usize = 30;
pub const DEFAULT_TAU_MAX: usize = 500;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("no series has a gap-free span of at least {tau_min} steps")]
    NoEligibleSeries { tau_min: usize },
    #[error("invalid window length range [{0}, {1}]")]
    InvalidTauRange(usize, usize),
    #[error("batch size must be at least 1")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowSplit {
    Train,
    Test,
    Holdout,
}

impl From<CorpusSplit> for WindowSplit {
    fn from(split: CorpusSplit) -> Self {
        match split {
            CorpusSplit::Train => WindowSplit::Train,
            CorpusSplit::Test => WindowSplit::Test,
            // a corpus used whole was never split for training
            CorpusSplit::Holdout | CorpusSplit::Full => WindowSplit::Holdout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSource {
    pub corpus: String,
    pub series_id: String,
    pub start_index: usize,
    pub granularity: Granularity,
}

/// A contiguous, gap-free slice of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub values: Vec<f64>,
    pub tau: usize,
    pub source: WindowSource,
    pub split: WindowSplit,
    pub seed: u64,
}

impl Window {
    pub fn new(values: Vec<f64>, source: WindowSource, split: WindowSplit, seed: u64) -> Self {
        Self {
            tau: values.len(),
            values,
            source,
            split,
            seed,
        }
    }

    /// Same provenance, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            tau: values.len(),
            values,
            source: self.source.clone(),
            split: self.split,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TauRange {
    pub min: usize,
    pub max: usize,
}

impl Default for TauRange {
    fn default() -> Self {
        Self {
            min: DEFAULT_TAU_MIN,
            max: DEFAULT_TAU_MAX,
        }
    }
}

impl TauRange {
    pub fn new(min: usize, max: usize) -> Result<Self, WindowError> {
        if min == 0 || min > max {
            return Err(WindowError::InvalidTauRange(min, max));
        }
        Ok(Self { min, max })
    }
}

fn longest_span(record: &SeriesRecord) -> usize {
    record
        .gap_free_spans()
        .iter()
        .map(|(a, b)| b - a)
        .max()
        .unwrap_or(0)
}

fn eligible_series(corpus: &Corpus, tau_min: usize) -> Vec<&SeriesRecord> {
    corpus
        .records
        .iter()
        .filter(|r| longest_span(r) >= tau_min)
        .collect()
}

fn draw<R: Rng>(
    corpora: &[&Corpus],
    eligible: &[Vec<&SeriesRecord>],
    range: TauRange,
    rng: &mut R,
    seed: u64,
) -> Window {
    // corpora with no eligible series were filtered out by the caller
    let c = rng.random_range(0..corpora.len());
    let corpus = corpora[c];
    let series = eligible[c][rng.random_range(0..eligible[c].len())];
    let spans = series.gap_free_spans();
    let longest = spans.iter().map(|(a, b)| b - a).max().unwrap_or(0);
    let tau = rng.random_range(range.min..=range.max.min(longest));
    let offsets: usize = spans
        .iter()
        .filter(|(a, b)| b - a >= tau)
        .map(|(a, b)| b - a - tau + 1)
        .sum();
    let mut pick = rng.random_range(0..offsets);
    let mut start = 0;
    for (a, b) in spans.iter().filter(|(a, b)| b - a >= tau) {
        let count = b - a - tau + 1;
        if pick < count {
            start = a + pick;
            break;
        }
        pick -= count;
    }
    Window::new(
        series.values[start..start + tau].to_vec(),
        WindowSource {
            corpus: corpus.name.clone(),
            series_id: series.series_id.clone(),
            start_index: start,
            granularity: series.granularity,
        },
        corpus.split.into(),
        seed,
    )
}

struct Sampler<'a> {
    corpora: Vec<&'a Corpus>,
    eligible: Vec<Vec<&'a SeriesRecord>>,
    range: TauRange,
}

impl<'a> Sampler<'a> {
    fn new(corpora: &'a [Corpus], range: TauRange) -> Result<Self, WindowError> {
        let (corpora, eligible): (Vec<_>, Vec<_>) = corpora
            .iter()
            .map(|c| (c, eligible_series(c, range.min)))
            .filter(|(_, e)| !e.is_empty())
            .unzip();
        if corpora.is_empty() {
            return Err(WindowError::NoEligibleSeries { tau_min: range.min });
        }
        Ok(Self {
            corpora,
            eligible,
            range,
        })
    }

    fn sample(&self, seed: u64) -> Window {
        let mut rng = rng_from_seed(seed);
        draw(&self.corpora, &self.eligible, self.range, &mut rng, seed)
    }
}

/// Draws one window: a series uniformly among those with a long enough
/// gap-free span, a length uniformly in range, then a uniform start offset.
pub fn sample_window(corpus: &Corpus, seed: u64, range: TauRange) -> Result<Window, WindowError> {
    Ok(Sampler::new(std::slice::from_ref(corpus), range)?.sample(seed))
}

/// Per (dataset, granularity) sample counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub dataset: String,
    pub granularity: Granularity,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub rows: Vec<ManifestRow>,
    pub total: usize,
}

impl SampleManifest {
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a Window>) -> Self {
        let mut counts: BTreeMap<(String, Granularity), usize> = BTreeMap::new();
        for w in windows {
            *counts
                .entry((w.source.corpus.clone(), w.source.granularity))
                .or_default() += 1;
        }
        let rows: Vec<ManifestRow> = counts
            .into_iter()
            .map(|((dataset, granularity), count)| ManifestRow {
                dataset,
                granularity,
                count,
            })
            .collect();
        let total = rows.iter().map(|r| r.count).sum();
        Self { rows, total }
    }
}

#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub windows: Vec<Window>,
    pub manifest: SampleManifest,
}

/// Draws `n` windows across `corpora`. Window `i` uses the seed
/// `derive_seed(seed, i)`, so any index can be regenerated on its own and the
/// batch is identical however the work is scheduled. Corpora are picked
/// uniformly among those holding an eligible series.
pub fn sample_batch(
    corpora: &[Corpus],
    n: usize,
    seed: u64,
    range: TauRange,
) -> Result<WindowBatch, WindowError> {
    if n == 0 {
        return Err(WindowError::EmptyBatch);
    }
    let sampler = Sampler::new(corpora, range)?;
    let windows: Vec<Window> = (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(derive_seed(seed, i)))
        .collect();
    let manifest = SampleManifest::from_windows(&windows);
    Ok(WindowBatch { windows, manifest })
}
