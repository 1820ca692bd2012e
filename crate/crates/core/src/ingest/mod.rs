//! Corpus loading, temporal train/test split and granularity aggregation.
//!
//! A [`SeriesRecord`] keeps its timeline as a start timestamp plus a fixed
//! [`Granularity`] step; individual points carry no timestamp of their own.
//! Missing points hold `NaN` in `values` and are flagged in `missing_mask`.

mod canonical;
mod csv;
mod granularity;
mod tsf;

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::canonical::{read_canonical, write_canonical};
pub use self::csv::{parse_csv, CsvSchema};
pub use self::granularity::{Granularity, Step};
pub use self::tsf::{parse_tsf, write_tsf};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("bad value {token:?} on line {line}")]
    BadValue { line: usize, token: String },
    #[error("unknown frequency {0:?}")]
    UnknownFrequency(String),
    #[error("series {series_id}: timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { series_id: String, row: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("series {0} is empty")]
    EmptySeries(String),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("aggregation factor {factor} exceeds series length {len}")]
    FactorTooLarge { factor: usize, len: usize },
    #[error("{granularity} aggregated by {factor} has no named granularity")]
    UnnamedGranularity {
        granularity: Granularity,
        factor: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("json on line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// One named univariate series.
#[derive(Debug, Clone)]
pub struct SeriesRecord {
    pub series_id: String,
    pub start: Option<NaiveDateTime>,
    pub granularity: Granularity,
    /// `NaN` at missing positions.
    pub values: Vec<f64>,
    pub missing_mask: Vec<bool>,
}

impl SeriesRecord {
    /// Builds a gap-free record.
    pub fn new(
        series_id: impl Into<String>,
        start: Option<NaiveDateTime>,
        granularity: Granularity,
        values: Vec<f64>,
    ) -> Self {
        let missing_mask = values.iter().map(|v| !v.is_finite()).collect();
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Self {
            series_id: series_id.into(),
            start,
            granularity,
            values,
            missing_mask,
        }
    }

    /// Builds a record from optional points, `None` marking a missing step.
    pub fn from_options(
        series_id: impl Into<String>,
        start: Option<NaiveDateTime>,
        granularity: Granularity,
        points: impl IntoIterator<Item = Option<f64>>,
    ) -> Self {
        let (values, missing_mask) = points
            .into_iter()
            .map(|p| match p {
                Some(v) if v.is_finite() => (v, false),
                _ => (f64::NAN, true),
            })
            .unzip();
        Self {
            series_id: series_id.into(),
            start,
            granularity,
            values,
            missing_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> Option<f64> {
        (!self.missing_mask[i]).then_some(self.values[i])
    }

    pub fn points(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Maximal runs `[start, end)` without missing values.
    pub fn gap_free_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut run_start = None;
        for (i, &missing) in self.missing_mask.iter().enumerate() {
            match (missing, run_start) {
                (false, None) => run_start = Some(i),
                (true, Some(s)) => {
                    spans.push((s, i));
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            spans.push((s, self.len()));
        }
        spans
    }

    /// Copy of steps `[from, to)` with the start timestamp advanced accordingly.
    pub fn slice(&self, from: usize, to: usize) -> SeriesRecord {
        SeriesRecord {
            series_id: self.series_id.clone(),
            start: self.start.and_then(|s| self.granularity.advance(s, from as i64)),
            granularity: self.granularity,
            values: self.values[from..to].to_vec(),
            missing_mask: self.missing_mask[from..to].to_vec(),
        }
    }
}

impl PartialEq for SeriesRecord {
    fn eq(&self, other: &Self) -> bool {
        self.series_id == other.series_id
            && self.start == other.start
            && self.granularity == other.granularity
            && self.missing_mask == other.missing_mask
            && self.points().eq(other.points())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSplit {
    Train,
    Test,
    Holdout,
    Full,
}

impl fmt::Display for CorpusSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusSplit::Train => "train",
            CorpusSplit::Test => "test",
            CorpusSplit::Holdout => "holdout",
            CorpusSplit::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub records: Vec<SeriesRecord>,
    pub split: CorpusSplit,
}

impl Corpus {
    pub fn new(name: impl Into<String>, records: Vec<SeriesRecord>) -> Self {
        Self {
            name: name.into(),
            records,
            split: CorpusSplit::Full,
        }
    }

    /// Shared granularity, `None` for an empty corpus.
    pub fn granularity(&self) -> Option<Granularity> {
        self.records.first().map(|r| r.granularity)
    }
}

/// Outcome of a temporal split. Series whose train prefix would be empty
/// are left out of `train` and listed in `empty_train`.
#[derive(Debug, Clone)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub test: Corpus,
    pub empty_train: Vec<String>,
}

/// Splits every series at `floor(ratio * T)`: the prefix goes to train, the
/// remainder to test.
pub fn train_split(corpus: &Corpus, ratio: f64) -> Result<SplitCorpus> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::InvalidRatio(ratio));
    }
    let mut train = Vec::with_capacity(corpus.records.len());
    let mut test = Vec::with_capacity(corpus.records.len());
    let mut empty_train = Vec::new();
    for record in &corpus.records {
        let len = record.len();
        if len == 0 {
            return Err(IngestError::EmptySeries(record.series_id.clone()));
        }
        let cut = (ratio * len as f64).floor() as usize;
        if cut == 0 {
            empty_train.push(record.series_id.clone());
        } else {
            train.push(record.slice(0, cut));
        }
        if cut < len {
            test.push(record.slice(cut, len));
        }
    }
    Ok(SplitCorpus {
        train: Corpus {
            name: corpus.name.clone(),
            records: train,
            split: CorpusSplit::Train,
        },
        test: Corpus {
            name: corpus.name.clone(),
            records: test,
            split: CorpusSplit::Test,
        },
        empty_train,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Mean,
    Sum,
}

/// Merges each run of `factor` consecutive steps into one. A trailing
/// remainder shorter than `factor` is dropped; a bucket is missing only if
/// every step in it is missing.
pub fn aggregate(record: &SeriesRecord, factor: usize, reducer: Reducer) -> Result<SeriesRecord> {
    let len = record.len();
    if factor == 0 || factor > len {
        return Err(IngestError::FactorTooLarge { factor, len });
    }
    let granularity =
        record
            .granularity
            .scaled(factor)
            .ok_or(IngestError::UnnamedGranularity {
                granularity: record.granularity,
                factor,
            })?;
    let points = (0..len / factor).map(|b| {
        let (sum, count) = (b * factor..(b + 1) * factor)
            .filter_map(|i| record.point(i))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        match (count, reducer) {
            (0, _) => None,
            (_, Reducer::Sum) => Some(sum),
            (c, Reducer::Mean) => Some(sum / c as f64),
        }
    });
    Ok(SeriesRecord::from_options(
        record.series_id.clone(),
        record.start,
        granularity,
        points,
    ))
}

/// Aggregates every record of a corpus, keeping the corpus name.
pub fn aggregate_corpus(corpus: &Corpus, factor: usize, reducer: Reducer) -> Result<Corpus> {
    let records = corpus
        .records
        .iter()
        .filter(|r| r.len() >= factor)
        .map(|r| aggregate(r, factor, reducer))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        name: corpus.name.clone(),
        records,
        split: corpus.split,
    })
}

/// Suffix of the JSON [`CsvSchema`] sidecar that must accompany a `.csv` file.
pub const CSV_SCHEMA_SUFFIX: &str = ".schema.json";

/// Loads one corpus file, dispatching on its extension: `.tsf`, `.jsonl`
/// (canonical records) or `.csv` with a `<stem>.schema.json` sidecar. Corpora
/// without an embedded name are named after the file stem.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or_default();
    match ext {
        "tsf" => {
            let mut corpus = parse_tsf(BufReader::new(File::open(path)?))?;
            if corpus.name.is_empty() {
                corpus.name = stem;
            }
            Ok(corpus)
        }
        "jsonl" => read_canonical(BufReader::new(File::open(path)?), &stem),
        "csv" => {
            let sidecar = path.with_file_name(format!("{stem}{CSV_SCHEMA_SUFFIX}"));
            let schema: CsvSchema = serde_json::from_slice(&std::fs::read(&sidecar)?)
                .map_err(|e| IngestError::SchemaMismatch(format!("{}: {e}", sidecar.display())))?;
            parse_csv(File::open(path)?, &stem, &schema)
        }
        other => Err(IngestError::SchemaMismatch(format!(
            "unsupported corpus file extension {other:?}"
        ))),
    }
}

/// Every corpus file directly inside `dir`, ordered by file name. Files with
/// other extensions (including schema sidecars) are ignored.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<Corpus>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.is_file()
            && matches!(
                p.extension().and_then(|s| s.to_str()),
                Some("tsf" | "jsonl" | "csv")
            )
    });
    paths.sort();
    paths.iter().map(|p| load_corpus(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> SeriesRecord {
        SeriesRecord::new("s", None, Granularity::Hourly, (0..n).map(|i| i as f64).collect())
    }

    #[test]
    fn corpus_dir_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::write(
            d.join("b.tsf"),
            "@relation tourism\n@attribute series_name string\n@attribute start_timestamp date\n@frequency monthly\n@data\ns1:2000-01-01 00-00-00:1,2,3\n",
        )
        .unwrap();
        std::fs::write(d.join("a.csv"), "v\n5\n5\n5\n").unwrap();
        std::fs::write(
            d.join("a.schema.json"),
            r#"{"layout":"wide","time_column":null,"granularity":"daily"}"#,
        )
        .unwrap();
        std::fs::write(d.join("notes.txt"), "ignored").unwrap();
        let corpora = load_corpus_dir(d).unwrap();
        assert_eq!(corpora.len(), 2);
        assert_eq!(corpora[0].name, "a");
        assert_eq!(corpora[0].records[0].values, vec![5.0; 3]);
        assert_eq!(corpora[1].name, "tourism");
        assert!(matches!(load_corpus(&d.join("notes.txt")), Err(IngestError::SchemaMismatch(_))));
    }

    #[test]
    fn split_lengths() {
        for (t, ratio, expected) in [(10, 0.7, (7, 3)), (100, 0.5, (50, 50))] {
            let corpus = Corpus::new("c", vec![ramp(t)]);
            let split = train_split(&corpus, ratio).unwrap();
            assert_eq!(split.train.records[0].len(), expected.0);
            assert_eq!(split.test.records[0].len(), expected.1);
            assert_eq!(split.train.split, CorpusSplit::Train);
        }
    }

    #[test]
    fn split_single_step_flags_empty_train() {
        let corpus = Corpus::new("c", vec![ramp(1)]);
        let split = train_split(&corpus, 0.7).unwrap();
        assert!(split.train.records.is_empty());
        assert_eq!(split.empty_train, vec!["s".to_string()]);
        assert_eq!(split.test.records[0].len(), 1);
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let corpus = Corpus::new("c", vec![ramp(3)]);
        assert!(matches!(train_split(&corpus, 1.0), Err(IngestError::InvalidRatio(_))));
        assert!(matches!(train_split(&corpus, 0.0), Err(IngestError::InvalidRatio(_))));
    }

    #[test]
    fn split_advances_test_start() {
        let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let record = SeriesRecord::new("s", Some(start), Granularity::Daily, vec![1.0; 10]);
        let split = train_split(&Corpus::new("c", vec![record]), 0.7).unwrap();
        let test_start = split.test.records[0].start.unwrap();
        assert_eq!(test_start, start + chrono::Duration::days(7));
    }

    #[test]
    fn aggregate_mean_pairs() {
        let record = SeriesRecord::new("s", None, Granularity::HalfHourly, vec![1.0, 2.0, 3.0, 4.0]);
        let out = aggregate(&record, 2, Reducer::Mean).unwrap();
        assert_eq!(out.values, vec![1.5, 3.5]);
        assert_eq!(out.granularity, Granularity::Hourly);
    }

    #[test]
    fn aggregate_identity_and_daily() {
        let record = ramp(96);
        let same = aggregate(&record, 1, Reducer::Mean).unwrap();
        assert_eq!(same, record);
        let half = SeriesRecord::new("s", None, Granularity::HalfHourly, vec![0.0; 96]);
        let daily = aggregate(&half, 48, Reducer::Sum).unwrap();
        assert_eq!(daily.granularity, Granularity::Daily);
        assert_eq!(daily.len(), 2);
    }

    #[test]
    fn aggregate_factor_too_large() {
        assert!(matches!(
            aggregate(&ramp(3), 4, Reducer::Mean),
            Err(IngestError::FactorTooLarge { factor: 4, len: 3 })
        ));
    }

    #[test]
    fn aggregate_missing_bucket_only_when_all_missing() {
        let record = SeriesRecord::from_options(
            "s",
            None,
            Granularity::Hourly,
            [None, Some(2.0), None, None],
        );
        let out = aggregate(&record, 2, Reducer::Mean).unwrap();
        assert_eq!(out.point(0), Some(2.0));
        assert_eq!(out.point(1), None);
    }

    #[test]
    fn gap_free_spans_found() {
        let record = SeriesRecord::from_options(
            "s",
            None,
            Granularity::Hourly,
            [Some(1.0), Some(1.0), None, Some(2.0), None, None, Some(3.0)],
        );
        assert_eq!(record.gap_free_spans(), vec![(0, 2), (3, 4), (6, 7)]);
    }

    proptest! {
        #[test]
        fn split_concatenation_reproduces(values in prop::collection::vec(-1e6f64..1e6, 2..300), ratio in 0.05f64..0.95) {
            let record = SeriesRecord::new("s", None, Granularity::Daily, values.clone());
            let split = train_split(&Corpus::new("c", vec![record]), ratio).unwrap();
            let mut joined: Vec<f64> = split.train.records.iter().flat_map(|r| r.values.clone()).collect();
            joined.extend(split.test.records.iter().flat_map(|r| r.values.clone()));
            prop_assert_eq!(joined, values.clone());
            let expected = (ratio * values.len() as f64).floor() as usize;
            prop_assert_eq!(split.train.records.first().map_or(0, |r| r.len()), expected);
        }

        #[test]
        fn aggregate_length_and_constant(len in 1usize..400, factor in 1usize..8, c in -1e3f64..1e3) {
            prop_assume!(factor <= len);
            let record = SeriesRecord::new("s", None, Granularity::HalfHourly, vec![c; len]);
            match aggregate(&record, factor, Reducer::Mean) {
                Ok(out) => {
                    prop_assert_eq!(out.len(), len / factor);
                    for v in &out.values {
                        prop_assert!((v - c).abs() <= 1e-9 * c.abs().max(1.0));
                    }
                }
                Err(IngestError::UnnamedGranularity { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
