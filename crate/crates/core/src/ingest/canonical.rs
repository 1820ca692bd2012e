//! Line-delimited corpus file: one JSON object per series.

use std::io::{BufRead, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusSplit, Granularity, IngestError, Result, SeriesRecord};

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalLine {
    id: String,
    start: Option<NaiveDateTime>,
    granularity: Granularity,
    values: Vec<Option<f64>>,
}

pub fn write_canonical<W: Write>(corpus: &Corpus, mut sink: W) -> Result<()> {
    for record in &corpus.records {
        let line = CanonicalLine {
            id: record.series_id.clone(),
            start: record.start,
            granularity: record.granularity,
            values: record.points().collect(),
        };
        serde_json::to_writer(&mut sink, &line)
            .map_err(|source| IngestError::Json { line: 0, source })?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_canonical<R: BufRead>(source: R, name: &str) -> Result<Corpus> {
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CanonicalLine = serde_json::from_str(&line)
            .map_err(|source| IngestError::Json { line: idx + 1, source })?;
        if parsed.values.is_empty() {
            return Err(IngestError::EmptySeries(parsed.id));
        }
        records.push(SeriesRecord::from_options(
            parsed.id,
            parsed.start,
            parsed.granularity,
            parsed.values,
        ));
    }
    if let Some(first) = records.first() {
        let g = first.granularity;
        if let Some(bad) = records.iter().find(|r| r.granularity != g) {
            return Err(IngestError::SchemaMismatch(format!(
                "series {} is {} but the corpus is {g}",
                bad.series_id, bad.granularity
            )));
        }
    }
    Ok(Corpus {
        name: name.to_string(),
        records,
        split: CorpusSplit::Full,
    })
}
