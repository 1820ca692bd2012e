use std::io::Read;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusSplit, Granularity, IngestError, Result, SeriesRecord};

/// Column mapping for CSV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum CsvSchema {
    /// One series per column; every column other than `time_column` holds values.
    Wide {
        time_column: Option<String>,
        granularity: Granularity,
        #[serde(default)]
        start: Option<NaiveDateTime>,
    },
    /// One observation per row.
    Long {
        id_column: String,
        time_column: String,
        value_column: String,
        granularity: Granularity,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum TimeKey {
    At(NaiveDateTime),
    Num(f64),
}

impl TimeKey {
    fn parse(raw: &str) -> Option<TimeKey> {
        let raw = raw.trim();
        for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H-%M-%S"] {
            if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
                return Some(TimeKey::At(t));
            }
        }
        if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            return d.and_hms_opt(0, 0, 0).map(TimeKey::At);
        }
        raw.parse::<f64>().ok().filter(|v| v.is_finite()).map(TimeKey::Num)
    }

    fn datetime(self) -> Option<NaiveDateTime> {
        match self {
            TimeKey::At(t) => Some(t),
            TimeKey::Num(_) => None,
        }
    }

    fn strictly_before(self, next: TimeKey) -> Option<bool> {
        match (self, next) {
            (TimeKey::At(a), TimeKey::At(b)) => Some(a < b),
            (TimeKey::Num(a), TimeKey::Num(b)) => Some(a < b),
            _ => None,
        }
    }
}

fn parse_value(raw: &str, line: usize) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() || raw == "?" || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| IngestError::BadValue {
            line,
            token: raw.to_string(),
        })
}

fn check_increasing(series_id: &str, times: &[TimeKey]) -> Result<()> {
    for (row, pair) in times.windows(2).enumerate() {
        match pair[0].strictly_before(pair[1]) {
            Some(true) => {}
            Some(false) => {
                return Err(IngestError::NonMonotoneTimestamps {
                    series_id: series_id.to_string(),
                    row: row + 1,
                })
            }
            None => {
                return Err(IngestError::SchemaMismatch(format!(
                    "series {series_id}: mixed timestamp kinds"
                )))
            }
        }
    }
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::SchemaMismatch(format!("no column named {name:?}")))
}

fn parse_time(raw: &str, line: usize) -> Result<TimeKey> {
    TimeKey::parse(raw).ok_or_else(|| IngestError::BadValue {
        line,
        token: raw.to_string(),
    })
}

/// Reads a headed CSV file into a corpus named `name`.
pub fn parse_csv<R: Read>(source: R, name: &str, schema: &CsvSchema) -> Result<Corpus> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;

    let records = match schema {
        CsvSchema::Wide {
            time_column,
            granularity,
            start,
        } => {
            let time_idx = time_column.as_deref().map(|c| column(&headers, c)).transpose()?;
            let mut start = *start;
            if let Some(t) = time_idx {
                let times = rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| parse_time(row.get(t).unwrap_or_default(), i + 2))
                    .collect::<Result<Vec<_>>>()?;
                check_increasing("*", &times)?;
                start = times.first().and_then(|t| t.datetime()).or(start);
            }
            let value_cols: Vec<usize> = (0..headers.len()).filter(|&i| Some(i) != time_idx).collect();
            if value_cols.is_empty() {
                return Err(IngestError::SchemaMismatch("no value columns".to_string()));
            }
            value_cols
                .into_iter()
                .map(|c| {
                    let points = rows
                        .iter()
                        .enumerate()
                        .map(|(i, row)| parse_value(row.get(c).unwrap_or_default(), i + 2))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(SeriesRecord::from_options(&headers[c], start, *granularity, points))
                })
                .collect::<Result<Vec<_>>>()?
        }
        CsvSchema::Long {
            id_column,
            time_column,
            value_column,
            granularity,
        } => {
            let id_idx = column(&headers, id_column)?;
            let time_idx = column(&headers, time_column)?;
            let value_idx = column(&headers, value_column)?;
            // (id, times, points) in first-appearance order
            let mut groups: Vec<(String, Vec<TimeKey>, Vec<Option<f64>>)> = Vec::new();
            for (i, row) in rows.iter().enumerate() {
                let line = i + 2;
                let id = row.get(id_idx).unwrap_or_default();
                let time = parse_time(row.get(time_idx).unwrap_or_default(), line)?;
                let value = parse_value(row.get(value_idx).unwrap_or_default(), line)?;
                match groups.iter_mut().find(|g| g.0 == id) {
                    Some(g) => {
                        g.1.push(time);
                        g.2.push(value);
                    }
                    None => groups.push((id.to_string(), vec![time], vec![value])),
                }
            }
            groups
                .into_iter()
                .map(|(id, times, points)| {
                    check_increasing(&id, &times)?;
                    let start = times.first().and_then(|t| t.datetime());
                    Ok(SeriesRecord::from_options(id, start, *granularity, points))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    if let Some(empty) = records.iter().find(|r| r.is_empty()) {
        return Err(IngestError::EmptySeries(empty.series_id.clone()));
    }
    Ok(Corpus {
        name: name.to_string(),
        records,
        split: CorpusSplit::Full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long_schema() -> CsvSchema {
        CsvSchema::Long {
            id_column: "id".into(),
            time_column: "t".into(),
            value_column: "v".into(),
            granularity: Granularity::Daily,
        }
    }

    #[test]
    fn single_column_wide() {
        let schema = CsvSchema::Wide {
            time_column: None,
            granularity: Granularity::Hourly,
            start: None,
        };
        let corpus = parse_csv("load\n5\n5\n5\n".as_bytes(), "c", &schema).unwrap();
        assert_eq!(corpus.records.len(), 1);
        assert_eq!(corpus.records[0].series_id, "load");
        assert_eq!(corpus.records[0].values, vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn wide_with_time_column_sets_start() {
        let schema = CsvSchema::Wide {
            time_column: Some("date".into()),
            granularity: Granularity::Daily,
            start: None,
        };
        let src = "date,a,b\n2021-03-01,1,\n2021-03-02,2,4\n";
        let corpus = parse_csv(src.as_bytes(), "c", &schema).unwrap();
        assert_eq!(corpus.records.len(), 2);
        assert_eq!(corpus.records[1].missing_mask, vec![true, false]);
        assert_eq!(
            corpus.records[0].start.unwrap().date(),
            NaiveDate::from_ymd_opt(2021, 3, 1).unwrap()
        );
    }

    #[test]
    fn duplicated_timestamp_rejected() {
        let src = "id,t,v\na,2020-01-01,1\na,2020-01-01,2\n";
        assert!(matches!(
            parse_csv(src.as_bytes(), "c", &long_schema()),
            Err(IngestError::NonMonotoneTimestamps { row: 1, .. })
        ));
    }

    #[test]
    fn long_format_groups_by_id() {
        let src = "id,t,v\na,1,1\nb,1,10\na,2,2\nb,2,20\nb,3,30\n";
        let corpus = parse_csv(src.as_bytes(), "c", &long_schema()).unwrap();
        assert_eq!(corpus.records.len(), 2);
        assert_eq!(corpus.records[0].values, vec![1.0, 2.0]);
        assert_eq!(corpus.records[1].values, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let src = "id,time,v\na,1,1\n";
        assert!(matches!(
            parse_csv(src.as_bytes(), "c", &long_schema()),
            Err(IngestError::SchemaMismatch(_))
        ));
    }
}
