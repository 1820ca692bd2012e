//! Reader and writer for the `.tsf` text format used by the Monash
//! forecasting archive.

use std::io::{BufRead, Write};

use chrono::NaiveDateTime;

use super::{Corpus, CorpusSplit, Granularity, IngestError, Result, SeriesRecord};

const TSF_TIME_FORMAT: &str = "%Y-%m-%d %H-%M-%S";

#[derive(Debug, Clone, PartialEq)]
enum AttrKind {
    Name,
    Date,
    Other,
}

/// Parses a `.tsf` document. The corpus takes its name from `@relation`.
pub fn parse_tsf<R: BufRead>(source: R) -> Result<Corpus> {
    let mut relation = None;
    let mut frequency = None;
    let mut attrs: Vec<AttrKind> = Vec::new();
    let mut in_data = false;
    let mut records = Vec::new();

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !in_data {
            if !trimmed.starts_with('@') {
                return Err(IngestError::MalformedHeader(format!(
                    "line {line_no}: expected a header directive before @data"
                )));
            }
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_lowercase();
            match key.as_str() {
                "@relation" => relation = parts.next().map(str::to_string),
                "@attribute" => {
                    let name = parts.next().unwrap_or_default();
                    let ty = parts.next().unwrap_or_default();
                    attrs.push(match (name, ty) {
                        ("series_name", _) => AttrKind::Name,
                        (_, "date") => AttrKind::Date,
                        _ => AttrKind::Other,
                    });
                }
                "@frequency" => {
                    let raw = parts.next().unwrap_or_default();
                    frequency = Some(
                        raw.parse::<Granularity>()
                            .map_err(IngestError::UnknownFrequency)?,
                    );
                }
                "@data" => in_data = true,
                _ => {}
            }
            continue;
        }

        let granularity = frequency.ok_or_else(|| {
            IngestError::MalformedHeader("missing @frequency directive".to_string())
        })?;
        let fields: Vec<&str> = trimmed.splitn(attrs.len() + 1, ':').collect();
        if fields.len() != attrs.len() + 1 {
            return Err(IngestError::MalformedHeader(format!(
                "line {line_no}: expected {} attribute fields before the values",
                attrs.len()
            )));
        }
        let mut series_id = None;
        let mut start = None;
        for (kind, field) in attrs.iter().zip(&fields) {
            match kind {
                AttrKind::Name => series_id = Some(field.to_string()),
                AttrKind::Date => {
                    start = Some(NaiveDateTime::parse_from_str(field, TSF_TIME_FORMAT).map_err(
                        |_| IngestError::BadValue {
                            line: line_no,
                            token: field.to_string(),
                        },
                    )?)
                }
                AttrKind::Other => {}
            }
        }
        let series_id = series_id.unwrap_or_else(|| format!("T{}", records.len() + 1));
        let body = fields[attrs.len()];
        if body.trim().is_empty() {
            return Err(IngestError::EmptySeries(series_id));
        }
        let points = body
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                if tok == "?" {
                    return Ok(None);
                }
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| IngestError::BadValue {
                        line: line_no,
                        token: tok.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SeriesRecord::from_options(series_id, start, granularity, points));
    }

    if !in_data {
        return Err(IngestError::MalformedHeader("missing @data section".to_string()));
    }
    Ok(Corpus {
        name: relation.unwrap_or_else(|| "unnamed".to_string()),
        records,
        split: CorpusSplit::Full,
    })
}

/// Writes a corpus as `.tsf`. Start timestamps are emitted only when every
/// record carries one.
pub fn write_tsf<W: Write>(corpus: &Corpus, mut sink: W) -> Result<()> {
    let granularity = corpus.granularity().unwrap_or(Granularity::Daily);
    let with_dates = corpus.records.iter().all(|r| r.start.is_some());
    let has_missing = corpus.records.iter().any(|r| r.missing_mask.contains(&true));
    let equal_length = corpus
        .records
        .windows(2)
        .all(|w| w[0].len() == w[1].len());

    writeln!(sink, "@relation {}", corpus.name)?;
    writeln!(sink, "@attribute series_name string")?;
    if with_dates {
        writeln!(sink, "@attribute start_timestamp date")?;
    }
    writeln!(sink, "@frequency {}", granularity.tsf_name())?;
    writeln!(sink, "@missing {has_missing}")?;
    writeln!(sink, "@equallength {equal_length}")?;
    writeln!(sink, "@data")?;
    for record in &corpus.records {
        write!(sink, "{}:", record.series_id)?;
        if let Some(start) = record.start.filter(|_| with_dates) {
            write!(sink, "{}:", start.format(TSF_TIME_FORMAT))?;
        }
        let body: Vec<String> = record
            .points()
            .map(|p| p.map_or_else(|| "?".to_string(), |v| format!("{v:?}")))
            .collect();
        writeln!(sink, "{}", body.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "@relation toy\n@attribute series_name string\n\
        @attribute start_timestamp date\n@frequency daily\n@data\n\
        s1:2020-01-01 00-00-00:1.0,2.0,3.0\n";

    #[test]
    fn parses_minimal_file() {
        let corpus = parse_tsf(MINIMAL.as_bytes()).unwrap();
        assert_eq!(corpus.name, "toy");
        assert_eq!(corpus.records.len(), 1);
        assert_eq!(corpus.records[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(corpus.records[0].granularity, Granularity::Daily);
        assert!(corpus.records[0].start.is_some());
    }

    #[test]
    fn question_mark_is_missing() {
        let src = MINIMAL.replace("1.0,2.0,3.0", "1.0,?,3.0");
        let corpus = parse_tsf(src.as_bytes()).unwrap();
        assert_eq!(corpus.records[0].missing_mask, vec![false, true, false]);
        assert_eq!(corpus.records[0].point(1), None);
    }

    #[test]
    fn missing_data_section() {
        let src = "@relation toy\n@frequency daily\n";
        assert!(matches!(parse_tsf(src.as_bytes()), Err(IngestError::MalformedHeader(_))));
    }

    #[test]
    fn non_numeric_token() {
        let src = MINIMAL.replace("2.0", "abc");
        match parse_tsf(src.as_bytes()) {
            Err(IngestError::BadValue { line, token }) => {
                assert_eq!(line, 6);
                assert_eq!(token, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_frequency() {
        let src = MINIMAL.replace("daily", "fortnightly");
        assert!(matches!(parse_tsf(src.as_bytes()), Err(IngestError::UnknownFrequency(_))));
    }

    #[test]
    fn no_date_attribute() {
        let src = "@relation m\n@attribute series_name string\n@frequency yearly\n@data\nA:1,2\nB:3\n";
        let corpus = parse_tsf(src.as_bytes()).unwrap();
        assert_eq!(corpus.records.len(), 2);
        assert!(corpus.records[0].start.is_none());
        assert_eq!(corpus.records[1].values, vec![3.0]);
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        let point = prop_oneof![9 => (-1e9f64..1e9).prop_map(Some), 1 => Just(None)];
        let record = (prop::collection::vec(point, 1..40), 0i64..100_000);
        prop::collection::vec(record, 1..5).prop_map(|recs| {
            let records = recs
                .into_iter()
                .enumerate()
                .map(|(i, (points, minutes))| {
                    let start = chrono::DateTime::from_timestamp(minutes * 3600, 0)
                        .unwrap()
                        .naive_utc();
                    SeriesRecord::from_options(format!("T{i}"), Some(start), Granularity::Hourly, points)
                })
                .collect();
            Corpus::new("prop", records)
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(corpus in arb_corpus()) {
            let mut buf = Vec::new();
            write_tsf(&corpus, &mut buf).unwrap();
            let back = parse_tsf(buf.as_slice()).unwrap();
            prop_assert_eq!(back, corpus);
        }
    }
}
